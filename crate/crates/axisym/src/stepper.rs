//! Time stepping: right-hand side with the filtering schedule, CFL step size,
//! Heun RK2 and the run loop with adaptive mesh updates.

use ndarray::Zip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsError, DiagnosticsRecord};
use crate::fields::{self, FieldGrid, Flow, NuFields};
use crate::filters::{coarse_mesh, lpf, rlpf, Strength};
use crate::meshmap::{build_adaptive_mesh, interpolate_ip4, Front, Mesh2, MeshError, MeshMonitor, UpdateThresholds};
use crate::physics::{self, DiffusionSpec, InitialDataParams, PhysicsError};
use crate::poisson::{BasisSpec, PoissonError, PoissonSolver, Weight};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("non-finite values at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("case must be 1, 2, 3 or 4, got {0}")]
    Case(u8),
    #[error("cfl must lie in (0, 1), got {0}")]
    Cfl(f64),
    #[error("mesh resolution {0}x{1} is too small (need n, m >= 8)")]
    Resolution(usize, usize),
    #[error("{0} must be nonnegative and finite, got {1}")]
    Negative(&'static str, f64),
}

/// Diffusion and regularization variant of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Case {
    /// Degenerate variable diffusion.
    Degenerate,
    /// Constant diffusion `mu`.
    Constant(f64),
    /// No diffusion.
    Inviscid,
    /// Degenerate diffusion plus `k` re-meshed filter passes on the stream-function derivatives.
    Regularized(usize),
}

impl Case {
    pub fn number(&self) -> u8 {
        match self {
            Case::Degenerate => 1,
            Case::Constant(_) => 2,
            Case::Inviscid => 3,
            Case::Regularized(_) => 4,
        }
    }

    pub fn diffusion(&self, tdp_scale: f64) -> DiffusionSpec {
        match *self {
            Case::Degenerate | Case::Regularized(_) => DiffusionSpec::Degenerate { tdp_scale },
            Case::Constant(mu) => DiffusionSpec::Constant(mu),
            Case::Inviscid => DiffusionSpec::Inviscid,
        }
    }
}

/// Which regularizations a right-hand-side evaluation applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterPlan {
    /// Smooth `u_1, omega_1` before use, and `psi_1` and its derivatives after the solve.
    pub smoothing: bool,
    /// Re-meshed passes on `psi_{1,r}, psi_{1,z}` and the coarse resolution `(N, M)`.
    pub rlpf: Option<(usize, usize, usize)>,
}

impl FilterPlan {
    pub fn none() -> Self {
        FilterPlan { smoothing: false, rlpf: None }
    }

    /// Schedule for a case on an `(n, m)` mesh; the coarse mesh is `m x m`.
    pub fn standard(case: Case, m: usize) -> Self {
        let rlpf = match case {
            Case::Regularized(k) if k > 0 => Some((k, m, m)),
            _ => None,
        };
        FilterPlan { smoothing: true, rlpf }
    }
}

/// Prognostic state on its mesh.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub u1: FieldGrid,
    pub w1: FieldGrid,
    pub mesh: Mesh2,
}

/// Time derivatives and the flow they were computed with.
#[derive(Clone, Debug)]
pub struct Tendencies {
    pub du1: FieldGrid,
    pub dw1: FieldGrid,
    pub flow: Flow,
}

/// Bound that selected the time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DtBranch {
    Convective,
    Diffusive,
}

pub const VELOCITY_FLOOR: f64 = 1e-30;

/// CFL step `min(delta_1, delta_2)` with the bound that attained it.
pub fn compute_dt(flow: &Flow, nu: &NuFields, mesh: &Mesh2, cfl: f64) -> (f64, DtBranch) {
    let (hr, hz) = (mesh.r.h(), mesh.z.h());
    let (dr, dz) = (mesh.r.node_d1(), mesh.z.node_d1());
    let mut conv = f64::INFINITY;
    let mut diff = f64::INFINITY;
    Zip::indexed(&flow.ur.values)
        .and(&flow.uz.values)
        .and(&nu.nr)
        .and(&nu.nz)
        .for_each(|(i, j), &a, &b, &nr, &nz| {
            let (lr, lz) = (hr * dr[i], hz * dz[j]);
            conv = conv.min(lr / a.abs().max(VELOCITY_FLOOR)).min(lz / b.abs().max(VELOCITY_FLOOR));
            if nr > 0.0 {
                diff = diff.min(lr * lr / nr);
            }
            if nz > 0.0 {
                diff = diff.min(lz * lz / nz);
            }
        });
    if diff < conv {
        (cfl * diff, DtBranch::Diffusive)
    } else {
        (cfl * conv, DtBranch::Convective)
    }
}

/// Evaluates right-hand sides; owns the Poisson factorization cache and the
/// re-meshed filter's coarse mesh.
pub struct Solver {
    pub case: Case,
    pub diffusion: DiffusionSpec,
    pub plan: FilterPlan,
    pub cfl: f64,
    poisson: PoissonSolver,
    coarse: Option<Mesh2>,
    rlpf_calls: usize,
}

/// Outcome of one time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub branch: DtBranch,
    pub mesh_updated: bool,
    /// `||u_1||` after the step over `||u_1||` before.
    pub growth: f64,
}

fn axpy(a: &FieldGrid, s: f64, b: &FieldGrid) -> FieldGrid {
    let mut out = a.clone();
    Zip::from(&mut out.values).and(&b.values).par_for_each(|o, &v| *o += s * v);
    out
}

impl Solver {
    pub fn new(case: Case, tdp_scale: f64, plan: FilterPlan, cfl: f64, weight: Weight) -> Self {
        Solver {
            case,
            diffusion: case.diffusion(tdp_scale),
            plan,
            cfl,
            poisson: PoissonSolver::new(BasisSpec { order: 2, weight }),
            coarse: None,
            rlpf_calls: 0,
        }
    }

    /// Number of re-meshed filter applications so far.
    pub fn rlpf_calls(&self) -> usize {
        self.rlpf_calls
    }

    pub fn poisson(&mut self) -> &mut PoissonSolver {
        &mut self.poisson
    }

    /// Rebuilds the coarse mesh of the re-meshed filter from the current front.
    pub fn refresh_coarse_mesh(&mut self, front: &Front) -> Result<(), MeshError> {
        if let Some((_, nn, mm)) = self.plan.rlpf {
            self.coarse = Some(coarse_mesh(front, nn, mm)?);
        }
        Ok(())
    }

    /// Diffusion coefficients with the time-dependent part frozen at this state.
    pub fn nu_fields(&self, w1: &FieldGrid, mesh: &Mesh2) -> Result<NuFields, PhysicsError> {
        if let DiffusionSpec::Inviscid = self.diffusion {
            return Ok(NuFields::zeros(mesh.n(), mesh.m()));
        }
        let r = mesh.r.nodes();
        let wt = Zip::indexed(&w1.values).fold(0.0_f64, |m, (i, _), &v| m.max((r[i] * v).abs()));
        physics::nu_fields(&self.diffusion, mesh, wt)
    }

    /// Filtered stream function, derivatives and velocity for a vorticity field.
    pub fn flow(&mut self, w1: &FieldGrid, mesh: &Mesh2) -> Result<Flow, StepError> {
        let mut psi = self.poisson.solve(mesh, w1)?;
        if !self.plan.smoothing {
            return Ok(Flow::from_stream(psi, mesh));
        }
        psi = lpf(&psi, Strength::Uniform(1.0));
        // The wall extrapolation closure would otherwise move psi off its zero wall value.
        let n = mesh.n();
        psi.values.row_mut(n).fill(0.0);
        let mut psi_r = fields::ddr(&psi, mesh);
        let mut psi_z = fields::ddz(&psi, mesh);
        if let (Some((k, _, _)), Some(coarse)) = (self.plan.rlpf, &self.coarse) {
            psi_r = rlpf(&psi_r, mesh, coarse, k, Strength::LShape)?;
            psi_z = rlpf(&psi_z, mesh, coarse, k, Strength::LShape)?;
            self.rlpf_calls += 2;
        }
        let mut psi_r = lpf(&psi_r, Strength::Uniform(1.0));
        let mut psi_z = lpf(&psi_z, Strength::Uniform(1.0));
        psi_r.project_parity();
        psi_z.project_parity();
        Ok(Flow::from_derivatives(psi, psi_r, psi_z, mesh))
    }

    /// Time derivatives of `(u_1, omega_1)` evaluated on the filtered fields.
    pub fn rhs(&mut self, u1: &FieldGrid, w1: &FieldGrid, nu: &NuFields, mesh: &Mesh2) -> Result<Tendencies, StepError> {
        let (u, w) = if self.plan.smoothing {
            let pre = |f: &FieldGrid| lpf(&lpf(f, Strength::Uniform(0.1)), Strength::LShape);
            (pre(u1), pre(w1))
        } else {
            (u1.clone(), w1.clone())
        };
        let flow = self.flow(&w, mesh)?;
        let (u_r, u_z) = (fields::ddr(&u, mesh), fields::ddz(&u, mesh));
        let (w_r, w_z) = (fields::ddr(&w, mesh), fields::ddz(&w, mesh));
        let mut du1 = fields::diffusion_u1(&u, nu, mesh);
        let mut dw1 = fields::diffusion_w1(&w, &flow.psi_z, &flow.uz, nu, mesh);
        let (a, b) = (&flow.ur.values, &flow.uz.values);
        Zip::indexed(&mut du1.values).and(&mut dw1.values).par_for_each(|ij, du, dw| {
            let uu = u.values[ij];
            *du += -(a[ij] * u_r.values[ij] + b[ij] * u_z.values[ij]) + 2.0 * uu * flow.psi_z.values[ij];
            *dw += -(a[ij] * w_r.values[ij] + b[ij] * w_z.values[ij]) + 2.0 * uu * u_z.values[ij];
        });
        let n = mesh.n();
        for j in 0..=mesh.m() {
            du1.values[[n, j]] = 0.0;
        }
        du1.project_parity();
        dw1.project_parity();
        Ok(Tendencies { du1, dw1, flow })
    }

    /// One Heun step of size `dt` with precomputed stage-0 tendencies.
    pub fn advance(
        &mut self,
        state: &State,
        k1: &Tendencies,
        nu: &NuFields,
        dt: f64,
    ) -> Result<(FieldGrid, FieldGrid), StepError> {
        let mesh = &state.mesh;
        let mut u = axpy(&state.u1, dt, &k1.du1);
        let mut w = axpy(&state.w1, dt, &k1.dw1);
        fields::enforce_boundary(&mut u, &mut w, &k1.flow.psi, mesh);
        let k2 = self.rhs(&u, &w, nu, mesh)?;
        let mut u = axpy(&axpy(&state.u1, 0.5 * dt, &k1.du1), 0.5 * dt, &k2.du1);
        let mut w = axpy(&axpy(&state.w1, 0.5 * dt, &k1.dw1), 0.5 * dt, &k2.dw1);
        fields::enforce_boundary(&mut u, &mut w, &k2.flow.psi, mesh);
        if !(u.is_finite() && w.is_finite()) {
            return Err(StepError::NonFinite { t: state.t + dt });
        }
        Ok((u, w))
    }

    /// One CFL-limited Heun step, never stepping past `t_max`.
    pub fn step(&mut self, state: &mut State, t_max: f64) -> Result<StepReport, StepError> {
        self.step_impl(state, None, t_max)
    }

    /// One Heun step of a prescribed size.
    pub fn step_fixed(&mut self, state: &mut State, dt: f64) -> Result<StepReport, StepError> {
        self.step_impl(state, Some(dt), f64::INFINITY)
    }

    fn step_impl(&mut self, state: &mut State, fixed: Option<f64>, t_max: f64) -> Result<StepReport, StepError> {
        let nu = self.nu_fields(&state.w1, &state.mesh)?;
        let k1 = self.rhs(&state.u1, &state.w1, &nu, &state.mesh)?;
        let (cfl_dt, branch) = compute_dt(&k1.flow, &nu, &state.mesh, self.cfl);
        let mut dt = fixed.unwrap_or(cfl_dt);
        let last = state.t + dt >= t_max;
        if last {
            dt = t_max - state.t;
        }
        let before = state.u1.sup_norm();
        let (u, w) = self.advance(state, &k1, &nu, dt)?;
        state.u1 = u;
        state.w1 = w;
        state.t = if last { t_max } else { state.t + dt };
        let after = state.u1.sup_norm();
        let growth = if before > 0.0 { after / before } else { 1.0 };
        Ok(StepReport { t: state.t, dt, branch, mesh_updated: false, growth })
    }

    /// Unfiltered flow of a state, as used by the diagnostics.
    pub fn diagnostic_flow(&mut self, state: &State) -> Result<Flow, StepError> {
        let psi = self.poisson.solve(&state.mesh, &state.w1)?;
        Ok(Flow::from_stream(psi, &state.mesh))
    }

    pub fn record(&mut self, state: &State, dt: f64, mesh_updated: bool) -> Result<DiagnosticsRecord, StepError> {
        let flow = self.diagnostic_flow(state)?;
        Ok(diagnostics::record(state.t, dt, mesh_updated, &state.u1, &state.w1, &flow, &state.mesh))
    }
}

fn default_mu() -> f64 {
    1e-5
}
fn default_n() -> usize {
    512
}
fn default_m() -> usize {
    256
}
fn default_cfl() -> f64 {
    0.1
}
fn default_diag_every() -> usize {
    20
}
fn default_n_min() -> usize {
    crate::meshmap::N_MIN
}
fn default_tdp() -> f64 {
    2.5e-2
}
fn default_true() -> bool {
    true
}

/// Parameters of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// 1: degenerate diffusion, 2: constant `mu`, 3: inviscid, 4: degenerate with re-meshed filtering.
    pub case: u8,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub rlpf_k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Record diagnostics every this many steps (and at every mesh update).
    #[serde(default = "default_diag_every")]
    pub diag_every: usize,
    /// Write a checkpoint every this many steps; 0 disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_n_min")]
    pub n_min_r: usize,
    #[serde(default = "default_n_min")]
    pub n_min_z: usize,
    #[serde(default = "default_tdp")]
    pub tdp_scale: f64,
    #[serde(default = "default_true")]
    pub filters: bool,
    #[serde(default)]
    pub poisson_weight: Weight,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub initial: InitialDataParams,
}

impl RunConfig {
    pub fn new(case: u8, n: usize, m: usize, t_end: f64) -> Self {
        RunConfig {
            case,
            mu: default_mu(),
            rlpf_k: 0,
            n,
            m,
            t_end,
            cfl: default_cfl(),
            diag_every: default_diag_every(),
            checkpoint_every: 0,
            n_min_r: default_n_min(),
            n_min_z: default_n_min(),
            tdp_scale: default_tdp(),
            filters: true,
            poisson_weight: Weight::default(),
            max_steps: None,
            initial: InitialDataParams::default(),
        }
    }

    pub fn validate(&self) -> Result<Case, ConfigError> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(ConfigError::Cfl(self.cfl));
        }
        if self.n < 8 || self.m < 8 {
            return Err(ConfigError::Resolution(self.n, self.m));
        }
        for (name, v) in [("mu", self.mu), ("t_end", self.t_end), ("tdp_scale", self.tdp_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Negative(name, v));
            }
        }
        Ok(match self.case {
            1 => Case::Degenerate,
            2 => Case::Constant(self.mu),
            3 => Case::Inviscid,
            4 => Case::Regularized(self.rlpf_k),
            c => return Err(ConfigError::Case(c)),
        })
    }

    pub fn thresholds(&self) -> UpdateThresholds {
        UpdateThresholds { n_min_r: self.n_min_r, n_min_z: self.n_min_z }
    }

    pub fn solver(&self) -> Result<Solver, ConfigError> {
        let case = self.validate()?;
        let plan = if self.filters { FilterPlan::standard(case, self.m) } else { FilterPlan::none() };
        Ok(Solver::new(case, self.tdp_scale, plan, self.cfl, self.poisson_weight))
    }
}

/// Initial state on a mesh adapted to the analytic initial front.
pub fn initial_state(config: &RunConfig) -> Result<State, MeshError> {
    let front = physics::initial_front(&config.initial);
    let mesh = build_adaptive_mesh(&front, config.n, config.m)?;
    let (u1, w1) = physics::initial_fields(&config.initial, &mesh);
    Ok(State { t: 0.0, u1, w1, mesh })
}

/// Receives run output; every value passed is a completed snapshot.
pub trait Observer {
    fn record(&mut self, _record: &DiagnosticsRecord) {}
    fn checkpoint(&mut self, _state: &State) {}
    fn mesh(&mut self, _t: f64, _mesh: &Mesh2) {}
    fn step(&mut self, _report: &StepReport, _state: &State) {}
}

/// Observer that discards everything.
pub struct NoOutput;

impl Observer for NoOutput {}

/// Why a run stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Halt {
    Completed,
    StepLimit,
    Nonfinite,
    MeshFailure(String),
}

impl std::fmt::Display for Halt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Halt::Completed => f.write_str("completed"),
            Halt::StepLimit => f.write_str("step-limit"),
            Halt::Nonfinite => f.write_str("nonfinite"),
            Halt::MeshFailure(e) => write!(f, "mesh-failure: {e}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub halt: Halt,
    pub steps: usize,
    pub mesh_updates: usize,
    pub rlpf_calls: usize,
    pub records: usize,
    pub state: State,
}

/// Rebuilds the mesh for a new front and interpolates the prognostic fields.
pub fn remesh(state: &mut State, front: &Front) -> Result<(), MeshError> {
    let mesh = build_adaptive_mesh(front, state.mesh.n(), state.mesh.m())?;
    let mut u1 = interpolate_ip4(&state.u1, &state.mesh, &mesh)?;
    let mut w1 = interpolate_ip4(&state.w1, &state.mesh, &mesh)?;
    u1.project_parity();
    w1.project_parity();
    let n = mesh.n();
    for j in 0..=mesh.m() {
        u1.values[[n, j]] = 0.0;
    }
    state.u1 = u1;
    state.w1 = w1;
    state.mesh = mesh;
    Ok(())
}

/// Runs from the initial data of `config`.
pub fn run(config: &RunConfig, obs: &mut dyn Observer) -> Result<RunSummary, StepError> {
    let state = initial_state(config)?;
    run_from(config, state, obs)
}

/// Runs from a given state until `t_end`, the step limit, or a failure.
pub fn run_from(config: &RunConfig, mut state: State, obs: &mut dyn Observer) -> Result<RunSummary, StepError> {
    let mut solver = config.solver()?;
    let thresholds = config.thresholds();
    let mut front = diagnostics::front(&state.u1, &state.mesh)?;
    let mut monitor = MeshMonitor::new(&front, &state.mesh, thresholds);
    let (mut steps, mut records, mut updates) = (0usize, 0usize, 0usize);

    obs.mesh(state.t, &state.mesh);
    obs.record(&solver.record(&state, 0.0, false)?);
    records += 1;

    let halt = loop {
        if state.t >= config.t_end {
            break Halt::Completed;
        }
        if config.max_steps.is_some_and(|cap| steps >= cap) {
            break Halt::StepLimit;
        }
        if let Err(e) = solver.refresh_coarse_mesh(&front) {
            break Halt::MeshFailure(e.to_string());
        }
        let mut report = match solver.step(&mut state, config.t_end) {
            Ok(r) => r,
            Err(StepError::NonFinite { .. }) => break Halt::Nonfinite,
            Err(e) => return Err(e),
        };
        steps += 1;

        front = match diagnostics::front(&state.u1, &state.mesh) {
            Ok(f) => f,
            Err(e) => break Halt::MeshFailure(e.to_string()),
        };
        if let Some(reason) = monitor.check(&front, &state.mesh) {
            log::info!("t = {:.6e}: mesh update ({reason})", state.t);
            if let Err(e) = remesh(&mut state, &front) {
                break Halt::MeshFailure(e.to_string());
            }
            front = match diagnostics::front(&state.u1, &state.mesh) {
                Ok(f) => f,
                Err(e) => break Halt::MeshFailure(e.to_string()),
            };
            monitor = MeshMonitor::new(&front, &state.mesh, thresholds);
            report.mesh_updated = true;
            updates += 1;
            obs.mesh(state.t, &state.mesh);
        }
        obs.step(&report, &state);

        let done = state.t >= config.t_end;
        if report.mesh_updated || steps % config.diag_every.max(1) == 0 || done {
            obs.record(&solver.record(&state, report.dt, report.mesh_updated)?);
            records += 1;
        }
        if config.checkpoint_every > 0 && steps % config.checkpoint_every == 0 && !done {
            obs.checkpoint(&state);
        }
    };
    obs.checkpoint(&state);
    Ok(RunSummary { halt, steps, mesh_updates: updates, rlpf_calls: solver.rlpf_calls(), records, state })
}
