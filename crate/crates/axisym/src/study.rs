//! Resolution studies: sup-norm relative errors against the next finer mesh
//! and the resulting numerical orders.
//!
//! Level `p` runs on a `(n0 p) x (m0 p)` mesh. Its error is measured against
//! level `p + 1`, interpolated onto the level-`p` mesh, and the order is
//! `beta_p = log_{p/(p-1)}(e_{p-1} / e_p)`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::vorticity_vector;
use crate::fields::FieldGrid;
use crate::io::{load_checkpoint, save_checkpoint, time_tag, IoError};
use crate::meshmap::{interpolate_ip4, Mesh2, MeshError};
use crate::stepper::{initial_state, run_from, Halt, NoOutput, RunConfig, Solver, State, StepError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("study needs at least two levels with increasing p, got {0:?}")]
    Levels(Vec<usize>),
    #[error("level p = {p} stopped at t = {t:e} ({halt}) before reaching {target:e}")]
    Incomplete { p: usize, t: f64, target: f64, halt: String },
}

/// `||f - I ref||_inf / ||I ref||_inf` with `I` the interpolation onto `mesh`.
pub fn scalar_error(f: &FieldGrid, mesh: &Mesh2, reference: &FieldGrid, ref_mesh: &Mesh2) -> Result<f64, MeshError> {
    let r = interpolate_ip4(reference, ref_mesh, mesh)?;
    let num = f.values.iter().zip(r.values.iter()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(num / r.sup_norm())
}

/// Vector variant: pointwise Euclidean norms of the component differences.
pub fn vector_error(
    f: [&FieldGrid; 3],
    mesh: &Mesh2,
    reference: [&FieldGrid; 3],
    ref_mesh: &Mesh2,
) -> Result<f64, MeshError> {
    let r = [
        interpolate_ip4(reference[0], ref_mesh, mesh)?,
        interpolate_ip4(reference[1], ref_mesh, mesh)?,
        interpolate_ip4(reference[2], ref_mesh, mesh)?,
    ];
    let (mut num, mut den) = (0.0_f64, 0.0_f64);
    for (idx, _) in f[0].values.indexed_iter() {
        let (mut d2, mut n2) = (0.0, 0.0);
        for k in 0..3 {
            let rv = r[k].values[idx];
            d2 += (f[k].values[idx] - rv).powi(2);
            n2 += rv * rv;
        }
        num = num.max(d2.sqrt());
        den = den.max(n2.sqrt());
    }
    Ok(num / den)
}

/// Orders between consecutive levels; the first level has none.
pub fn orders(ps: &[usize], errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|k| {
            (k > 0).then(|| (errors[k - 1] / errors[k]).ln() / (ps[k] as f64 / ps[k - 1] as f64).ln())
        })
        .collect()
}

/// Quantities compared in a study table.
pub const COLUMNS: [&str; 6] = ["u1", "w1", "psi1", "ur", "uz", "omega"];

struct LevelFields {
    mesh: Mesh2,
    u1: FieldGrid,
    w1: FieldGrid,
    psi: FieldGrid,
    ur: FieldGrid,
    uz: FieldGrid,
    omega: [FieldGrid; 3],
}

fn level_fields(state: &State, solver: &mut Solver) -> Result<LevelFields, StepError> {
    let flow = solver.diagnostic_flow(state)?;
    let w = vorticity_vector(&state.u1, &state.w1, &state.mesh);
    Ok(LevelFields {
        mesh: state.mesh.clone(),
        u1: state.u1.clone(),
        w1: state.w1.clone(),
        psi: flow.psi,
        ur: flow.ur,
        uz: flow.uz,
        omega: [w.theta, w.r, w.z],
    })
}

fn level_errors(f: &LevelFields, g: &LevelFields) -> Result<Vec<f64>, MeshError> {
    let s = |a: &FieldGrid, b: &FieldGrid| scalar_error(a, &f.mesh, b, &g.mesh);
    Ok(vec![
        s(&f.u1, &g.u1)?,
        s(&f.w1, &g.w1)?,
        s(&f.psi, &g.psi)?,
        s(&f.ur, &g.ur)?,
        s(&f.uz, &g.uz)?,
        vector_error(
            [&f.omega[0], &f.omega[1], &f.omega[2]],
            &f.mesh,
            [&g.omega[0], &g.omega[1], &g.omega[2]],
            &g.mesh,
        )?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    /// One entry per [`COLUMNS`] item.
    pub errors: Vec<f64>,
    pub orders: Vec<Option<f64>>,
}

/// Errors and orders at one time instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyTable {
    pub t: f64,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    /// Fixed-width text rendering; identical inputs give identical bytes.
    pub fn to_text(&self) -> String {
        let mut s = format!("t = {:.6e}\n{:>12}", self.t, "mesh");
        for c in COLUMNS {
            let _ = write!(s, " {c:>12} {:>6}", "order");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:>12}", format!("{}x{}", row.n, row.m));
            for (e, o) in row.errors.iter().zip(&row.orders) {
                let o = o.map_or("--".to_owned(), |o| format!("{o:.2}"));
                let _ = write!(s, " {e:>12.4e} {o:>6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,p,n,m");
        for c in COLUMNS {
            let _ = write!(s, ",e_{c},beta_{c}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:.16e},{},{},{}", self.t, row.p, row.n, row.m);
            for (e, o) in row.errors.iter().zip(&row.orders) {
                let _ = write!(s, ",{e:.16e},{}", o.map_or(String::new(), |o| format!("{o:.16e}")));
            }
            s.push('\n');
        }
        s
    }
}

/// Builds the table from states of increasing `p` at a common time. The
/// finest level serves only as reference.
pub fn study_table(levels: &[(usize, State)], solver: &mut Solver) -> Result<StudyTable, StudyError> {
    let ps: Vec<usize> = levels.iter().map(|l| l.0).collect();
    if ps.len() < 2 || ps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StudyError::Levels(ps));
    }
    let fields = levels.iter().map(|(_, s)| level_fields(s, solver)).collect::<Result<Vec<_>, _>>()?;
    let mut errors = Vec::with_capacity(levels.len() - 1);
    for k in 0..levels.len() - 1 {
        errors.push(level_errors(&fields[k], &fields[k + 1])?);
    }
    let coarse = &ps[..ps.len() - 1];
    let per_column: Vec<Vec<Option<f64>>> = (0..COLUMNS.len())
        .map(|c| orders(coarse, &errors.iter().map(|e| e[c]).collect::<Vec<_>>()))
        .collect();
    let rows = errors
        .into_iter()
        .enumerate()
        .map(|(k, e)| StudyRow {
            p: ps[k],
            n: levels[k].1.mesh.n(),
            m: levels[k].1.mesh.m(),
            errors: e,
            orders: per_column.iter().map(|o| o[k]).collect(),
        })
        .collect();
    Ok(StudyTable { t: levels[0].1.t, rows })
}

fn default_n0() -> usize {
    256
}
fn default_m0() -> usize {
    128
}

/// Levels, comparison instants and the run configuration they share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub p: Vec<usize>,
    pub times: Vec<f64>,
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default = "default_m0")]
    pub m0: usize,
    /// Resolution fields of this configuration are overridden per level.
    pub run: RunConfig,
}

fn checkpoint_name(p: usize, t: f64) -> String {
    format!("p{p}/ckpt_{}.bin", time_tag(t))
}

/// States of one level at every study instant. With `store`, each state is
/// read from `store/p<p>/ckpt_<t>.bin` when present and saved there otherwise.
pub fn level_states(spec: &StudySpec, p: usize, store: Option<&Path>) -> Result<Vec<State>, StudyError> {
    let mut cfg = spec.run.clone();
    cfg.n = spec.n0 * p;
    cfg.m = spec.m0 * p;
    let mut state: Option<State> = None;
    let mut out = Vec::with_capacity(spec.times.len());
    for &t in &spec.times {
        let cached = store.map(|d| d.join(checkpoint_name(p, t))).filter(|f| f.is_file());
        let next = match cached {
            Some(f) => load_checkpoint(&f)?,
            None => {
                let start = match state.take() {
                    Some(s) => s,
                    None => initial_state(&cfg)?,
                };
                cfg.t_end = t;
                let summary = run_from(&cfg, start, &mut NoOutput)?;
                if summary.halt != Halt::Completed {
                    return Err(StudyError::Incomplete { p, t: summary.state.t, target: t, halt: summary.halt.to_string() });
                }
                if let Some(d) = store {
                    let f = d.join(checkpoint_name(p, t));
                    std::fs::create_dir_all(f.parent().expect("has parent")).map_err(|source| IoError::File { path: f.clone(), source })?;
                    save_checkpoint(&f, &summary.state)?;
                }
                summary.state
            }
        };
        state = Some(next.clone());
        out.push(next);
    }
    Ok(out)
}

/// Runs (or loads) every level and tabulates errors at each instant.
pub fn run_study(spec: &StudySpec, store: Option<&Path>) -> Result<Vec<StudyTable>, StudyError> {
    if spec.p.len() < 2 || spec.p.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StudyError::Levels(spec.p.clone()));
    }
    let mut per_level = Vec::with_capacity(spec.p.len());
    for &p in &spec.p {
        log::info!("study level p = {p}");
        per_level.push(level_states(spec, p, store)?);
    }
    let mut cfg = spec.run.clone();
    (cfg.n, cfg.m) = (spec.n0, spec.m0);
    let mut solver = cfg.solver().map_err(StepError::from)?;
    (0..spec.times.len())
        .map(|k| {
            let levels: Vec<(usize, State)> = spec.p.iter().zip(&per_level).map(|(&p, s)| (p, s[k].clone())).collect();
            study_table(&levels, &mut solver)
        })
        .collect()
}
