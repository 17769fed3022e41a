//! Analytic adaptive mesh maps `rho -> r`, `eta -> z` and interpolation between
//! mapped grids.
//!
//! A map is the integral of a piecewise-smooth density
//! `p(s) = a1 + a2 q(s-s2) + a3 q(s-s3) + a0 (q(s1-s) + q(s1+s) - 1)`
//! built from the sigmoid `q_b(x) = (1+x)^b / (1 + (1+x)^b)`. Each phase of the
//! density concentrates a fixed fraction of the grid on a physical interval
//! chosen from the current solution.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

use crate::fields::{FieldGrid, Parity};
use crate::quad::gl6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("q_b argument {0} lies outside [-1, 1]")]
    Domain(f64),
    #[error("sharpness exponent {0} must be even and at least 2")]
    BadExponent(u32),
    #[error("phase knots must satisfy 0 <= s1 < s2 < s3 < 1, got ({0}, {1}, {2})")]
    BadKnots(f64, f64, f64),
    #[error("non-positive density: {0}")]
    NonPositiveDensity(String),
    #[error("degenerate profile: front width d = R - R_r = {0} is not positive")]
    DegenerateProfile(f64),
    #[error("physical point {0} lies outside the mapped domain [0, {1}]")]
    OutOfDomain(f64, f64),
    #[error("field shape {0}x{1} does not match the source grid {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
}

/// Default sharpness of the density transitions.
pub const DEFAULT_B: u32 = 60;

/// Sigmoid `q_b(x) = (1+x)^b / (1 + (1+x)^b)` for `|x| <= 1`.
pub fn eval_q(x: f64, b: u32) -> Result<f64, MeshError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(MeshError::Domain(x));
    }
    if b < 2 || b % 2 != 0 {
        return Err(MeshError::BadExponent(b));
    }
    Ok(q(x, b))
}

// Valid for any real x because b is even; the map needs arguments up to s1 + 1.
fn q(x: f64, b: u32) -> f64 {
    let y = (1.0 + x).powi(b as i32);
    if y > 1.0 {
        1.0 / (1.0 + 1.0 / y)
    } else {
        y / (1.0 + y)
    }
}

fn dq(x: f64, b: u32) -> f64 {
    let t = 1.0 + x;
    let y = t.powi(b as i32);
    b as f64 * t.powi(b as i32 - 1) / ((1.0 + y) * (1.0 + y))
}

/// Phase breakpoints in the computational coordinate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseKnots {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl PhaseKnots {
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self, MeshError> {
        if !(0.0 <= s1 && s1 < s2 && s2 < s3 && s3 < 1.0) {
            return Err(MeshError::BadKnots(s1, s2, s3));
        }
        Ok(PhaseKnots { s1, s2, s3 })
    }

    /// Knots of the radial map.
    pub fn radial() -> Self {
        PhaseKnots { s1: 0.1, s2: 0.5, s3: 0.85 }
    }

    /// Knots of the axial map (three phases, `s1 = 0`).
    pub fn axial() -> Self {
        PhaseKnots { s1: 0.0, s2: 0.3, s3: 0.85 }
    }
}

/// Density magnitudes and the sigmoid sharpness.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b: u32,
}

impl DensityCoeffs {
    /// Uniform density of the identity map on `[0, 1]`.
    pub fn identity() -> Self {
        DensityCoeffs { a0: 0.0, a1: 1.0, a2: 0.0, a3: 0.0, b: DEFAULT_B }
    }

    fn density(&self, k: &PhaseKnots, s: f64) -> f64 {
        let b = self.b;
        let mut p = self.a1 + self.a2 * q(s - k.s2, b) + self.a3 * q(s - k.s3, b);
        if self.a0 != 0.0 {
            p += self.a0 * (q(k.s1 - s, b) + q(k.s1 + s, b) - 1.0);
        }
        p
    }

    fn density_d1(&self, k: &PhaseKnots, s: f64) -> f64 {
        let b = self.b;
        let mut d = self.a2 * dq(s - k.s2, b) + self.a3 * dq(s - k.s3, b);
        if self.a0 != 0.0 {
            d += self.a0 * (dq(k.s1 + s, b) - dq(k.s1 - s, b));
        }
        d
    }
}

/// Physical phase-boundary coordinates a map should reproduce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshTargets {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub extent: f64,
}

/// Closed-form density magnitudes that make the idealized piecewise-constant
/// density hit the targets at the knots.
pub fn solve_phase_coeffs(knots: &PhaseKnots, t: &MeshTargets) -> Result<DensityCoeffs, MeshError> {
    let PhaseKnots { s1, s2, s3 } = *knots;
    let (a0, a1) = if s1 == 0.0 {
        if t.y1 != 0.0 {
            return Err(MeshError::NonPositiveDensity(format!(
                "y1 = {} must vanish when s1 = 0",
                t.y1
            )));
        }
        (0.0, t.y2 / s2)
    } else {
        let a1 = (t.y2 - t.y1) / (s2 - s1);
        (t.y1 / s1 - a1, a1)
    };
    let slope2 = (t.y3 - t.y2) / (s3 - s2);
    let a2 = slope2 - a1;
    let a3 = (t.extent - t.y3) / (1.0 - s3) - slope2;
    // Targets on the boundary of the admissible set give coefficients that are
    // zero up to cancellation error.
    let tol = 1e-12 * a1.abs().max(slope2.abs()).max(t.extent);
    let clean = |v: f64| if v < 0.0 && v >= -tol { 0.0 } else { v };
    let (a0, a2, a3) = (clean(a0), clean(a2), clean(a3));
    for (name, v) in [("a0", a0), ("a1", a1), ("a2", a2), ("a3", a3)] {
        if !(v >= 0.0) || (name == "a1" && v <= 0.0) {
            return Err(MeshError::NonPositiveDensity(format!("{name} = {v}")));
        }
    }
    Ok(DensityCoeffs { a0, a1, a2, a3, b: DEFAULT_B })
}

static NEXT_MAP_ID: AtomicU64 = AtomicU64::new(1);

// Cells per unit length of the integration lattice.
const LATTICE_DENSITY: f64 = 2048.0;

#[derive(Debug)]
struct MapData {
    id: u64,
    knots: PhaseKnots,
    coeffs: DensityCoeffs,
    extent: f64,
    rescale: f64,
    n: usize,
    lattice: Vec<f64>,
    // Scaled map values at the lattice points.
    cumulative: Vec<f64>,
    nodes: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

/// Monotone analytic map from `[0, 1]` onto `[0, extent]`, sampled at `n + 1` nodes.
///
/// Cloning is cheap and preserves identity: two handles to the same map compare
/// equal by [`MeshMap::id`], which keys solver caches.
#[derive(Clone, Debug)]
pub struct MeshMap(Arc<MapData>);

/// Builds the map `P(x) = rescale * int_0^x p` with `rescale = extent / int_0^1 p`.
pub fn build_map(
    knots: &PhaseKnots,
    coeffs: &DensityCoeffs,
    extent: f64,
    n: usize,
) -> Result<MeshMap, MeshError> {
    let PhaseKnots { s1, s2, s3 } = *knots;
    PhaseKnots::new(s1, s2, s3)?;
    if coeffs.b < 2 || coeffs.b % 2 != 0 {
        return Err(MeshError::BadExponent(coeffs.b));
    }
    for (name, v) in [("a0", coeffs.a0), ("a1", coeffs.a1), ("a2", coeffs.a2), ("a3", coeffs.a3)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(MeshError::NonPositiveDensity(format!("{name} = {v}")));
        }
    }
    if n < 4 {
        return Err(MeshError::NonPositiveDensity(format!("resolution {n} below 4")));
    }

    let mut breaks = vec![0.0];
    if s1 > 0.0 {
        breaks.push(s1);
    }
    breaks.extend([s2, s3, 1.0]);
    let mut lattice = vec![0.0];
    for w in breaks.windows(2) {
        let cells = ((w[1] - w[0]) * LATTICE_DENSITY).ceil().max(1.0) as usize;
        for c in 1..=cells {
            lattice.push(if c == cells { w[1] } else { w[0] + (w[1] - w[0]) * c as f64 / cells as f64 });
        }
    }

    let mut min_p = f64::INFINITY;
    let mut cumulative = Vec::with_capacity(lattice.len());
    cumulative.push(0.0);
    let mut acc = 0.0;
    for w in lattice.windows(2) {
        min_p = min_p.min(coeffs.density(knots, w[0]));
        acc += gl6(|s| coeffs.density(knots, s), w[0], w[1]);
        cumulative.push(acc);
    }
    min_p = min_p.min(coeffs.density(knots, 1.0));
    if !(min_p > 0.0) {
        return Err(MeshError::NonPositiveDensity(format!("min p = {min_p}")));
    }
    let rescale = extent / acc;
    for c in cumulative.iter_mut() {
        *c *= rescale;
    }
    let last = cumulative.len() - 1;
    cumulative[last] = extent;

    let mut data = MapData {
        id: NEXT_MAP_ID.fetch_add(1, Ordering::Relaxed),
        knots: *knots,
        coeffs: *coeffs,
        extent,
        rescale,
        n,
        lattice,
        cumulative,
        nodes: Vec::new(),
        d1: Vec::new(),
        d2: Vec::new(),
    };
    let h = 1.0 / n as f64;
    data.nodes = (0..=n).map(|i| data.eval(i as f64 * h)).collect();
    data.d1 = (0..=n).map(|i| data.d1(i as f64 * h)).collect();
    data.d2 = (0..=n).map(|i| data.d2(i as f64 * h)).collect();
    Ok(MeshMap(Arc::new(data)))
}

impl MeshMap {
    /// Identity-density map `x -> extent * x`.
    pub fn uniform(extent: f64, n: usize) -> Self {
        build_map(&PhaseKnots::radial(), &DensityCoeffs::identity(), extent, n)
            .expect("identity density is valid")
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn knots(&self) -> &PhaseKnots {
        &self.0.knots
    }

    pub fn coeffs(&self) -> &DensityCoeffs {
        &self.0.coeffs
    }

    pub fn extent(&self) -> f64 {
        self.0.extent
    }

    /// Factor applied to the raw density so that the map ends at `extent`.
    pub fn rescale(&self) -> f64 {
        self.0.rescale
    }

    /// Number of grid intervals.
    pub fn n(&self) -> usize {
        self.0.n
    }

    /// Computational grid spacing `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.0.n as f64
    }

    /// Physical node coordinates.
    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    /// Map derivative at the nodes.
    pub fn node_d1(&self) -> &[f64] {
        &self.0.d1
    }

    /// Map second derivative at the nodes.
    pub fn node_d2(&self) -> &[f64] {
        &self.0.d2
    }

    /// Scaled density `p(s)`, i.e. the map derivative.
    pub fn d1(&self, s: f64) -> f64 {
        self.0.d1(s)
    }

    /// Map second derivative `p'(s)`.
    pub fn d2(&self, s: f64) -> f64 {
        self.0.d2(s)
    }

    /// Map value `P(x)` for `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    /// Inverse map; arguments are clamped to `[0, extent]`.
    pub fn inverse(&self, y: f64) -> f64 {
        self.0.inverse(y)
    }
}

impl MapData {
    /// Scaled density `p(s)`, i.e. the map derivative.
    fn d1(&self, s: f64) -> f64 {
        self.rescale * self.coeffs.density(&self.knots, s)
    }

    /// Map second derivative `p'(s)`.
    fn d2(&self, s: f64) -> f64 {
        self.rescale * self.coeffs.density_d1(&self.knots, s)
    }

    fn cell_of(&self, x: f64) -> usize {
        let lat = &self.lattice;
        lat.partition_point(|&v| v <= x).clamp(1, lat.len() - 1) - 1
    }

    fn eval_in_cell(&self, k: usize, x: f64) -> f64 {
        let d = self;
        d.cumulative[k] + d.rescale * gl6(|s| d.coeffs.density(&d.knots, s), d.lattice[k], x)
    }

    /// Map value `P(x)` for `x` in `[0, 1]`.
    fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return self.extent;
        }
        self.eval_in_cell(self.cell_of(x), x)
    }

    /// Inverse map; arguments are clamped to `[0, extent]`.
    fn inverse(&self, y: f64) -> f64 {
        let d = self;
        if y <= 0.0 {
            return 0.0;
        }
        if y >= d.extent {
            return 1.0;
        }
        let k = d.cumulative.partition_point(|&v| v <= y).clamp(1, d.cumulative.len() - 1) - 1;
        let (mut lo, mut hi) = (d.lattice[k], d.lattice[k + 1]);
        let mut x = lo + (hi - lo) * (y - d.cumulative[k]) / (d.cumulative[k + 1] - d.cumulative[k]);
        for _ in 0..100 {
            let f = self.eval_in_cell(k, x) - y;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - f / self.d1(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step < 1e-15 || hi - lo < 1e-15 {
                break;
            }
        }
        x
    }
}

/// Tensor-product mesh: radial map of extent 1 and axial map of extent 1/2.
#[derive(Clone, Debug)]
pub struct Mesh2 {
    pub r: MeshMap,
    pub z: MeshMap,
}

impl Mesh2 {
    pub fn new(r: MeshMap, z: MeshMap) -> Self {
        Mesh2 { r, z }
    }

    /// Uniform mesh of the computational domain.
    pub fn uniform(n: usize, m: usize) -> Self {
        Mesh2::new(MeshMap::uniform(1.0, n), MeshMap::uniform(0.5, m))
    }

    pub fn n(&self) -> usize {
        self.r.n()
    }

    pub fn m(&self) -> usize {
        self.z.n()
    }

    /// Identity of the map pair.
    pub fn key(&self) -> (u64, u64) {
        (self.r.id(), self.z.id())
    }
}

/// Which map a target computation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapAxis {
    R,
    Z,
}

/// Location of the solution front the mesh adapts to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Front {
    /// Radial location of the maximum of `u_1`.
    pub r_max: f64,
    /// Axial location of the maximum of `u_1`.
    pub z_max: f64,
    /// Radial location of the maximum of `u_{1,r}` on the cross-section through the maximum.
    pub r_grad: f64,
}

impl Front {
    /// Front width `R - R_r`.
    pub fn width(&self) -> f64 {
        self.r_max - self.r_grad
    }
}

/// Physical phase targets adapted to the front.
pub fn derive_targets(front: &Front, axis: MapAxis, knots: &PhaseKnots) -> Result<MeshTargets, MeshError> {
    match axis {
        MapAxis::R => {
            let d = front.width();
            if !(d > 0.0) {
                return Err(MeshError::DegenerateProfile(d));
            }
            let PhaseKnots { s1, s2, s3 } = *knots;
            let y2 = front.r_max + 3.0 * d;
            let y1 = (front.r_grad - 4.0 * d).max(s1 / s2 * y2);
            let y3 = (3.0 * front.r_max).max(y2 + (s3 - s2) / (s2 - s1) * (y2 - y1));
            Ok(MeshTargets { y1, y2, y3, extent: 1.0 })
        }
        MapAxis::Z => Ok(MeshTargets {
            y1: 0.0,
            y2: 1.5 * front.z_max,
            y3: 15.0 * front.z_max,
            extent: 0.5,
        }),
    }
}

/// Default resolution of the front region below which the mesh is rebuilt.
pub const N_MIN: usize = 16;

/// Builds the adaptive mesh pair for a front.
pub fn build_adaptive_mesh(front: &Front, n: usize, m: usize) -> Result<Mesh2, MeshError> {
    let kr = PhaseKnots::radial();
    let kz = PhaseKnots::axial();
    let tr = derive_targets(front, MapAxis::R, &kr)?;
    let tz = derive_targets(front, MapAxis::Z, &kz)?;
    let r = build_map(&kr, &solve_phase_coeffs(&kr, &tr)?, 1.0, n)?;
    let z = build_map(&kz, &solve_phase_coeffs(&kz, &tz)?, 0.5, m)?;
    Ok(Mesh2::new(r, z))
}

/// Reason a mesh no longer resolves the front.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateReason {
    /// `[R_r - d, R + d]` left the first radial phase `[r(s1), r(s2)]`.
    RadialEscape,
    /// `3Z/2` exceeded `z(s2)`.
    AxialEscape,
    /// Too few radial nodes in `[R_r, R]`.
    RadialCount,
    /// Too few axial nodes in `[0, Z]`.
    AxialCount,
}

impl std::fmt::Display for UpdateReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpdateReason::RadialEscape => "radial-escape",
            UpdateReason::AxialEscape => "axial-escape",
            UpdateReason::RadialCount => "radial-count",
            UpdateReason::AxialCount => "axial-count",
        })
    }
}

/// Node-count thresholds for the resolution criteria.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateThresholds {
    pub n_min_r: usize,
    pub n_min_z: usize,
}

impl Default for UpdateThresholds {
    fn default() -> Self {
        UpdateThresholds { n_min_r: N_MIN, n_min_z: N_MIN }
    }
}

fn count_in(nodes: &[f64], lo: f64, hi: f64) -> usize {
    nodes.iter().filter(|&&x| x >= lo && x <= hi).count()
}

/// Checks the four mesh-update criteria in order.
pub fn needs_update(front: &Front, mesh: &Mesh2, th: &UpdateThresholds) -> Option<UpdateReason> {
    let d = front.width();
    let (r, z) = (&mesh.r, &mesh.z);
    let lo = r.eval(r.knots().s1);
    let hi = r.eval(r.knots().s2);
    if front.r_grad - d < lo || front.r_max + d > hi {
        return Some(UpdateReason::RadialEscape);
    }
    if 1.5 * front.z_max > z.eval(z.knots().s2) {
        return Some(UpdateReason::AxialEscape);
    }
    if count_in(r.nodes(), front.r_grad, front.r_max) < th.n_min_r {
        return Some(UpdateReason::RadialCount);
    }
    if count_in(z.nodes(), 0.0, front.z_max) < th.n_min_z {
        return Some(UpdateReason::AxialCount);
    }
    None
}

/// Update monitor bound to one mesh build.
///
/// Count thresholds are capped by the counts present when the mesh was built,
/// and criteria already met at build time are not reported, so a freshly
/// adapted mesh is never immediately rebuilt.
#[derive(Clone, Debug)]
pub struct MeshMonitor {
    thresholds: UpdateThresholds,
    radial_escape_armed: bool,
    axial_escape_armed: bool,
}

impl MeshMonitor {
    pub fn new(front: &Front, mesh: &Mesh2, base: UpdateThresholds) -> Self {
        let d = front.width();
        let nr = count_in(mesh.r.nodes(), front.r_grad, front.r_max);
        let nz = count_in(mesh.z.nodes(), 0.0, front.z_max);
        let thresholds = UpdateThresholds { n_min_r: base.n_min_r.min(nr), n_min_z: base.n_min_z.min(nz) };
        let lo = mesh.r.eval(mesh.r.knots().s1);
        let hi = mesh.r.eval(mesh.r.knots().s2);
        MeshMonitor {
            thresholds,
            radial_escape_armed: !(front.r_grad - d < lo || front.r_max + d > hi),
            axial_escape_armed: !(1.5 * front.z_max > mesh.z.eval(mesh.z.knots().s2)),
        }
    }

    pub fn thresholds(&self) -> UpdateThresholds {
        self.thresholds
    }

    pub fn check(&self, front: &Front, mesh: &Mesh2) -> Option<UpdateReason> {
        match needs_update(front, mesh, &self.thresholds)? {
            UpdateReason::RadialEscape if !self.radial_escape_armed => {
                needs_update_counts(front, mesh, &self.thresholds)
            }
            UpdateReason::AxialEscape if !self.axial_escape_armed => needs_update_counts(front, mesh, &self.thresholds),
            reason => Some(reason),
        }
    }
}

fn needs_update_counts(front: &Front, mesh: &Mesh2, th: &UpdateThresholds) -> Option<UpdateReason> {
    if count_in(mesh.r.nodes(), front.r_grad, front.r_max) < th.n_min_r {
        return Some(UpdateReason::RadialCount);
    }
    if count_in(mesh.z.nodes(), 0.0, front.z_max) < th.n_min_z {
        return Some(UpdateReason::AxialCount);
    }
    None
}

/// Cubic Lagrange stencil on a uniform computational grid.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    base: isize,
    w: [f64; 4],
}

fn lagrange4(x: f64) -> [f64; 4] {
    [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ]
}

// Ghost nodes are used only where the reflection parity is known; otherwise the
// stencil shifts inward to stay one-sided.
fn stencil(rho: f64, n: usize, left_ghost: bool, right_ghost: bool) -> Stencil {
    let t = rho * n as f64;
    let l = (t.floor() as isize).clamp(0, n as isize - 1);
    let mut base = l - 1;
    if base < 0 && !left_ghost {
        base = 0;
    }
    if base + 3 > n as isize && !right_ghost {
        base = n as isize - 3;
    }
    Stencil { base, w: lagrange4(t - base as f64) }
}

fn resolve(k: isize, n: usize, left: Parity, right: Parity) -> (usize, f64) {
    if k < 0 {
        ((-k) as usize, left.sign().unwrap_or(1.0))
    } else if k > n as isize {
        ((2 * n as isize - k) as usize, right.sign().unwrap_or(1.0))
    } else {
        (k as usize, 1.0)
    }
}

struct AxisWeights {
    idx: Vec<[(usize, f64); 4]>,
}

fn axis_weights(
    src: &MeshMap,
    targets: &[f64],
    left: Parity,
    right: Parity,
) -> Result<AxisWeights, MeshError> {
    let n = src.n();
    let ext = src.extent();
    let tol = 1e-12 * ext;
    let mut idx = Vec::with_capacity(targets.len());
    for &y in targets {
        if !(y >= -tol && y <= ext + tol) {
            return Err(MeshError::OutOfDomain(y, ext));
        }
        let rho = src.inverse(y);
        let s = stencil(rho, n, left != Parity::None, right != Parity::None);
        let mut e = [(0usize, 0.0); 4];
        for (a, slot) in e.iter_mut().enumerate() {
            let (k, sign) = resolve(s.base + a as isize, n, left, right);
            *slot = (k, sign * s.w[a]);
        }
        idx.push(e);
    }
    Ok(AxisWeights { idx })
}

/// Fourth-order interpolation of a field from one mapped grid onto another.
///
/// Destination physical nodes are pulled back through the source maps and the
/// field is interpolated by tensor-product cubic Lagrange polynomials in the
/// source computational coordinates.
pub fn interpolate_ip4(field: &FieldGrid, src: &Mesh2, dst: &Mesh2) -> Result<FieldGrid, MeshError> {
    check_shape(field, src)?;
    if src.key() == dst.key() {
        return Ok(field.clone());
    }
    let wr = axis_weights(&src.r, dst.r.nodes(), field.parity_r, Parity::None)?;
    let wz = axis_weights(&src.z, dst.z.nodes(), field.parity_z, field.parity_z)?;
    let f = &field.values;
    // Axial pass on every source row, then the radial pass.
    let mut tmp = Array2::<f64>::zeros((src.n() + 1, dst.m() + 1));
    Zip::from(tmp.axis_iter_mut(Axis(0)))
        .and(f.axis_iter(Axis(0)))
        .par_for_each(|mut row, srow| {
            for (jd, e) in wz.idx.iter().enumerate() {
                row[jd] = e.iter().map(|&(k, w)| w * srow[k]).sum::<f64>();
            }
        });
    let mut out = Array2::<f64>::zeros((dst.n() + 1, dst.m() + 1));
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(&ndarray::Array1::from_iter(0..dst.n() + 1))
        .par_for_each(|mut row, &id| {
            let e = &wr.idx[id];
            for jd in 0..row.len() {
                row[jd] = e.iter().map(|&(k, w)| w * tmp[[k, jd]]).sum::<f64>();
            }
        });
    Ok(FieldGrid::new(out, field.parity_r, field.parity_z))
}

fn check_shape(field: &FieldGrid, mesh: &Mesh2) -> Result<(), MeshError> {
    if field.n() != mesh.n() || field.m() != mesh.m() {
        return Err(MeshError::ShapeMismatch(field.n(), field.m(), mesh.n(), mesh.m()));
    }
    Ok(())
}

/// Fourth-order interpolation of a field at one physical point `(r, z)`.
pub fn interpolate_point(field: &FieldGrid, mesh: &Mesh2, r: f64, z: f64) -> Result<f64, MeshError> {
    check_shape(field, mesh)?;
    let wr = axis_weights(&mesh.r, &[r], field.parity_r, Parity::None)?;
    let wz = axis_weights(&mesh.z, &[z], field.parity_z, field.parity_z)?;
    let mut acc = 0.0;
    for &(i, a) in &wr.idx[0] {
        for &(j, b) in &wz.idx[0] {
            acc += a * b * field.values[[i, j]];
        }
    }
    Ok(acc)
}

/// Plain-text dump of a map: header lines followed by the node coordinates.
pub fn dump_map(map: &MeshMap) -> String {
    let k = map.knots();
    let c = map.coeffs();
    let mut s = String::new();
    s.push_str(&format!("knots {:?} {:?} {:?}\n", k.s1, k.s2, k.s3));
    s.push_str(&format!("coeffs {:?} {:?} {:?} {:?}\n", c.a0, c.a1, c.a2, c.a3));
    s.push_str(&format!("b {}\n", c.b));
    s.push_str(&format!("extent {:?}\n", map.extent()));
    s.push_str(&format!("rescale {:?}\n", map.rescale()));
    s.push_str(&format!("n {}\n", map.n()));
    for x in map.nodes() {
        s.push_str(&format!("{x:?}\n"));
    }
    s
}

/// Rebuilds a map from the header of [`dump_map`] output.
///
/// Returns the map and the number of lines consumed (header plus nodes).
pub fn parse_map_dump(text: &str) -> Result<(MeshMap, usize), String> {
    let mut lines = text.lines();
    let mut field = |key: &str| -> Result<Vec<String>, String> {
        let line = lines.next().ok_or_else(|| format!("missing `{key}` line"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(format!("expected `{key}`, found `{line}`"));
        }
        Ok(parts.map(str::to_owned).collect())
    };
    let num = |v: &[String], i: usize| -> Result<f64, String> {
        v.get(i).ok_or("short line")?.parse::<f64>().map_err(|e| e.to_string())
    };
    let k = field("knots")?;
    let c = field("coeffs")?;
    let b = field("b")?;
    let e = field("extent")?;
    let _rescale = field("rescale")?;
    let n = field("n")?;
    let knots = PhaseKnots::new(num(&k, 0)?, num(&k, 1)?, num(&k, 2)?).map_err(|e| e.to_string())?;
    let coeffs = DensityCoeffs {
        a0: num(&c, 0)?,
        a1: num(&c, 1)?,
        a2: num(&c, 2)?,
        a3: num(&c, 3)?,
        b: b.first().ok_or("missing b")?.parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
    };
    let n: usize = n.first().ok_or("missing n")?.parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
    let map = build_map(&knots, &coeffs, num(&e, 0)?, n).map_err(|e| e.to_string())?;
    Ok((map, 6 + n + 1))
}
