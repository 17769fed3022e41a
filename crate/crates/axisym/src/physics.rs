//! Problem definition: initial data, diffusion coefficients and circulation.

use std::sync::Mutex;

use ndarray::{Array2, Zip};
use thiserror::Error;

use crate::fields::{FieldGrid, NuFields, Parity};
use crate::meshmap::{Front, Mesh2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("time-dependent diffusion needs a positive vorticity norm, got {0}")]
    DivisionByZero(f64),
}

/// Logistic soft cutoff `e^y / (e^y + e^-y)` with `y = (x - a) / b`.
pub fn soft_cutoff(x: f64, a: f64, b: f64) -> f64 {
    let y = (x - a) / b;
    if y >= 0.0 {
        1.0 / (1.0 + (-2.0 * y).exp())
    } else {
        let e = (2.0 * y).exp();
        e / (1.0 + e)
    }
}

/// Amplitudes and shape scales of the initial data.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct InitialDataParams {
    pub m_u1: f64,
    pub m_u2: f64,
    pub m_w1: f64,
    pub m_w2: f64,
    pub a_z1: f64,
    pub a_z2: f64,
    pub a_r1: f64,
    pub a_r2: f64,
    pub b_z1: f64,
    pub b_z2: f64,
    pub b_r1: f64,
    pub b_r2: f64,
}

impl Default for InitialDataParams {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        InitialDataParams {
            m_u1: 7.6e3,
            m_u2: 50.0,
            m_w1: 8.6e7,
            m_w2: 50.0,
            a_z1: 1.2e-4 * pi,
            a_z2: 2.5e-4 * pi,
            a_r1: 9e-4,
            a_r2: 5e-3,
            b_z1: 1e-4 * pi,
            b_z2: 1.5e-4 * pi,
            b_r1: 9e-4,
            b_r2: 3e-3,
        }
    }
}

fn z_shape(z: f64, c1: f64, c2: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let s = (pi * z).sin();
    (2.0 * pi * z).sin() / (1.0 + (s / c1).powi(2) + (s / c2).powi(4))
}

fn r_shape(r: f64, c1: f64, c2: f64) -> f64 {
    r.powi(8) * (1.0 - r * r) / (1.0 + (r / c1).powi(10) + (r / c2).powi(14))
}

// g(r, z) factors: (1 - A(z) C(r)) (1 - A'(z) C(r)).
fn corner_z(p: &InitialDataParams, z: f64) -> (f64, f64) {
    let s = (std::f64::consts::PI * z).sin() / std::f64::consts::PI;
    (
        soft_cutoff(s, 0.7 * p.b_z1, 0.5 * p.b_z1),
        soft_cutoff(-s, 0.7 * p.b_z1, 0.5 * p.b_z1),
    )
}

fn corner_r(p: &InitialDataParams, r: f64) -> f64 {
    soft_cutoff(r, p.b_r1 + 0.5 * p.b_z1, p.b_z1)
}

impl InitialDataParams {
    /// Unnormalized localized swirl profile.
    pub fn u1_profile(&self, r: f64, z: f64) -> f64 {
        z_shape(z, self.a_z1, self.a_z2) * r_shape(r, self.a_r1, self.a_r2)
    }

    /// Unnormalized localized vorticity profile, including the corner factor `g`.
    pub fn w1_profile(&self, r: f64, z: f64) -> f64 {
        let (a, a2) = corner_z(self, z);
        let c = corner_r(self, r);
        (1.0 - a * c) * (1.0 - a2 * c) * z_shape(z, self.b_z1, self.b_z2) * r_shape(r, self.b_r1, self.b_r2)
    }

    /// Smooth background shared by both fields.
    pub fn background(r: f64, z: f64) -> f64 {
        (2.0 * std::f64::consts::PI * z).sin() * r * r * (1.0 - r * r)
    }
}

/// Sup norms of the unnormalized localized profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub u1: f64,
    pub w1: f64,
}

static NORM_CACHE: Mutex<Vec<(InitialDataParams, Normalization)>> = Mutex::new(Vec::new());

// Sampling lattice concentrated near the small profile scales: log-spaced points
// in [lo, hi] merged with a uniform lattice over the whole interval.
fn sample_axis(extent: f64, lo: f64, hi: f64, n_log: usize, n_uni: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n_log)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n_log - 1) as f64))
        .chain((0..n_uni).map(|k| extent * k as f64 / (n_uni - 1) as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Maximizes a nonnegative function over `[0,1] x [0,1/2]` by a 4096 x 4096
/// log-refined lattice followed by local zooming around the best sample.
pub fn sup_by_sampling(f: impl Fn(f64, f64) -> f64 + Sync) -> (f64, f64, f64) {
    use rayon::prelude::*;
    let rs = sample_axis(1.0, 1e-6, 0.1, 3072, 1024);
    let zs = sample_axis(0.5, 1e-7, 0.05, 3072, 1024);
    let (mut best, bi, bj) = rs
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut b = (f64::NEG_INFINITY, i, 0);
            for (j, &z) in zs.iter().enumerate() {
                let v = f(r, z);
                if v > b.0 {
                    b = (v, i, j);
                }
            }
            b
        })
        .reduce(|| (f64::NEG_INFINITY, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let (mut r0, mut z0) = (rs[bi], zs[bj]);
    let mut hr = (rs[(bi + 1).min(rs.len() - 1)] - rs[bi.saturating_sub(1)]).max(1e-12);
    let mut hz = (zs[(bj + 1).min(zs.len() - 1)] - zs[bj.saturating_sub(1)]).max(1e-12);
    for _ in 0..60 {
        let k = 16;
        for a in -k..=k {
            for c in -k..=k {
                let r = (r0 + hr * a as f64 / k as f64).clamp(0.0, 1.0);
                let z = (z0 + hz * c as f64 / k as f64).clamp(0.0, 0.5);
                let v = f(r, z);
                if v > best {
                    best = v;
                    r0 = r;
                    z0 = z;
                }
            }
        }
        hr *= 0.5;
        hz *= 0.5;
    }
    (best, r0, z0)
}

/// Sup norms used to normalize the localized profiles (computed once per parameter set).
pub fn normalization(p: &InitialDataParams) -> Normalization {
    if let Some(hit) = NORM_CACHE.lock().unwrap().iter().find(|(q, _)| q == p) {
        return hit.1;
    }
    let (u1, _, _) = sup_by_sampling(|r, z| p.u1_profile(r, z));
    let (w1, _, _) = sup_by_sampling(|r, z| p.w1_profile(r, z));
    let norm = Normalization { u1, w1 };
    NORM_CACHE.lock().unwrap().push((*p, norm));
    norm
}

/// Initial `(u_1, omega_1)` at a point.
pub fn initial_value(p: &InitialDataParams, norm: &Normalization, r: f64, z: f64) -> (f64, f64) {
    let bg = InitialDataParams::background(r, z);
    (
        p.m_u1 * p.u1_profile(r, z) / norm.u1 + p.m_u2 * bg,
        p.m_w1 * p.w1_profile(r, z) / norm.w1 + p.m_w2 * bg,
    )
}

/// Nodal initial fields; both are even in `r` and odd in `z`.
pub fn initial_fields(p: &InitialDataParams, mesh: &Mesh2) -> (FieldGrid, FieldGrid) {
    let norm = normalization(p);
    let u = FieldGrid::from_fn(mesh, Parity::Even, Parity::Odd, |r, z| initial_value(p, &norm, r, z).0);
    let w = FieldGrid::from_fn(mesh, Parity::Even, Parity::Odd, |r, z| initial_value(p, &norm, r, z).1);
    let (n, m) = (u.n(), u.m());
    let mut out = (u, w);
    for f in [&mut out.0, &mut out.1] {
        for i in 0..=n {
            f.values[[i, 0]] = 0.0;
            f.values[[i, m]] = 0.0;
        }
        for j in 0..=m {
            f.values[[n, j]] = 0.0;
        }
    }
    out
}

/// Front of the initial swirl, located on the analytic initial data.
pub fn initial_front(p: &InitialDataParams) -> Front {
    let norm = normalization(p);
    let u = |r: f64, z: f64| initial_value(p, &norm, r, z).0;
    let (_, r_max, z_max) = sup_by_sampling(u);
    let h = 1e-4 * r_max;
    let ur = |r: f64| (u(r + h, z_max) - u((r - h).abs(), z_max)) / (2.0 * h);
    let samples = 20_000;
    let (mut best, mut r_best) = (f64::NEG_INFINITY, 0.0);
    for k in 1..samples {
        let r = r_max * k as f64 / samples as f64;
        let v = ur(r);
        if v > best {
            best = v;
            r_best = r;
        }
    }
    // Golden-section polish of the sampled maximum.
    let step = r_max / samples as f64;
    let (mut a, mut b) = ((r_best - step).max(0.0), (r_best + step).min(r_max));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if ur(c) > ur(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Front { r_max, z_max, r_grad: 0.5 * (a + b) }
}

/// Diffusion-coefficient variant.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DiffusionSpec {
    /// Degenerate variable coefficients vanishing like `r^2 + z^2` at the origin,
    /// plus a time-dependent part `tdp_scale / ||omega^theta||`.
    Degenerate { tdp_scale: f64 },
    /// Constant `nu^r = nu^z = mu`.
    Constant(f64),
    /// No diffusion.
    Inviscid,
}

impl DiffusionSpec {
    pub fn degenerate() -> Self {
        DiffusionSpec::Degenerate { tdp_scale: 2.5e-2 }
    }
}

/// Coefficients and derivatives at one point. Mixed derivatives vanish for all
/// variants and are omitted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NuPoint {
    pub nr: f64,
    pub nz: f64,
    pub nr_r: f64,
    pub nr_r_over_r: f64,
    pub nr_rr: f64,
    pub nr_z: f64,
    pub nz_r: f64,
    pub nz_r_over_r: f64,
    pub nz_z: f64,
    pub nz_zz: f64,
}

// S(x) = A x^2 / (1 + B x^2) with S', S'/x and S''.
#[derive(Clone, Copy)]
struct Bump {
    a: f64,
    b: f64,
}

impl Bump {
    fn eval(self, x: f64) -> [f64; 4] {
        let d = 1.0 + self.b * x * x;
        let v = self.a * x * x / d;
        let over_x = 2.0 * self.a / (d * d);
        let d2 = 2.0 * self.a * (1.0 - 3.0 * self.b * x * x) / (d * d * d);
        [v, over_x * x, over_x, d2]
    }

    // Composition with s(z) = sin(pi z)/pi: value, d/dz, d2/dz2.
    fn eval_z(self, z: f64) -> [f64; 3] {
        let pi = std::f64::consts::PI;
        let (sn, cs) = (pi * z).sin_cos();
        let [v, d1, _, d2] = self.eval(sn / pi);
        [v, d1 * cs, d2 * cs * cs - d1 * pi * sn]
    }
}

const NR_R: Bump = Bump { a: 10.0, b: 1e8 };
const NR_Z: Bump = Bump { a: 1e2, b: 1e11 };
const NZ_R: Bump = Bump { a: 0.1, b: 1e8 };
const NZ_Z: Bump = Bump { a: 1e4, b: 1e11 };

fn tdp(spec: &DiffusionSpec, omega_theta_max: f64) -> Result<f64, PhysicsError> {
    match *spec {
        DiffusionSpec::Degenerate { tdp_scale } => {
            if !(omega_theta_max > 0.0) {
                return Err(PhysicsError::DivisionByZero(omega_theta_max));
            }
            Ok(tdp_scale / omega_theta_max)
        }
        _ => Ok(0.0),
    }
}

/// Evaluates the diffusion coefficients and their derivatives at `(r, z)`.
pub fn nu_eval(spec: &DiffusionSpec, r: f64, z: f64, omega_theta_max: f64) -> Result<NuPoint, PhysicsError> {
    let t = tdp(spec, omega_theta_max)?;
    Ok(match *spec {
        DiffusionSpec::Inviscid => NuPoint::default(),
        DiffusionSpec::Constant(mu) => NuPoint { nr: mu, nz: mu, ..NuPoint::default() },
        DiffusionSpec::Degenerate { .. } => {
            let (rr, rz, zr, zz) = (NR_R.eval(r), NR_Z.eval_z(z), NZ_R.eval(r), NZ_Z.eval_z(z));
            NuPoint {
                nr: rr[0] + rz[0] + t,
                nz: zr[0] + zz[0] + t,
                nr_r: rr[1],
                nr_r_over_r: rr[2],
                nr_rr: rr[3],
                nr_z: rz[1],
                nz_r: zr[1],
                nz_r_over_r: zr[2],
                nz_z: zz[1],
                nz_zz: zz[2],
            }
        }
    })
}

/// Space-dependent part of `nu^r` (no time-dependent term).
pub fn nu_r_space(r: f64, z: f64) -> f64 {
    NR_R.eval(r)[0] + NR_Z.eval_z(z)[0]
}

/// Nodal coefficient fields on a mesh.
pub fn nu_fields(spec: &DiffusionSpec, mesh: &Mesh2, omega_theta_max: f64) -> Result<NuFields, PhysicsError> {
    let (n, m) = (mesh.n(), mesh.m());
    tdp(spec, omega_theta_max)?;
    if *spec == DiffusionSpec::Inviscid {
        return Ok(NuFields::zeros(n, m));
    }
    let (rn, zn) = (mesh.r.nodes(), mesh.z.nodes());
    let pts = Array2::from_shape_fn((n + 1, m + 1), |(i, j)| {
        nu_eval(spec, rn[i], zn[j], omega_theta_max).expect("checked above")
    });
    let pick = |f: fn(&NuPoint) -> f64| pts.map(f);
    Ok(NuFields {
        nr: pick(|p| p.nr),
        nz: pick(|p| p.nz),
        nr_r: pick(|p| p.nr_r),
        nr_r_over_r: pick(|p| p.nr_r_over_r),
        nr_rr: pick(|p| p.nr_rr),
        nr_z: pick(|p| p.nr_z),
        nz_z: pick(|p| p.nz_z),
        nz_zz: pick(|p| p.nz_zz),
        nz_r_over_r: pick(|p| p.nz_r_over_r),
    })
}

/// Circulation `Gamma = r^2 u_1`.
pub fn circulation(u1: &FieldGrid, mesh: &Mesh2) -> FieldGrid {
    let r = mesh.r.nodes();
    let mut g = u1.values.clone();
    Zip::indexed(&mut g).par_for_each(|(i, _), v| *v *= r[i] * r[i]);
    FieldGrid::new(g, Parity::Even, u1.parity_z)
}
