//! Low-pass filters in computational coordinates and their re-meshed variant.

use ndarray::{Array1, ArrayViewMut1, Axis};
use rayon::prelude::*;

use crate::fields::{Closure, FieldGrid};
use crate::meshmap::{build_adaptive_mesh, interpolate_ip4, Front, Mesh2, MeshError};
use crate::physics::soft_cutoff;

/// Filter strength `c(rho, eta)` with values in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strength {
    Uniform(f64),
    /// L-shaped band covering the tail region, vanishing near the origin
    /// box `[0, 0.45]^2` and beyond `0.8` in either coordinate.
    LShape,
}

fn cutoff_bar(x: f64, a: f64) -> f64 {
    1.0 - soft_cutoff(x, a, 0.05)
}

/// The L-shaped strength function.
pub fn strength_l(rho: f64, eta: f64) -> f64 {
    cutoff_bar(rho, 0.8) * cutoff_bar(eta, 0.8) * (1.0 - cutoff_bar(rho, 0.45) * cutoff_bar(eta, 0.45))
}

impl Strength {
    pub fn eval(&self, rho: f64, eta: f64) -> f64 {
        match *self {
            Strength::Uniform(c) => c,
            Strength::LShape => strength_l(rho, eta),
        }
    }
}

/// One smoothing pass `f_i + c_i/4 (f_{i-1} + f_{i+1} - 2 f_i)` along a line.
fn smooth_line(mut line: ArrayViewMut1<f64>, c: impl Fn(usize) -> f64, left: Closure, right: Closure) {
    let n = line.len() - 1;
    let f: Array1<f64> = line.to_owned();
    let lg = left.ghost(f[0], f[1], f[2]);
    let rg = right.ghost(f[n], f[n - 1], f[n - 2]);
    for i in 0..=n {
        let a = if i == 0 { lg } else { f[i - 1] };
        let b = if i == n { rg } else { f[i + 1] };
        line[i] = f[i] + 0.25 * c(i) * (a + b - 2.0 * f[i]);
    }
}

/// Low-pass filter: a `rho` pass followed by an `eta` pass.
///
/// Ghost values follow the field's parity at `rho = 0` and at both `eta`
/// ends; the wall `rho = 1` uses cubic extrapolation.
pub fn lpf(f: &FieldGrid, c: Strength) -> FieldGrid {
    let (n, m) = (f.n(), f.m());
    let cval = |i: usize, j: usize| c.eval(i as f64 / n as f64, j as f64 / m as f64);
    if let Strength::Uniform(v) = c {
        if v == 0.0 {
            return f.clone();
        }
    }
    let mut out = f.clone();
    let (rl, zl) = (f.parity_r.closure(), f.parity_z.closure());
    out.values.axis_iter_mut(Axis(1)).into_par_iter().enumerate().for_each(|(j, line)| {
        smooth_line(line, |i| cval(i, j), rl, Closure::OneSided);
    });
    out.values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, line)| {
        smooth_line(line, |j| cval(i, j), zl, zl);
    });
    out
}

/// `k` successive applications of [`lpf`].
pub fn lpf_k(f: &FieldGrid, c: Strength, k: usize) -> FieldGrid {
    (0..k).fold(f.clone(), |g, _| lpf(&g, c))
}

/// Re-meshed low-pass filter: interpolate to `coarse`, filter `k` times,
/// interpolate back to `fine`.
pub fn rlpf(f: &FieldGrid, fine: &Mesh2, coarse: &Mesh2, k: usize, c: Strength) -> Result<FieldGrid, MeshError> {
    let hat = interpolate_ip4(f, fine, coarse)?;
    let smooth = lpf_k(&hat, c, k);
    let mut back = interpolate_ip4(&smooth, coarse, fine)?;
    back.project_parity();
    Ok(back)
}

/// Coarse `(nn, mm)` mesh adapted to the current front.
pub fn coarse_mesh(front: &Front, nn: usize, mm: usize) -> Result<Mesh2, MeshError> {
    build_adaptive_mesh(front, nn, mm)
}
