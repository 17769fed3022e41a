//! Blowup-rate estimation by inverse-power-law regression, and the consistency
//! check of fitted exponents against the asymptotic scaling relations.
//!
//! A quantity blowing up like `v(t) ~ C (T - t)^(-c)` satisfies
//! `v / v' = (T - t) / c` (model 1) and `v^(-1/c) ~ C' (T - t)` (model 2),
//! both linear in `t`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("window [{0}, {1}] contains no samples")]
    EmptyWindow(f64, f64),
    #[error("window holds {got} samples, at least {need} are needed")]
    TooFewSamples { got: usize, need: usize },
    #[error("no blowup trend: regression slope {0} is not negative")]
    DegenerateFit(f64),
    #[error("rate search did not settle after {0} re-centerings")]
    NonConvergent(usize),
    #[error("missing exponent `{0}`")]
    MissingExponent(String),
}

/// Samples `(t_i, v_i)` with strictly increasing `t` and positive `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self, FitError> {
        if t.len() != v.len() {
            return Err(FitError::InvalidSeries(format!("{} times but {} values", t.len(), v.len())));
        }
        if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidSeries(format!("times not increasing at index {}", k + 1)));
        }
        if let Some(k) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(FitError::InvalidSeries(format!("non-positive value {} at index {k}", v[k])));
        }
        Ok(TimeSeries { t, v })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Samples with `t1 <= t <= t2`.
    pub fn window(&self, w: Window) -> Result<TimeSeries, FitError> {
        let (t, v): (Vec<f64>, Vec<f64>) =
            self.t.iter().zip(&self.v).filter(|(&t, _)| t >= w.t1 && t <= w.t2).map(|(&a, &b)| (a, b)).unzip();
        if t.is_empty() {
            return Err(FitError::EmptyWindow(w.t1, w.t2));
        }
        Ok(TimeSeries { t, v })
    }
}

/// Fitting interval `[t1, t2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub t1: f64,
    pub t2: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window { t1: 1.60e-4, t2: 1.75e-4 }
    }
}

/// Outcome of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitResult {
    /// Blowup rate.
    pub c: f64,
    /// Blowup time.
    pub t_blowup: f64,
    pub r2: f64,
    pub model: u8,
    pub window: Window,
    /// Regression slope and intercept (model 2: of the series scaled to a
    /// maximum of one).
    pub a: f64,
    pub b: f64,
}

/// Least-squares line `y = a t + b` and its coefficient of determination.
pub fn linear_regression(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in t.iter().zip(y) {
        let (dt, dy) = (a - tm, b - ym);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let a = sty / stt;
    let b = ym - a * tm;
    let ss_err: f64 = t.iter().zip(y).map(|(&x, &v)| (v - a * x - b).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_err / syy } else { 1.0 };
    (a, b, r2)
}

/// Second-order derivative on a nonuniform grid: centred three-point formula
/// inside, one-sided three-point formulas at the ends.
pub fn derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let (k, end) = match i {
                0 => (1, -1),
                _ if i == n - 1 => (n - 2, 1),
                _ => (i, 0),
            };
            let (h1, h2) = (t[k] - t[k - 1], t[k + 1] - t[k]);
            let (a, b, c) = (v[k - 1], v[k], v[k + 1]);
            match end {
                0 => -h2 / (h1 * (h1 + h2)) * a + (h2 - h1) / (h1 * h2) * b + h1 / (h2 * (h1 + h2)) * c,
                -1 => -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * a + (h1 + h2) / (h1 * h2) * b - h1 / (h2 * (h1 + h2)) * c,
                _ => h2 / (h1 * (h1 + h2)) * a - (h1 + h2) / (h1 * h2) * b + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * c,
            }
        })
        .collect()
}

pub const MIN_SAMPLES: usize = 8;
// Slopes above this value (rates beyond 1000) carry no usable blowup trend.
const SLOPE_FLOOR: f64 = -1e-3;

/// Model 1: regression of `v / v'` on `t`.
pub fn fit_model1(series: &TimeSeries, window: Window) -> Result<FitResult, FitError> {
    let s = series.window(window)?;
    if s.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples { got: s.len(), need: MIN_SAMPLES });
    }
    let dv = derivative(&s.t, &s.v);
    let y: Vec<f64> = s.v.iter().zip(&dv).map(|(v, d)| v / d).collect();
    let (a, b, r2) = linear_regression(&s.t, &y);
    if !(a < SLOPE_FLOOR) {
        return Err(FitError::DegenerateFit(a));
    }
    Ok(FitResult { c: -1.0 / a, t_blowup: -b / a, r2, model: 1, window, a, b })
}

pub const CANDIDATES: usize = 100;
pub const HALF_WIDTH: f64 = 0.1;
pub const MAX_RECENTER: usize = 50;
/// Extra scans, each over one candidate spacing on either side of the
/// previous winner.
pub const REFINEMENTS: usize = 2;
const C_FLOOR: f64 = 1e-3;

// Values are normalized by their maximum so that the transform stays in
// floating-point range for small rates; this rescales `a` and `b` alike.
fn regress_power(s: &TimeSeries, c: f64) -> (f64, f64, f64) {
    let top = s.v.iter().copied().fold(0.0, f64::max);
    let y: Vec<f64> = s.v.iter().map(|v| (v / top).powf(-1.0 / c)).collect();
    linear_regression(&s.t, &y)
}

/// Best-`R^2` candidate on a uniform grid over `[lo, hi]`, with its index.
fn scan(s: &TimeSeries, lo: f64, hi: f64) -> (usize, f64) {
    let grid: Vec<f64> = (0..CANDIDATES).map(|k| lo + (hi - lo) * k as f64 / (CANDIDATES - 1) as f64).collect();
    let r2: Vec<f64> = grid
        .par_iter()
        .map(|&c| match regress_power(s, c) {
            (a, b, r) if a.is_finite() && b.is_finite() && r.is_finite() => r,
            _ => f64::NEG_INFINITY,
        })
        .collect();
    // First maximum wins ties, so the result does not depend on the thread count.
    let k = (0..CANDIDATES).fold(0, |b, k| if r2[k] > r2[b] { k } else { b });
    (k, grid[k])
}

/// Model 2: scan of rates `c` around `c_init` maximizing the `R^2` of the
/// regression of `v^(-1/c)` on `t`. The scan re-centers while the best rate
/// sits at the edge of the range, then refines around the winner.
pub fn fit_model2(series: &TimeSeries, window: Window, c_init: f64) -> Result<FitResult, FitError> {
    if !(c_init > 0.0) {
        return Err(FitError::InvalidSeries(format!("initial rate {c_init} is not positive")));
    }
    let s = series.window(window)?;
    if s.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples { got: s.len(), need: MIN_SAMPLES });
    }
    let mut centre = c_init;
    let mut settled = None;
    for _ in 0..=MAX_RECENTER {
        let lo = (centre - HALF_WIDTH).max(C_FLOOR);
        let (k, c) = scan(&s, lo, centre + HALF_WIDTH);
        if k == CANDIDATES - 1 || (k == 0 && lo > C_FLOOR) {
            centre = c;
            continue;
        }
        settled = Some(c);
        break;
    }
    let mut c = settled.ok_or(FitError::NonConvergent(MAX_RECENTER))?;
    let mut half = 2.0 * HALF_WIDTH / (CANDIDATES - 1) as f64;
    for _ in 0..REFINEMENTS {
        c = scan(&s, (c - half).max(C_FLOOR), c + half).1;
        half *= 2.0 / (CANDIDATES - 1) as f64;
    }
    let (a, b, r2) = regress_power(&s, c);
    if !(a < 0.0) {
        return Err(FitError::DegenerateFit(a));
    }
    Ok(FitResult { c, t_blowup: -b / a, r2, model: 2, window, a, b })
}

/// Model 1 followed by model 2 seeded with its rate.
pub fn fit_both(series: &TimeSeries, window: Window) -> Result<(FitResult, FitResult), FitError> {
    let m1 = fit_model1(series, window)?;
    let m2 = fit_model2(series, window, m1.c)?;
    Ok((m1, m2))
}

/// One scaling relation and how far the exponents are from satisfying it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationCheck {
    pub relation: String,
    pub residual: f64,
    pub pass: bool,
}

/// Exponent names understood by [`check_scaling_relations`].
pub const CORE_EXPONENTS: [&str; 5] = ["c_u", "c_omega", "c_psi", "c_l", "c_s"];

/// Evaluates the scaling relations among fitted exponents.
///
/// Core relations (all required): `c_u = 1`, `c_omega = 1 + c_l`,
/// `c_psi = 1 - c_l`, `c_s = 1/2`, `c_l = 1`. Derived relations, checked when
/// the exponent is present: `c_psi1_r = c_psi1_z = 1`, `c_u1_r = c_u1_z = 2`,
/// `c_omega_theta = c_omega_r = c_omega_z = 3/2`.
pub fn check_scaling_relations(exps: &BTreeMap<String, f64>, tol: f64) -> Result<Vec<RelationCheck>, FitError> {
    let get = |k: &str| exps.get(k).copied().ok_or_else(|| FitError::MissingExponent(k.to_owned()));
    let (cu, cw, cp, cl, cs) = (get("c_u")?, get("c_omega")?, get("c_psi")?, get("c_l")?, get("c_s")?);
    let mut out = Vec::new();
    let mut push = |relation: &str, residual: f64| {
        out.push(RelationCheck { relation: relation.to_owned(), residual, pass: residual.abs() <= tol });
    };
    push("c_u = 1", cu - 1.0);
    push("c_omega = 1 + c_l", cw - 1.0 - cl);
    push("c_psi = 1 - c_l", cp - 1.0 + cl);
    push("c_s = 1/2", cs - 0.5);
    push("c_l = 1", cl - 1.0);
    for (key, target) in [
        ("c_psi1_r", 1.0),
        ("c_psi1_z", 1.0),
        ("c_u1_r", 2.0),
        ("c_u1_z", 2.0),
        ("c_omega_theta", 1.5),
        ("c_omega_r", 1.5),
        ("c_omega_z", 1.5),
    ] {
        if let Some(&c) = exps.get(key) {
            push(&format!("{key} = {target}"), c - target);
        }
    }
    Ok(out)
}
