//! Weighted B-spline Galerkin solver for the stream-function equation
//! `-(psi_rr + 3 psi_r / r + psi_zz) = omega` on the mapped grid.
//!
//! The trial space is spanned by `w(rho) B_i(rho) B_j(eta)` where `B_i` are
//! uniform B-splines symmetrized to be even at `rho = 0`, `B_j` are odd
//! reflections at `eta = 0` and `eta = 1`, and the weight `w` vanishes on the
//! wall. The stiffness matrix is a sum of two Kronecker products,
//! `A = K_rho (x) M_eta + M_rho (x) K_eta`, which is solved by preconditioned
//! conjugate gradients with a fast-diagonalization preconditioner: the axial
//! pencil is diagonalized once per mesh and each axial mode reduces to a
//! banded radial solve.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, Axis, Zip};
use rayon::prelude::*;
use thiserror::Error;

use crate::band::{BandCholesky, SymBand};
use crate::fields::{FieldGrid, Parity};
use crate::meshmap::{Mesh2, MeshMap};
use crate::quad::GL6;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("assembly failed: {0}")]
    AssemblyFailure(String),
    #[error("solve failed: {0}")]
    SolveFailure(String),
    #[error("field shape {got:?} does not match the mesh {expected:?}")]
    ShapeMismatch { got: (usize, usize), expected: (usize, usize) },
}

/// Standard uniform B-spline of order `k` (degree `k - 1`), supported on `[0, k]`.
pub fn bspline(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "B-spline order must be at least 1");
    if x < 0.0 || x >= k as f64 {
        return 0.0;
    }
    if k == 1 {
        return 1.0;
    }
    let kf = k as f64;
    (x * bspline(k - 1, x) + (kf - x) * bspline(k - 1, x - 1.0)) / (kf - 1.0)
}

/// Derivative of [`bspline`].
pub fn bspline_deriv(k: usize, x: f64) -> f64 {
    if k == 1 {
        0.0
    } else {
        bspline(k - 1, x) - bspline(k - 1, x - 1.0)
    }
}

/// Radial weight vanishing on the wall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    /// `(1 - rho)^2`.
    #[default]
    Quadratic,
    /// `1 - rho`.
    Linear,
}

impl Weight {
    fn power(self) -> i32 {
        match self {
            Weight::Quadratic => 2,
            Weight::Linear => 1,
        }
    }

    /// `(w, w')` at `rho`.
    pub fn eval(self, rho: f64) -> (f64, f64) {
        let p = self.power();
        let d = 1.0 - rho;
        (d.powi(p), -(p as f64) * d.powi(p - 1))
    }
}

/// Discretization parameters of the Galerkin space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisSpec {
    /// Even B-spline order.
    pub order: usize,
    pub weight: Weight,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec { order: 2, weight: Weight::Quadratic }
    }
}

/// Symmetrized univariate factors on a uniform knot grid of `cells` intervals.
#[derive(Clone, Copy, Debug)]
struct Factors {
    k: usize,
    cells: usize,
    radial: bool,
}

impl Factors {
    fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Number of basis functions: `n + k/2` radially, `m - 1` axially.
    fn count(&self) -> usize {
        if self.radial {
            self.cells + self.k / 2
        } else {
            self.cells - 1
        }
    }

    /// Spline index of basis function `b`.
    fn index(&self, b: usize) -> f64 {
        if self.radial {
            b as f64
        } else {
            (b + 1) as f64
        }
    }

    /// Value and derivative of basis function `b` at `s`.
    fn eval(&self, b: usize, s: f64) -> (f64, f64) {
        let k = self.k;
        let h = self.h();
        let shift = self.index(b) - (k / 2) as f64;
        let x = |t: f64| t / h - shift;
        if self.radial {
            let scale = if b == 0 { 0.5 } else { 1.0 };
            let v = bspline(k, x(s)) + bspline(k, x(-s));
            let d = bspline_deriv(k, x(s)) - bspline_deriv(k, x(-s));
            (scale * v, scale * d / h)
        } else {
            let v = bspline(k, x(s)) - bspline(k, x(-s)) - bspline(k, x(2.0 - s));
            let d = bspline_deriv(k, x(s)) + bspline_deriv(k, x(-s)) + bspline_deriv(k, x(2.0 - s));
            (v, d / h)
        }
    }

    /// Basis functions that can be nonzero on cell `a`.
    fn candidates(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.k as isize;
        let a = a as isize;
        let count = self.count() as isize;
        let off = if self.radial { 0 } else { 1 };
        let direct = (a - k - off).max(0)..=(a + k - off).min(count - 1);
        let near_origin = 0..=(k - off).min(count - 1);
        let near_top = (count - k - 1).max(0)..=(count - 1);
        let mut all: Vec<usize> = direct.chain(near_origin).chain(near_top).map(|b| b as usize).collect();
        all.sort_unstable();
        all.dedup();
        all.into_iter()
    }
}

/// Row-sparse rectangular operator.
#[derive(Clone, Debug)]
struct RowOp {
    cols: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl RowOp {
    fn from_dense(d: &Array2<f64>) -> Self {
        let rows = d
            .outer_iter()
            .map(|row| {
                let first = row.iter().position(|&v| v != 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&v| v != 0.0).unwrap_or(0);
                if row.iter().all(|&v| v == 0.0) {
                    (0, Vec::new())
                } else {
                    (first, row.slice(s![first..=last]).to_vec())
                }
            })
            .collect();
        RowOp { cols: d.ncols(), rows }
    }

    /// `self * x` contracting over the rows of `x`.
    fn left(&self, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.nrows(), self.cols);
        let mut out = Array2::zeros((self.rows.len(), x.ncols()));
        out.axis_iter_mut(Axis(0)).into_par_iter().zip(&self.rows).for_each(|(mut o, (start, vals))| {
            for (c, &v) in vals.iter().enumerate() {
                o.scaled_add(v, &x.row(start + c));
            }
        });
        out
    }

    /// `x * self^T` contracting over the columns of `x`.
    fn right(&self, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.cols);
        let mut out = Array2::zeros((x.nrows(), self.rows.len()));
        out.axis_iter_mut(Axis(0)).into_par_iter().zip(x.axis_iter(Axis(0))).for_each(|(mut o, xr)| {
            for (r, (start, vals)) in self.rows.iter().enumerate() {
                o[r] = vals.iter().enumerate().map(|(c, v)| v * xr[start + c]).sum();
            }
        });
        out
    }
}

/// Sample points and weights of the composite six-point rule on the uniform
/// cells of `[0, 1]`: `(cell, t within cell, s, weight)`.
fn quadrature(cells: usize) -> Vec<(usize, f64, f64, f64)> {
    let h = 1.0 / cells as f64;
    (0..cells)
        .flat_map(|a| {
            GL6.iter().map(move |&(x, w)| {
                let t = 0.5 * (x + 1.0);
                (a, t, (a as f64 + t) * h, 0.5 * w * h)
            })
        })
        .collect()
}

/// One-dimensional Galerkin factors along an axis.
struct Pencil {
    stiff: SymBand,
    mass: SymBand,
    /// Load operator: nodal values to integrated moments.
    load: RowOp,
    /// Evaluation operator: coefficients to nodal values.
    eval: RowOp,
}

fn assemble_pencil(map: &MeshMap, f: Factors, weight: Weight) -> Pencil {
    let nb = f.count();
    let nodes = f.cells;
    let mut stiff = SymBand::zeros(nb, f.k - 1);
    let mut mass = SymBand::zeros(nb, f.k - 1);
    let mut load = Array2::zeros((nb, nodes + 1));
    for (a, t, s, gw) in quadrature(f.cells) {
        let xr = map.eval(s);
        let d1 = map.d1(s);
        let vals: Vec<(usize, f64, f64)> = f
            .candidates(a)
            .map(|b| {
                let (v, d) = f.eval(b, s);
                if f.radial {
                    let (w, wd) = weight.eval(s);
                    (b, w * v, wd * v + w * d)
                } else {
                    (b, v, d)
                }
            })
            .filter(|&(_, v, d)| v != 0.0 || d != 0.0)
            .collect();
        // Radial measure r^3 r_rho; axial measure z_eta.
        let (k_meas, m_meas) = if f.radial {
            let r3 = xr * xr * xr;
            (gw * r3 / d1, gw * r3 * d1)
        } else {
            (gw / d1, gw * d1)
        };
        for &(b1, v1, d1b) in &vals {
            for &(b2, v2, d2b) in &vals {
                if b2 <= b1 {
                    stiff.add(b1, b2, k_meas * d1b * d2b);
                    mass.add(b1, b2, m_meas * v1 * v2);
                }
            }
            load[[b1, a]] += m_meas * v1 * (1.0 - t);
            load[[b1, a + 1]] += m_meas * v1 * t;
        }
    }
    let mut eval = Array2::zeros((nodes + 1, nb));
    for node in 0..=nodes {
        let s = node as f64 / nodes as f64;
        let cell = node.min(nodes - 1);
        for b in f.candidates(cell) {
            let (v, _) = f.eval(b, s);
            let w = if f.radial { weight.eval(s).0 } else { 1.0 };
            eval[[node, b]] = w * v;
        }
    }
    Pencil { stiff, mass, load: RowOp::from_dense(&load), eval: RowOp::from_dense(&eval) }
}

/// Assembled Galerkin system for one mesh, with its preconditioner.
pub struct GalerkinSystem {
    key: (u64, u64),
    spec: BasisSpec,
    radial: Pencil,
    axial: Pencil,
    /// Axial generalized eigenvectors, `V^T M_eta V = I`.
    modes: Array2<f64>,
    /// Banded factors of `K_rho + lambda_l M_rho`, one per axial mode.
    mode_factors: Vec<BandCholesky>,
}

/// `y = S x` along the rows (first index) of `x`.
fn band_left(s: &SymBand, x: &Array2<f64>) -> Array2<f64> {
    let n = s.size();
    let p = s.bandwidth();
    let mut out = Array2::zeros(x.raw_dim());
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut o)| {
        for j in i.saturating_sub(p)..=(i + p).min(n - 1) {
            o.scaled_add(s.get(i, j), &x.row(j));
        }
    });
    out
}

/// `y = x S` along the columns (second index) of `x`.
fn band_right(x: &Array2<f64>, s: &SymBand) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    out.axis_iter_mut(Axis(0)).into_par_iter().zip(x.axis_iter(Axis(0))).for_each(|(mut o, xr)| {
        s.mul_into(|j| xr[j], |i, v| o[i] = v);
    });
    out
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

impl GalerkinSystem {
    pub fn assemble(mesh: &Mesh2, spec: BasisSpec) -> Result<Self, PoissonError> {
        let k = spec.order;
        if k < 2 || k % 2 != 0 {
            return Err(PoissonError::AssemblyFailure(format!("B-spline order {k} must be even and positive")));
        }
        let (n, m) = (mesh.n(), mesh.m());
        if n < k || m < k {
            return Err(PoissonError::AssemblyFailure(format!("grid {n}x{m} too coarse for order {k}")));
        }
        let radial = assemble_pencil(&mesh.r, Factors { k, cells: n, radial: true }, spec.weight);
        let axial = assemble_pencil(&mesh.z, Factors { k, cells: m, radial: false }, spec.weight);

        // Axial generalized eigenproblem K v = lambda M v, Jacobi-scaled for accuracy.
        let nz = axial.mass.size();
        let dscale: Vec<f64> = (0..nz).map(|j| 1.0 / axial.mass.get(j, j).sqrt()).collect();
        let ms = DMatrix::from_fn(nz, nz, |i, j| dscale[i] * axial.mass.get(i, j) * dscale[j]);
        let ks = DMatrix::from_fn(nz, nz, |i, j| dscale[i] * axial.stiff.get(i, j) * dscale[j]);
        let chol = ms
            .cholesky()
            .ok_or_else(|| PoissonError::AssemblyFailure("axial mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let linv_k = l
            .solve_lower_triangular(&ks)
            .ok_or_else(|| PoissonError::AssemblyFailure("singular axial factor".into()))?;
        let sym = l
            .solve_lower_triangular(&linv_k.transpose())
            .ok_or_else(|| PoissonError::AssemblyFailure("singular axial factor".into()))?;
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let q = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| PoissonError::AssemblyFailure("singular axial factor".into()))?;
        let modes = Array2::from_shape_fn((nz, nz), |(i, j)| dscale[i] * q[(i, j)]);

        let mode_factors = eig
            .eigenvalues
            .iter()
            .map(|&lam| {
                if !(lam > 0.0) {
                    return Err(PoissonError::AssemblyFailure(format!("axial eigenvalue {lam} is not positive")));
                }
                radial.stiff.plus_scaled(lam, &radial.mass).cholesky().map_err(|row| {
                    PoissonError::AssemblyFailure(format!("non-positive pivot at radial row {row}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(GalerkinSystem { key: mesh.key(), spec, radial, axial, modes, mode_factors })
    }

    pub fn key(&self) -> (u64, u64) {
        self.key
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    /// Coefficient array shape `(radial, axial)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.radial.mass.size(), self.axial.mass.size())
    }

    /// Stiffness entry `a(B_{i1 j1}, B_{i2 j2})`; axial indices start at zero
    /// for the first interior function.
    pub fn entry(&self, i1: usize, j1: usize, i2: usize, j2: usize) -> f64 {
        self.radial.stiff.get(i1, i2) * self.axial.mass.get(j1, j2)
            + self.radial.mass.get(i1, i2) * self.axial.stiff.get(j1, j2)
    }

    /// Matrix action `A c`.
    pub fn apply(&self, c: &Array2<f64>) -> Array2<f64> {
        let a = band_right(&band_left(&self.radial.stiff, c), &self.axial.mass);
        let b = band_right(&band_left(&self.radial.mass, c), &self.axial.stiff);
        a + b
    }

    /// Load vector `f(B_ij)` with `omega` interpolated bilinearly in `(rho, eta)`.
    pub fn load(&self, omega: &FieldGrid) -> Result<Array2<f64>, PoissonError> {
        let expected = (self.radial.eval.rows.len(), self.axial.eval.rows.len());
        let got = omega.values.dim();
        if got != expected {
            return Err(PoissonError::ShapeMismatch { got, expected });
        }
        Ok(self.axial.load.right(&self.radial.load.left(&omega.values)))
    }

    /// Fast-diagonalization approximate inverse.
    fn precondition(&self, r: &Array2<f64>) -> Array2<f64> {
        // Modal coefficients with the mode index first for contiguous solves.
        let mut g = self.modes.t().dot(&r.t());
        g.axis_iter_mut(Axis(0)).into_par_iter().zip(&self.mode_factors).for_each(|(mut row, f)| {
            let mut buf = row.to_vec();
            f.solve_in_place(&mut buf);
            row.assign(&Array1::from(buf));
        });
        self.modes.dot(&g).reversed_axes()
    }

    /// Solves `A c = f` by preconditioned conjugate gradients.
    pub fn solve_coefficients(&self, f: &Array2<f64>) -> Result<Array2<f64>, PoissonError> {
        let fnorm = dot(f, f).sqrt();
        if fnorm == 0.0 {
            return Ok(Array2::zeros(f.raw_dim()));
        }
        if !fnorm.is_finite() {
            return Err(PoissonError::SolveFailure("non-finite load".into()));
        }
        let mut x = self.precondition(f);
        let mut r = f - &self.apply(&x);
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut res = dot(&r, &r).sqrt();
        let mut best = (res, x.clone());
        let mut stall = 0;
        for _ in 0..200 {
            if res <= 1e-14 * fnorm || stall >= 6 {
                break;
            }
            let ap = self.apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            x.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &ap);
            res = dot(&r, &r).sqrt();
            if res < 0.5 * best.0 {
                best = (res, x.clone());
                stall = 0;
            } else {
                stall += 1;
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + &(&p * beta);
        }
        if res < best.0 {
            best = (res, x);
        }
        let (res, x) = best;
        if !(res <= 1e-9 * fnorm) {
            return Err(PoissonError::SolveFailure(format!("residual {res:e} relative to load {fnorm:e}")));
        }
        Ok(x)
    }

    /// Nodal values of `sum c_ij B^w_ij`.
    pub fn evaluate(&self, c: &Array2<f64>) -> FieldGrid {
        let values = self.axial.eval.right(&self.radial.eval.left(c));
        let mut psi = FieldGrid::new(values, Parity::Even, Parity::Odd);
        psi.project_parity();
        psi
    }

    /// Solves for `psi_1` given nodal `omega_1`.
    pub fn solve(&self, omega: &FieldGrid) -> Result<FieldGrid, PoissonError> {
        let f = self.load(omega)?;
        let c = self.solve_coefficients(&f)?;
        Ok(self.evaluate(&c))
    }
}

/// Poisson solver that reassembles only when the mesh changes.
pub struct PoissonSolver {
    spec: BasisSpec,
    system: Option<Arc<GalerkinSystem>>,
    assemblies: usize,
}

impl PoissonSolver {
    pub fn new(spec: BasisSpec) -> Self {
        PoissonSolver { spec, system: None, assemblies: 0 }
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    /// Number of assemblies performed so far.
    pub fn assemblies(&self) -> usize {
        self.assemblies
    }

    /// System for `mesh`, assembled on first use.
    pub fn system(&mut self, mesh: &Mesh2) -> Result<Arc<GalerkinSystem>, PoissonError> {
        match &self.system {
            Some(s) if s.key() == mesh.key() => Ok(s.clone()),
            _ => {
                let s = Arc::new(GalerkinSystem::assemble(mesh, self.spec)?);
                self.assemblies += 1;
                log::debug!("assembled Poisson system for {}x{} grid", mesh.n(), mesh.m());
                self.system = Some(s.clone());
                Ok(s)
            }
        }
    }

    pub fn solve(&mut self, mesh: &Mesh2, omega: &FieldGrid) -> Result<FieldGrid, PoissonError> {
        self.system(mesh)?.solve(omega)
    }
}

impl Default for PoissonSolver {
    fn default() -> Self {
        PoissonSolver::new(BasisSpec::default())
    }
}
