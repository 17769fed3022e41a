//! Grid storage, mapped finite differences and the discrete diffusion operators.
//!
//! Fields live on the `(n+1) x (m+1)` tensor grid `(rho_i, eta_j)`. Derivatives
//! are second-order centered differences in the computational coordinates,
//! converted to physical derivatives with the analytic map derivatives.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use crate::meshmap::Mesh2;

/// Reflection symmetry of a field about a domain edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
    /// No symmetry known; boundary stencils fall back to one-sided formulas.
    None,
}

impl Parity {
    /// Parity of the derivative of a field with this parity.
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::None => Parity::None,
        }
    }

    /// Parity of a product of two fields.
    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }

    /// Reflection sign `f(-x) = sign * f(x)`, if the parity is known.
    pub fn sign(self) -> Option<f64> {
        match self {
            Parity::Even => Some(1.0),
            Parity::Odd => Some(-1.0),
            Parity::None => None,
        }
    }

    pub(crate) fn closure(self) -> Closure {
        match self {
            Parity::Even => Closure::Even,
            Parity::Odd => Closure::Odd,
            Parity::None => Closure::OneSided,
        }
    }
}

/// Boundary closure of a 1-D stencil at one end of a grid line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    /// Ghost value mirrors the first interior value.
    Even,
    /// Ghost value is the negated first interior value.
    Odd,
    /// Ghost value from cubic extrapolation; derivatives use one-sided stencils.
    OneSided,
}

impl Closure {
    /// Value at the ghost index just outside the end whose first three values
    /// (counted inward) are `f0, f1, f2`.
    pub fn ghost(self, f0: f64, f1: f64, f2: f64) -> f64 {
        match self {
            Closure::Even => f1,
            Closure::Odd => -f1,
            Closure::OneSided => 3.0 * f0 - 3.0 * f1 + f2,
        }
    }
}

/// Scalar field sampled on the tensor grid, with its symmetry metadata.
///
/// `parity_r` is the symmetry at `rho = 0`; `parity_z` applies at both `eta = 0`
/// and `eta = 1`. The wall `rho = 1` always uses extrapolation closures.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub values: Array2<f64>,
    pub parity_r: Parity,
    pub parity_z: Parity,
}

impl FieldGrid {
    pub fn new(values: Array2<f64>, parity_r: Parity, parity_z: Parity) -> Self {
        FieldGrid { values, parity_r, parity_z }
    }

    pub fn zeros(n: usize, m: usize, parity_r: Parity, parity_z: Parity) -> Self {
        FieldGrid::new(Array2::zeros((n + 1, m + 1)), parity_r, parity_z)
    }

    /// Samples `f(r, z)` at the physical nodes of `mesh`.
    pub fn from_fn(
        mesh: &Mesh2,
        parity_r: Parity,
        parity_z: Parity,
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Self {
        let r = mesh.r.nodes();
        let z = mesh.z.nodes();
        let mut values = Array2::zeros((r.len(), z.len()));
        Zip::indexed(&mut values).par_for_each(|(i, j), v| *v = f(r[i], z[j]));
        FieldGrid::new(values, parity_r, parity_z)
    }

    /// Samples `f(rho, eta)` at the computational nodes.
    pub fn from_computational_fn(
        n: usize,
        m: usize,
        parity_r: Parity,
        parity_z: Parity,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let values =
            Array2::from_shape_fn((n + 1, m + 1), |(i, j)| f(i as f64 / n as f64, j as f64 / m as f64));
        FieldGrid::new(values, parity_r, parity_z)
    }

    /// Number of intervals in `rho`.
    pub fn n(&self) -> usize {
        self.values.nrows() - 1
    }

    /// Number of intervals in `eta`.
    pub fn m(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Same values with different symmetry metadata.
    pub fn with_parity(mut self, parity_r: Parity, parity_z: Parity) -> Self {
        self.parity_r = parity_r;
        self.parity_z = parity_z;
        self
    }

    /// Zeroes the symmetry planes on which the field is odd.
    pub fn project_parity(&mut self) {
        if self.parity_r == Parity::Odd {
            self.values.row_mut(0).fill(0.0);
        }
        if self.parity_z == Parity::Odd {
            let m = self.m();
            self.values.column_mut(0).fill(0.0);
            self.values.column_mut(m).fill(0.0);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let mut values = self.values.clone();
        values.par_mapv_inplace(f);
        FieldGrid::new(values, self.parity_r, self.parity_z)
    }
}

pub(crate) fn d1_lane(f: ArrayView1<f64>, mut out: ArrayViewMut1<f64>, h: f64, left: Closure, right: Closure) {
    let n = f.len() - 1;
    let inv = 0.5 / h;
    for i in 1..n {
        out[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    out[0] = match left {
        Closure::Even => 0.0,
        Closure::Odd => 2.0 * f[1] * inv,
        Closure::OneSided => (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv,
    };
    out[n] = match right {
        Closure::Even => 0.0,
        Closure::Odd => -2.0 * f[n - 1] * inv,
        Closure::OneSided => (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) * inv,
    };
}

pub(crate) fn d2_lane(f: ArrayView1<f64>, mut out: ArrayViewMut1<f64>, h: f64, left: Closure, right: Closure) {
    let n = f.len() - 1;
    let inv = 1.0 / (h * h);
    for i in 1..n {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv;
    }
    out[0] = match left {
        Closure::Even => 2.0 * (f[1] - f[0]) * inv,
        Closure::Odd => -2.0 * f[0] * inv,
        Closure::OneSided => (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv,
    };
    out[n] = match right {
        Closure::Even => 2.0 * (f[n - 1] - f[n]) * inv,
        Closure::Odd => -2.0 * f[n] * inv,
        Closure::OneSided => (2.0 * f[n] - 5.0 * f[n - 1] + 4.0 * f[n - 2] - f[n - 3]) * inv,
    };
}

fn apply_lanes(
    f: &FieldGrid,
    axis: Axis,
    kernel: fn(ArrayView1<f64>, ArrayViewMut1<f64>, f64, Closure, Closure),
) -> Array2<f64> {
    let (h, left, right) = if axis == Axis(0) {
        (1.0 / f.n() as f64, f.parity_r.closure(), Closure::OneSided)
    } else {
        (1.0 / f.m() as f64, f.parity_z.closure(), f.parity_z.closure())
    };
    let mut out = Array2::zeros(f.values.raw_dim());
    Zip::from(f.values.lanes(axis))
        .and(out.lanes_mut(axis))
        .par_for_each(|a, b| kernel(a, b, h, left, right));
    out
}

/// Centered difference in `rho` (computational derivative `f_rho`).
pub fn d_rho(f: &FieldGrid) -> FieldGrid {
    FieldGrid::new(apply_lanes(f, Axis(0), d1_lane), f.parity_r.flip(), f.parity_z)
}

/// Second difference in `rho`.
pub fn d2_rho(f: &FieldGrid) -> FieldGrid {
    FieldGrid::new(apply_lanes(f, Axis(0), d2_lane), f.parity_r, f.parity_z)
}

/// Centered difference in `eta`.
pub fn d_eta(f: &FieldGrid) -> FieldGrid {
    FieldGrid::new(apply_lanes(f, Axis(1), d1_lane), f.parity_r, f.parity_z.flip())
}

/// Second difference in `eta`.
pub fn d2_eta(f: &FieldGrid) -> FieldGrid {
    FieldGrid::new(apply_lanes(f, Axis(1), d2_lane), f.parity_r, f.parity_z)
}

/// Physical derivative `f_r = f_rho / r_rho`.
pub fn ddr(f: &FieldGrid, mesh: &Mesh2) -> FieldGrid {
    let mut d = d_rho(f);
    let rr = mesh.r.node_d1();
    Zip::indexed(&mut d.values).par_for_each(|(i, _), v| *v /= rr[i]);
    d.project_parity();
    d
}

/// Physical derivative `f_z = f_eta / z_eta`.
pub fn ddz(f: &FieldGrid, mesh: &Mesh2) -> FieldGrid {
    let mut d = d_eta(f);
    let zz = mesh.z.node_d1();
    Zip::indexed(&mut d.values).par_for_each(|(_, j), v| *v /= zz[j]);
    d.project_parity();
    d
}

/// `f_rr = f_rhorho / r_rho^2 - r_rhorho f_rho / r_rho^3`.
pub fn d2dr2(f: &FieldGrid, mesh: &Mesh2) -> FieldGrid {
    let d1 = d_rho(f);
    let mut d2 = d2_rho(f);
    let (a, b) = (mesh.r.node_d1(), mesh.r.node_d2());
    Zip::indexed(&mut d2.values).and(&d1.values).par_for_each(|(i, _), v, &g| {
        *v = *v / (a[i] * a[i]) - b[i] * g / (a[i] * a[i] * a[i]);
    });
    d2.project_parity();
    d2
}

/// `f_zz = f_etaeta / z_eta^2 - z_etaeta f_eta / z_eta^3`.
pub fn d2dz2(f: &FieldGrid, mesh: &Mesh2) -> FieldGrid {
    let d1 = d_eta(f);
    let mut d2 = d2_eta(f);
    let (a, b) = (mesh.z.node_d1(), mesh.z.node_d2());
    Zip::indexed(&mut d2.values).and(&d1.values).par_for_each(|(_, j), v, &g| {
        *v = *v / (a[j] * a[j]) - b[j] * g / (a[j] * a[j] * a[j]);
    });
    d2.project_parity();
    d2
}

/// Velocity `(u^r, u^z) = (-r psi_z, 2 psi + r psi_r)` from the stream function.
///
/// `u^r` is odd in `r` and even in `z`; `u^z` is even in `r` and odd in `z`.
/// The wall row of `u^r` is set to zero (no-flow through `r = 1`).
pub fn velocity_from_stream(psi: &FieldGrid, mesh: &Mesh2) -> (FieldGrid, FieldGrid) {
    let psi_r = ddr(psi, mesh);
    let psi_z = ddz(psi, mesh);
    velocity_from_derivatives(psi, &psi_r, &psi_z, mesh)
}

/// Velocity from precomputed (possibly filtered) stream-function derivatives.
pub fn velocity_from_derivatives(
    psi: &FieldGrid,
    psi_r: &FieldGrid,
    psi_z: &FieldGrid,
    mesh: &Mesh2,
) -> (FieldGrid, FieldGrid) {
    let r = mesh.r.nodes();
    let n = psi.n();
    let mut ur = Array2::zeros(psi.values.raw_dim());
    Zip::indexed(&mut ur).and(&psi_z.values).par_for_each(|(i, _), u, &g| {
        *u = if i == n { 0.0 } else { -r[i] * g };
    });
    let mut uz = Array2::zeros(psi.values.raw_dim());
    Zip::indexed(&mut uz)
        .and(&psi.values)
        .and(&psi_r.values)
        .par_for_each(|(i, _), u, &p, &pr| *u = 2.0 * p + r[i] * pr);
    (
        FieldGrid::new(ur, Parity::Odd, Parity::Even),
        FieldGrid::new(uz, Parity::Even, Parity::Odd),
    )
}

/// Nodal diffusion coefficients and the derivatives the diffusion terms need.
///
/// The coefficient families used here are additively separable in `r` and `z`,
/// so the mixed derivatives `nu_rz` vanish identically and are not stored.
/// `nr_r_over_r` and `nz_r_over_r` hold the analytic quotients, finite at `r = 0`.
#[derive(Clone, Debug)]
pub struct NuFields {
    pub nr: Array2<f64>,
    pub nz: Array2<f64>,
    pub nr_r: Array2<f64>,
    pub nr_r_over_r: Array2<f64>,
    pub nr_rr: Array2<f64>,
    pub nr_z: Array2<f64>,
    pub nz_z: Array2<f64>,
    pub nz_zz: Array2<f64>,
    pub nz_r_over_r: Array2<f64>,
}

impl NuFields {
    pub fn zeros(n: usize, m: usize) -> Self {
        let z = Array2::zeros((n + 1, m + 1));
        NuFields {
            nr: z.clone(),
            nz: z.clone(),
            nr_r: z.clone(),
            nr_r_over_r: z.clone(),
            nr_rr: z.clone(),
            nr_z: z.clone(),
            nz_z: z.clone(),
            nz_zz: z.clone(),
            nz_r_over_r: z,
        }
    }

    pub fn is_zero(&self) -> bool {
        [&self.nr, &self.nz].iter().all(|a| a.iter().all(|&v| v == 0.0))
    }
}

/// `f_r / r`, replaced at `r = 0` by its even-parity limit `f_rr`.
fn over_r(f_r: &FieldGrid, f_rr: &FieldGrid, mesh: &Mesh2) -> Array2<f64> {
    let r = mesh.r.nodes();
    let mut out = f_r.values.clone();
    Zip::indexed(&mut out).and(&f_rr.values).par_for_each(|(i, _), v, &rr| {
        *v = if i == 0 { rr } else { *v / r[i] };
    });
    out
}

/// Diffusion term of the `u_1` equation:
/// `nu^r (u_rr + 3u_r/r) + nu^z u_zz + (nu^r_r/r) u + nu^r_r u_r + nu^z_z u_z`.
pub fn diffusion_u1(u1: &FieldGrid, nu: &NuFields, mesh: &Mesh2) -> FieldGrid {
    let mut out = FieldGrid::zeros(u1.n(), u1.m(), u1.parity_r, u1.parity_z);
    if nu.is_zero() {
        return out;
    }
    add_scalar_diffusion(&mut out.values, u1, nu, mesh);
    out
}

fn add_scalar_diffusion(out: &mut Array2<f64>, f: &FieldGrid, nu: &NuFields, mesh: &Mesh2) {
    let f_r = ddr(f, mesh);
    let f_rr = d2dr2(f, mesh);
    let f_z = ddz(f, mesh);
    let f_zz = d2dz2(f, mesh);
    let f_r_r = over_r(&f_r, &f_rr, mesh);
    Zip::indexed(out).par_for_each(|ij, o| {
        *o += nu.nr[ij] * (f_rr.values[ij] + 3.0 * f_r_r[ij])
            + nu.nz[ij] * f_zz.values[ij]
            + nu.nr_r_over_r[ij] * f.values[ij]
            + nu.nr_r[ij] * f_r.values[ij]
            + nu.nz_z[ij] * f_z.values[ij];
    });
}

/// Diffusion term of the `omega_1` equation, including the cross terms coupling
/// to the velocity through the coefficient gradients.
///
/// `psi_z` is `psi_{1,z}` (so that `u^r = -r psi_z`), and `uz` is `u^z`.
pub fn diffusion_w1(
    w1: &FieldGrid,
    psi_z: &FieldGrid,
    uz: &FieldGrid,
    nu: &NuFields,
    mesh: &Mesh2,
) -> FieldGrid {
    let mut out = FieldGrid::zeros(w1.n(), w1.m(), w1.parity_r, w1.parity_z);
    if nu.is_zero() {
        return out;
    }
    add_scalar_diffusion(&mut out.values, w1, nu, mesh);

    let g_r = ddr(psi_z, mesh);
    let g_rr = d2dr2(psi_z, mesh);
    let g_z = ddz(psi_z, mesh);
    let g_zz = d2dz2(psi_z, mesh);
    let g_r_r = over_r(&g_r, &g_rr, mesh);
    let uz_r = ddr(uz, mesh);
    let uz_rr = d2dr2(uz, mesh);
    let uz_zz = d2dz2(uz, mesh);
    let uz_r_r = over_r(&uz_r, &uz_rr, mesh);

    Zip::indexed(&mut out.values).par_for_each(|ij, o| {
        *o += -nu.nr_z[ij] * (g_rr.values[ij] + 3.0 * g_r_r[ij])
            - nu.nz_z[ij] * g_zz.values[ij]
            - nu.nr_r_over_r[ij] * (uz_rr.values[ij] + uz_r_r[ij])
            - nu.nz_r_over_r[ij] * uz_zz.values[ij]
            - nu.nz_zz[ij] * g_z.values[ij]
            - nu.nr_rr[ij] * uz_r_r[ij];
    });
    out
}

/// Applies the wall and symmetry conditions to the prognostic fields.
///
/// Sets `u_1 = 0` and `omega_1 = -psi_{1,rr}` on the wall row `i = n` (one-sided
/// second-order stencil for `psi_rr`), and zeroes the odd-in-`z` rows `j = 0, m`.
pub fn enforce_boundary(u1: &mut FieldGrid, w1: &mut FieldGrid, psi: &FieldGrid, mesh: &Mesh2) {
    let n = u1.n();
    let m = u1.m();
    let wall = wall_psi_rr(psi, mesh);
    for j in 0..=m {
        u1.values[[n, j]] = 0.0;
        w1.values[[n, j]] = -wall[j];
    }
    for f in [u1, w1] {
        if f.parity_z == Parity::Odd {
            for i in 0..=n {
                f.values[[i, 0]] = 0.0;
                f.values[[i, m]] = 0.0;
            }
        }
    }
}

/// `psi_rr` on the wall row from one-sided second-order stencils.
pub fn wall_psi_rr(psi: &FieldGrid, mesh: &Mesh2) -> Vec<f64> {
    let n = psi.n();
    let h = 1.0 / n as f64;
    let a = mesh.r.node_d1()[n];
    let b = mesh.r.node_d2()[n];
    (0..=psi.m())
        .map(|j| {
            let f = |k: usize| psi.values[[n - k, j]];
            let d1 = (3.0 * f(0) - 4.0 * f(1) + f(2)) / (2.0 * h);
            let d2 = (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / (h * h);
            d2 / (a * a) - b * d1 / (a * a * a)
        })
        .collect()
}

/// Stream function, its (possibly filtered) derivatives and the velocity.
#[derive(Clone, Debug)]
pub struct Flow {
    pub psi: FieldGrid,
    pub psi_r: FieldGrid,
    pub psi_z: FieldGrid,
    pub ur: FieldGrid,
    pub uz: FieldGrid,
}

impl Flow {
    /// Flow with unfiltered derivatives of `psi`.
    pub fn from_stream(psi: FieldGrid, mesh: &Mesh2) -> Self {
        let psi_r = ddr(&psi, mesh);
        let psi_z = ddz(&psi, mesh);
        Flow::from_derivatives(psi, psi_r, psi_z, mesh)
    }

    pub fn from_derivatives(psi: FieldGrid, psi_r: FieldGrid, psi_z: FieldGrid, mesh: &Mesh2) -> Self {
        let (ur, uz) = velocity_from_derivatives(&psi, &psi_r, &psi_z, mesh);
        Flow { psi, psi_r, psi_z, ur, uz }
    }
}
