//! Manufactured fields with hand-derived derivatives, shared by the kernel
//! tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use axisym::fields::{self, FieldGrid, Parity};
use axisym::meshmap::{build_adaptive_mesh, Front, Mesh2};
use axisym::physics::{nu_eval, nu_fields, DiffusionSpec};

/// Mesh adapted to a front near the origin, so that the degenerate
/// coefficients vary on the resolved scales.
pub fn small_scale_mesh(n: usize, m: usize) -> Mesh2 {
    build_adaptive_mesh(&Front { r_max: 2e-4, z_max: 2e-5, r_grad: 1.2e-4 }, n, m).unwrap()
}

/// Mesh adapted to an order-one front, for fields varying on the unit scale.
pub fn smooth_mesh(n: usize, m: usize) -> Mesh2 {
    build_adaptive_mesh(&Front { r_max: 0.05, z_max: 0.01, r_grad: 0.03 }, n, m).unwrap()
}

/// `exp(-r^2/c^2)` and its first three derivatives, plus `C'/r`.
pub fn gauss_r(r: f64, c: f64) -> [f64; 5] {
    let e = (-r * r / (c * c)).exp();
    let c2 = c * c;
    [
        e,
        -2.0 * r / c2 * e,
        (4.0 * r * r / (c2 * c2) - 2.0 / c2) * e,
        (-8.0 * r.powi(3) / (c2 * c2 * c2) + 12.0 * r / (c2 * c2)) * e,
        -2.0 / c2 * e,
    ]
}

/// `z exp(-z^2/d^2)` and its first three derivatives.
pub fn gauss_z(z: f64, d: f64) -> [f64; 4] {
    let e = (-z * z / (d * d)).exp();
    let d2 = d * d;
    [
        z * e,
        (1.0 - 2.0 * z * z / d2) * e,
        (-6.0 * z / d2 + 4.0 * z.powi(3) / (d2 * d2)) * e,
        (-6.0 / d2 + 24.0 * z * z / (d2 * d2) - 8.0 * z.powi(4) / (d2 * d2 * d2)) * e,
    ]
}

pub const U_SCALES: (f64, f64) = (3e-4, 3e-5);
pub const W_SCALES: (f64, f64) = (2.5e-4, 2e-5);
pub const PSI_SCALES: (f64, f64) = (4e-4, 4e-5);

pub fn sup_rel_error(num: &FieldGrid, exact: &FieldGrid, skip_axis: bool) -> f64 {
    let mut e = 0.0_f64;
    let mut s = 0.0_f64;
    for ((i, _), (&a, &b)) in num.values.indexed_iter().zip(exact.values.iter()).map(|((ij, a), b)| (ij, (a, b))) {
        s = s.max(b.abs());
        if skip_axis && i == 0 {
            continue;
        }
        e = e.max((a - b).abs());
    }
    e / s
}

/// Relative sup error of the u_1 diffusion term with the degenerate coefficients.
pub fn diffusion_u1_error(n: usize) -> f64 {
    let mesh = small_scale_mesh(n, n / 2);
    let spec = DiffusionSpec::degenerate();
    let (c, d) = U_SCALES;
    let u = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| gauss_r(r, c)[0] * gauss_z(z, d)[0]);
    let nu = nu_fields(&spec, &mesh, 1e5).unwrap();
    let num = fields::diffusion_u1(&u, &nu, &mesh);
    let exact = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| {
        let a = gauss_r(r, c);
        let b = gauss_z(z, d);
        let p = nu_eval(&spec, r, z, 1e5).unwrap();
        p.nr * (a[2] + 3.0 * a[4]) * b[0] + p.nz * a[0] * b[2] + p.nr_r_over_r * a[0] * b[0]
            + p.nr_r * a[1] * b[0]
            + p.nz_z * a[0] * b[1]
    });
    sup_rel_error(&num, &exact, false)
}

/// Oracle for the omega_1 diffusion term written in the original variables
/// `(u^r, u^z)`, evaluated away from the axis.
pub fn fw1_oracle(spec: &DiffusionSpec, r: f64, z: f64) -> f64 {
    let (cw, dw) = W_SCALES;
    let (cp, dp) = PSI_SCALES;
    let (a, b) = (gauss_r(r, cw), gauss_z(z, dw));
    let (cc, dd) = (gauss_r(r, cp), gauss_z(z, dp));
    let p = nu_eval(spec, r, z, 1e5).unwrap();
    let (w, w_r, w_rr, w_z, w_zz) = (a[0] * b[0], a[1] * b[0], a[2] * b[0], a[0] * b[1], a[0] * b[2]);
    // psi = C(r) D(z); u^r = -r C D', u^z = 2 C D + r C' D.
    let ur = -r * cc[0] * dd[1];
    let ur_r = -(cc[0] + r * cc[1]) * dd[1];
    let ur_rr = -(2.0 * cc[1] + r * cc[2]) * dd[1];
    let ur_z = -r * cc[0] * dd[2];
    let ur_zz = -r * cc[0] * dd[3];
    let uz_r = (3.0 * cc[1] + r * cc[2]) * dd[0];
    let uz_rr = (4.0 * cc[2] + r * cc[3]) * dd[0];
    let uz_z = (2.0 * cc[0] + r * cc[1]) * dd[1];
    let uz_zz = (2.0 * cc[0] + r * cc[1]) * dd[2];
    let (nr_rz, nz_rz) = (0.0, 0.0);
    let scalar = p.nr * (w_rr + 3.0 * w_r / r) + p.nz * w_zz + p.nr_r / r * w + p.nr_r * w_r + p.nz_z * w_z;
    let cross1 = (p.nr_z * (ur_rr + ur_r / r - ur / (r * r)) + p.nz_z * ur_zz
        - p.nr_r * (uz_rr + uz_r / r)
        - p.nz_r * uz_zz)
        / r;
    let cross2 = (nr_rz * ur_r + p.nz_zz * ur_z - p.nr_rr * uz_r - nz_rz * uz_z) / r;
    scalar + cross1 + cross2
}

/// Relative sup error (off the axis) of the omega_1 diffusion term, with the
/// velocity inputs computed discretely from nodal psi_1.
pub fn diffusion_w1_error(n: usize) -> f64 {
    let mesh = small_scale_mesh(n, n / 2);
    let spec = DiffusionSpec::degenerate();
    let (cw, dw) = W_SCALES;
    let (cp, dp) = PSI_SCALES;
    let w = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| gauss_r(r, cw)[0] * gauss_z(z, dw)[0]);
    let psi = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| gauss_r(r, cp)[0] * gauss_z(z, dp)[0]);
    let psi_z = fields::ddz(&psi, &mesh);
    let (_, uz) = fields::velocity_from_stream(&psi, &mesh);
    let nu = nu_fields(&spec, &mesh, 1e5).unwrap();
    let num = fields::diffusion_w1(&w, &psi_z, &uz, &nu, &mesh);
    let exact = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| {
        if r == 0.0 {
            0.0
        } else {
            fw1_oracle(&spec, r, z)
        }
    });
    sup_rel_error(&num, &exact, true)
}

/// Relative sup errors of the four mapped derivatives of `(1 - r^2) sin(2 pi z)`.
pub fn derivative_errors(n: usize) -> [f64; 4] {
    let mesh = smooth_mesh(n, n / 2);
    let f = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| (1.0 - r * r) * (2.0 * PI * z).sin());
    let ex = |g: fn(f64, f64) -> f64, pr, pz| FieldGrid::from_fn(&mesh, pr, pz, g);
    [
        sup_rel_error(
            &fields::ddr(&f, &mesh),
            &ex(|r, z| -2.0 * r * (2.0 * PI * z).sin(), Parity::Odd, Parity::Odd),
            false,
        ),
        sup_rel_error(
            &fields::d2dr2(&f, &mesh),
            &ex(|_, z| -2.0 * (2.0 * PI * z).sin(), Parity::Even, Parity::Odd),
            false,
        ),
        sup_rel_error(
            &fields::ddz(&f, &mesh),
            &ex(|r, z| 2.0 * PI * (1.0 - r * r) * (2.0 * PI * z).cos(), Parity::Even, Parity::Even),
            false,
        ),
        sup_rel_error(
            &fields::d2dz2(&f, &mesh),
            &ex(|r, z| -4.0 * PI * PI * (1.0 - r * r) * (2.0 * PI * z).sin(), Parity::Even, Parity::Odd),
            false,
        ),
    ]
}

/// Relative sup errors of `(u^r, u^z)` for `psi_1 = (1 - r^2) sin(2 pi z)`.
pub fn velocity_errors(n: usize) -> [f64; 2] {
    let mesh = smooth_mesh(n, n / 2);
    let psi = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| (1.0 - r * r) * (2.0 * PI * z).sin());
    let (ur, uz) = fields::velocity_from_stream(&psi, &mesh);
    let ur_ex = FieldGrid::from_fn(&mesh, Parity::Odd, Parity::Even, |r, z| {
        -2.0 * PI * r * (1.0 - r * r) * (2.0 * PI * z).cos()
    });
    let uz_ex = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| (2.0 - 4.0 * r * r) * (2.0 * PI * z).sin());
    [sup_rel_error(&ur, &ur_ex, false), sup_rel_error(&uz, &uz_ex, false)]
}

/// Samples of `(T - t)^(-c)` on `[t1, t2]`, optionally with Gaussian
/// multiplicative noise of relative size `noise`.
pub fn power_law_series(c: f64, t_blowup: f64, t1: f64, t2: f64, n: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let t: Vec<f64> = (0..n).map(|k| t1 + (t2 - t1) * k as f64 / (n - 1) as f64).collect();
    let v = t
        .iter()
        .map(|&s| (t_blowup - s).powf(-c) * (1.0 + noise * normal.sample(&mut rng)))
        .collect();
    (t, v)
}
