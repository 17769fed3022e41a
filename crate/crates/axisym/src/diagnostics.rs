//! Measured quantities: norms, maximum tracking, vorticity, energy, mesh
//! effectiveness, alignment and circulation, rescaled profiles and streamlines.

use ndarray::{Array2, Zip};
use serde::Serialize;
use thiserror::Error;

use crate::fields::{d_eta, d_rho, ddr, ddz, FieldGrid, Flow, Parity};
use crate::meshmap::{interpolate_point, Front, Mesh2, MeshError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("field is identically zero")]
    ZeroField,
    #[error("front is degenerate: gradient peak at r = {r_grad} is not inside the maximum at r = {r_max}")]
    DegenerateFront { r_max: f64, r_grad: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Vertex of the parabola through three points, clamped to `[x0, x2]`.
pub fn parabolic_vertex(x: [f64; 3], f: [f64; 3]) -> f64 {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (f[1] - f[2], f[1] - f[0]);
    let den = a * fa - b * fb;
    if den == 0.0 || !den.is_finite() {
        return x[1];
    }
    let v = x[1] - 0.5 * (a * a * fa - b * b * fb) / den;
    v.clamp(x[0].min(x[2]), x[0].max(x[2]))
}

/// Refines a nodal extremum of `f` at index `k` along a line with coordinates `x`.
/// At an end with even symmetry the mirrored neighbour is used.
fn refine_line(x: &[f64], f: impl Fn(usize) -> f64, k: usize, even_at_start: bool) -> f64 {
    let n = x.len() - 1;
    if k > 0 && k < n {
        parabolic_vertex([x[k - 1], x[k], x[k + 1]], [f(k - 1), f(k), f(k + 1)])
    } else if k == 0 && even_at_start && n > 0 {
        parabolic_vertex([-x[1], x[0], x[1]], [f(1), f(0), f(1)])
    } else {
        x[k]
    }
}

/// Location and value of the maximum of a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaxLocation {
    pub r: f64,
    pub z: f64,
    pub value: f64,
    pub i: usize,
    pub j: usize,
}

/// Nodal argmax (ties toward the lowest `(i, j)`), refined by 3-point parabolic
/// fits in each coordinate.
pub fn max_location(f: &FieldGrid, mesh: &Mesh2) -> MaxLocation {
    let (mut bi, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
    for ((i, j), &v) in f.values.indexed_iter() {
        if v > best {
            (bi, bj, best) = (i, j, v);
        }
    }
    let r = refine_line(mesh.r.nodes(), |i| f.values[[i, bj]], bi, f.parity_r == Parity::Even);
    let z = refine_line(mesh.z.nodes(), |j| f.values[[bi, j]], bj, f.parity_z == Parity::Even);
    MaxLocation { r, z, value: best, i: bi, j: bj }
}

/// Front of `u_1`: its maximum location and the radial location of the maximum
/// of `u_{1,r}` on the cross-section through the maximum.
pub fn front(u1: &FieldGrid, mesh: &Mesh2) -> Result<Front, DiagnosticsError> {
    let loc = max_location(u1, mesh);
    if !(loc.value > 0.0) {
        return Err(DiagnosticsError::ZeroField);
    }
    let rn = mesh.r.nodes();
    let d1 = mesh.r.node_d1();
    let h = mesh.r.h();
    let col = u1.values.column(loc.j);
    // Centred first derivative along the cross-section; even ghost at the axis.
    let ur = |i: usize| {
        let left = if i == 0 { col[1] } else { col[i - 1] };
        (col[i + 1] - left) / (2.0 * h * d1[i])
    };
    let top = loc.i.max(1);
    let (mut k, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..top {
        let v = ur(i);
        if v > best {
            (k, best) = (i, v);
        }
    }
    let r_grad = if k > 0 && k + 1 < top { parabolic_vertex([rn[k - 1], rn[k], rn[k + 1]], [ur(k - 1), best, ur(k + 1)]) } else { rn[k] };
    if !(r_grad < loc.r) {
        return Err(DiagnosticsError::DegenerateFront { r_max: loc.r, r_grad });
    }
    Ok(Front { r_max: loc.r, z_max: loc.z, r_grad })
}

/// Vorticity vector `(omega^theta, omega^r, omega^z) = (r omega_1, -r u_{1,z}, 2 u_1 + r u_{1,r})`.
#[derive(Clone, Debug)]
pub struct Vorticity {
    pub theta: FieldGrid,
    pub r: FieldGrid,
    pub z: FieldGrid,
}

impl Vorticity {
    pub fn sup_theta(&self) -> f64 {
        self.theta.sup_norm()
    }

    pub fn sup_r(&self) -> f64 {
        self.r.sup_norm()
    }

    pub fn sup_z(&self) -> f64 {
        self.z.sup_norm()
    }

    /// Maximum over nodes of the Euclidean magnitude.
    pub fn sup_magnitude(&self) -> f64 {
        Zip::from(&self.theta.values)
            .and(&self.r.values)
            .and(&self.z.values)
            .fold(0.0_f64, |m, a, b, c| m.max((a * a + b * b + c * c).sqrt()))
    }
}

pub fn vorticity_vector(u1: &FieldGrid, w1: &FieldGrid, mesh: &Mesh2) -> Vorticity {
    let u_r = ddr(u1, mesh);
    let u_z = ddz(u1, mesh);
    vorticity_from_derivatives(u1, w1, &u_r, &u_z, mesh)
}

fn vorticity_from_derivatives(u1: &FieldGrid, w1: &FieldGrid, u_r: &FieldGrid, u_z: &FieldGrid, mesh: &Mesh2) -> Vorticity {
    let r = mesh.r.nodes();
    let mut theta = w1.values.clone();
    Zip::indexed(&mut theta).for_each(|(i, _), v| *v *= r[i]);
    let mut wr = u_z.values.clone();
    Zip::indexed(&mut wr).for_each(|(i, _), v| *v *= -r[i]);
    let mut wz = u1.values.clone();
    Zip::indexed(&mut wz).and(&u_r.values).for_each(|(i, _), v, &d| *v = 2.0 * *v + r[i] * d);
    Vorticity {
        theta: FieldGrid::new(theta, Parity::Odd, w1.parity_z),
        r: FieldGrid::new(wr, Parity::Odd, u_z.parity_z),
        z: FieldGrid::new(wz, Parity::Even, u1.parity_z),
    }
}

/// Trapezoid weights `h w_k x'(s_k)` along one mapped axis.
fn trapezoid_weights(map: &crate::meshmap::MeshMap) -> Vec<f64> {
    let n = map.n();
    let h = map.h();
    map.node_d1()
        .iter()
        .enumerate()
        .map(|(k, d)| if k == 0 || k == n { 0.5 * h * d } else { h * d })
        .collect()
}

/// Kinetic energy `1/2 int (|u^r|^2 + |r u_1|^2 + |u^z|^2) r dr dz` over the half period.
pub fn kinetic_energy(u1: &FieldGrid, ur: &FieldGrid, uz: &FieldGrid, mesh: &Mesh2) -> f64 {
    let (wr, wz) = (trapezoid_weights(&mesh.r), trapezoid_weights(&mesh.z));
    let r = mesh.r.nodes();
    let mut e = 0.0;
    for ((i, j), &u) in u1.values.indexed_iter() {
        let ut = r[i] * u;
        let a = ur.values[[i, j]];
        let b = uz.values[[i, j]];
        e += (a * a + ut * ut + b * b) * r[i] * wr[i] * wz[j];
    }
    0.5 * e
}

/// Mesh effectiveness `(sup |h_rho v_rho|, sup |h_eta v_eta|) / ||v||`.
pub fn mesh_effectiveness(v: &FieldGrid, mesh: &Mesh2) -> Result<(f64, f64), DiagnosticsError> {
    let norm = v.sup_norm();
    if norm == 0.0 {
        return Err(DiagnosticsError::ZeroField);
    }
    let me_r = d_rho(v).sup_norm() * mesh.r.h() / norm;
    let me_z = d_eta(v).sup_norm() * mesh.z.h() / norm;
    Ok((me_r, me_z))
}

/// Axis-aligned box of physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub r_lo: f64,
    pub r_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Window {
    /// Box `[R - sZ, R + sZ] x [Z - sZ, Z + sZ]`, clipped to the domain.
    pub fn around(r: f64, z: f64, scale: f64) -> Self {
        let d = scale * z;
        Window { r_lo: (r - d).max(0.0), r_hi: (r + d).min(1.0), z_lo: (z - d).max(0.0), z_hi: (z + d).min(0.5) }
    }

    fn contains(&self, r: f64, z: f64) -> bool {
        r >= self.r_lo && r <= self.r_hi && z >= self.z_lo && z <= self.z_hi
    }
}

/// RMS over the window of `|u_r w_z - u_z w_r| / (|grad u| |grad w|)`.
pub fn level_set_parallelism(u: &FieldGrid, w: &FieldGrid, mesh: &Mesh2, window: &Window) -> f64 {
    let (ur, uz, wr, wz) = (ddr(u, mesh), ddz(u, mesh), ddr(w, mesh), ddz(w, mesh));
    let (rn, zn) = (mesh.r.nodes(), mesh.z.nodes());
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, &r) in rn.iter().enumerate() {
        for (j, &z) in zn.iter().enumerate() {
            if !window.contains(r, z) {
                continue;
            }
            let (a, b, c, d) = (ur.get(i, j), uz.get(i, j), wr.get(i, j), wz.get(i, j));
            let cross = (a * d - b * c).abs();
            let denom = (a * a + b * b).sqrt() * (c * c + d * d).sqrt() + 1e-300;
            sum += (cross / denom).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Uniform raster in the rescaled variables `xi = (r - R)/Z`, `zeta = z/Z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileBox {
    pub xi: (f64, f64),
    pub zeta: (f64, f64),
    pub n_xi: usize,
    pub n_zeta: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `values[[a, b]]` at `(xi[a], zeta[b])`.
    pub values: Array2<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Samples `f(Z xi + R, Z zeta)` on the raster.
pub fn rescaled_profile(f: &FieldGrid, mesh: &Mesh2, r0: f64, z0: f64, b: &ProfileBox) -> Result<Raster, MeshError> {
    let xi = linspace(b.xi.0, b.xi.1, b.n_xi);
    let zeta = linspace(b.zeta.0, b.zeta.1, b.n_zeta);
    let mut values = Array2::zeros((xi.len(), zeta.len()));
    for (a, &x) in xi.iter().enumerate() {
        for (c, &y) in zeta.iter().enumerate() {
            values[[a, c]] = interpolate_point(f, mesh, z0 * x + r0, z0 * y)?;
        }
    }
    Ok(Raster { xi, zeta, values })
}

impl Raster {
    /// CSV matrix: header row of `xi` values, then one row per `zeta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("zeta\\xi");
        for x in &self.xi {
            out.push_str(&format!(",{x:.16e}"));
        }
        out.push('\n');
        for (c, y) in self.zeta.iter().enumerate() {
            out.push_str(&format!("{y:.16e}"));
            for a in 0..self.xi.len() {
                out.push_str(&format!(",{:.16e}", self.values[[a, c]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Cartesian velocity sampled from the axisymmetric fields, extended to all `z`
/// by the symmetries and the unit period.
pub struct FieldVelocity<'a> {
    pub ur: &'a FieldGrid,
    pub u1: &'a FieldGrid,
    pub uz: &'a FieldGrid,
    pub mesh: &'a Mesh2,
}

fn sample_periodic(f: &FieldGrid, mesh: &Mesh2, r: f64, z: f64) -> Result<f64, MeshError> {
    let mut zz = z.rem_euclid(1.0);
    let mut sign = 1.0;
    if zz > 0.5 {
        zz = 1.0 - zz;
        if f.parity_z == Parity::Odd {
            sign = -1.0;
        }
    }
    Ok(sign * interpolate_point(f, mesh, r, zz.min(0.5))?)
}

impl FieldVelocity<'_> {
    /// Velocity at a Cartesian point, `None` outside the cylinder.
    pub fn at(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let r = p[0].hypot(p[1]);
        if r > 1.0 {
            return None;
        }
        let s = |f: &FieldGrid| sample_periodic(f, self.mesh, r, p[2]).ok();
        let (a, u, w) = (s(self.ur)?, s(self.u1)?, s(self.uz)?);
        let ut = r * u;
        let (c, sn) = if r > 0.0 { (p[0] / r, p[1] / r) } else { (1.0, 0.0) };
        Some([a * c - ut * sn, a * sn + ut * c, w])
    }
}

/// Polyline traced by the velocity from a start point.
#[derive(Clone, Debug, PartialEq)]
pub struct Streamline {
    pub points: Vec<[f64; 3]>,
    /// The trace left the domain before reaching `s_max`.
    pub stopped_early: bool,
}

/// Classical four-stage integration of `dX/ds = u(X)` from the cylindrical
/// start `(r0, theta0, z0)`.
pub fn streamline(
    vel: impl Fn([f64; 3]) -> Option<[f64; 3]>,
    start: (f64, f64, f64),
    s_max: f64,
    ds: f64,
) -> Streamline {
    let (r0, t0, z0) = start;
    let mut x = [r0 * t0.cos(), r0 * t0.sin(), z0];
    let mut points = vec![x];
    let steps = (s_max / ds).ceil() as usize;
    let add = |x: [f64; 3], k: [f64; 3], a: f64| [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2]];
    for _ in 0..steps {
        let next = (|| {
            let k1 = vel(x)?;
            let k2 = vel(add(x, k1, 0.5 * ds))?;
            let k3 = vel(add(x, k2, 0.5 * ds))?;
            let k4 = vel(add(x, k3, ds))?;
            let mut y = x;
            for c in 0..3 {
                y[c] += ds / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            Some(y)
        })();
        match next {
            Some(y) if y[0].hypot(y[1]) <= 1.0 => {
                x = y;
                points.push(x);
            }
            _ => return Streamline { points, stopped_early: true },
        }
    }
    Streamline { points, stopped_early: false }
}

/// Location and value of the maximum of the circulation `r^2 u_1`.
pub fn circulation_max(u1: &FieldGrid, mesh: &Mesh2) -> MaxLocation {
    max_location(&crate::physics::circulation(u1, mesh), mesh)
}

/// Local maximum of `f` reached by steepest ascent over the eight nodal
/// neighbours from `(i, j)`, refined like [`max_location`].
pub fn local_max_from(f: &FieldGrid, mesh: &Mesh2, start: (usize, usize)) -> MaxLocation {
    let (n, m) = (f.n(), f.m());
    let (mut i, mut j) = start;
    loop {
        let mut best = (i, j, f.values[[i, j]]);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a > n as i64 || b > m as i64 {
                    continue;
                }
                let v = f.values[[a as usize, b as usize]];
                if v > best.2 {
                    best = (a as usize, b as usize, v);
                }
            }
        }
        if (best.0, best.1) == (i, j) {
            break;
        }
        (i, j) = (best.0, best.1);
    }
    let r = refine_line(mesh.r.nodes(), |k| f.values[[k, j]], i, f.parity_r == Parity::Even);
    let z = refine_line(mesh.z.nodes(), |k| f.values[[i, k]], j, f.parity_z == Parity::Even);
    let value = interpolate_point(f, mesh, r, z).unwrap_or(f.values[[i, j]]).max(f.values[[i, j]]);
    MaxLocation { r, z, value, i, j }
}

/// One row of the diagnostics time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub u1_max: f64,
    pub w1_max: f64,
    pub omega_theta_max: f64,
    pub omega_r_max: f64,
    pub omega_z_max: f64,
    pub omega_max: f64,
    pub psi1_r_max: f64,
    pub psi1_z_max: f64,
    pub u1_r_max: f64,
    pub u1_z_max: f64,
    pub r_front: f64,
    pub z_front: f64,
    pub energy: f64,
    /// `psi_{1,z} / u_1` at `(R, Z)`.
    pub alignment: f64,
    /// Circulation at `(R, Z)`.
    pub circulation_front: f64,
    /// Circulation at its local maximum reached from the maximum of `u_1`.
    pub circulation_local_max: f64,
    /// Maximum of the circulation over the domain.
    pub circulation_max: f64,
    pub me_rho_u1: f64,
    pub me_eta_u1: f64,
    pub me_rho_w1: f64,
    pub me_eta_w1: f64,
    pub dt: f64,
    pub mesh_updated: bool,
}

/// Evaluates every recorded quantity for one state.
pub fn record(
    t: f64,
    dt: f64,
    mesh_updated: bool,
    u1: &FieldGrid,
    w1: &FieldGrid,
    flow: &Flow,
    mesh: &Mesh2,
) -> DiagnosticsRecord {
    let u_r = ddr(u1, mesh);
    let u_z = ddz(u1, mesh);
    let vort = vorticity_from_derivatives(u1, w1, &u_r, &u_z, mesh);
    let loc = max_location(u1, mesh);
    let gamma = crate::physics::circulation(u1, mesh);
    let at = |f: &FieldGrid| interpolate_point(f, mesh, loc.r, loc.z).unwrap_or(f64::NAN);
    let u_front = at(u1);
    let me = |f: &FieldGrid| mesh_effectiveness(f, mesh).unwrap_or((0.0, 0.0));
    let (me_rho_u1, me_eta_u1) = me(u1);
    let (me_rho_w1, me_eta_w1) = me(w1);
    DiagnosticsRecord {
        t,
        u1_max: u1.sup_norm(),
        w1_max: w1.sup_norm(),
        omega_theta_max: vort.sup_theta(),
        omega_r_max: vort.sup_r(),
        omega_z_max: vort.sup_z(),
        omega_max: vort.sup_magnitude(),
        psi1_r_max: flow.psi_r.sup_norm(),
        psi1_z_max: flow.psi_z.sup_norm(),
        u1_r_max: u_r.sup_norm(),
        u1_z_max: u_z.sup_norm(),
        r_front: loc.r,
        z_front: loc.z,
        energy: kinetic_energy(u1, &flow.ur, &flow.uz, mesh),
        alignment: at(&flow.psi_z) / u_front,
        circulation_front: loc.r * loc.r * u_front,
        circulation_local_max: local_max_from(&gamma, mesh, (loc.i, loc.j)).value,
        circulation_max: max_location(&gamma, mesh).value,
        me_rho_u1,
        me_eta_u1,
        me_rho_w1,
        me_eta_w1,
        dt,
        mesh_updated,
    }
}
