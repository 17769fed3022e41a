//! Adaptive-mesh solver for the axisymmetric Navier-Stokes equations with
//! degenerate variable diffusion, with the diagnostics and regression tools used
//! to study potential finite-time blowup.
//!
//! The prognostic variables are `u_1 = u^theta / r` and `omega_1 = omega^theta / r`;
//! the stream function `psi_1` is recovered from `omega_1` by a weighted B-spline
//! Galerkin solve. All fields live on a tensor grid mapped by analytic adaptive
//! maps `r(rho)`, `z(eta)` on the half period `D_1 = [0,1] x [0,1/2]`.

pub(crate) mod band;
pub mod diagnostics;
pub mod fields;
pub mod filters;
pub mod fitting;
pub mod io;
pub mod meshmap;
pub mod physics;
pub mod poisson;
pub mod quad;
pub mod stepper;
pub mod study;
