use axisym::fields::{FieldGrid, Parity};
use axisym::meshmap::*;
use proptest::prelude::*;

fn ref_q(x: f64, b: i32) -> f64 {
    let y = (1.0 + x).powi(b);
    y / (1.0 + y)
}

fn ref_density(c: &DensityCoeffs, k: &PhaseKnots, s: f64) -> f64 {
    let b = c.b as i32;
    c.a1 + c.a2 * ref_q(s - k.s2, b)
        + c.a3 * ref_q(s - k.s3, b)
        + c.a0 * (ref_q(k.s1 - s, b) + ref_q(k.s1 + s, b) - 1.0)
}

// Composite Simpson on a fine uniform lattice; independent of the production
// knot-aligned Gauss-Legendre table.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let h = (b - a) / cells as f64;
    let mut s = f(a) + f(b);
    for i in 1..cells {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn appendix_example() -> (PhaseKnots, MeshTargets) {
    (
        PhaseKnots::radial(),
        MeshTargets { y1: 7e-5, y2: 3.5e-4, y3: 6e-4, extent: 1.0 },
    )
}

#[test]
fn q_examples() {
    assert_eq!(eval_q(0.0, 60).unwrap(), 0.5);
    assert_eq!(eval_q(-1.0, 60).unwrap(), 0.0);
    let top = eval_q(1.0, 60).unwrap();
    let two60 = 2f64.powi(60);
    assert!((top - two60 / (1.0 + two60)).abs() < 1e-18);
    assert!(eval_q(1.5, 60).is_err());
    assert!(eval_q(0.0, 3).is_err());
}

#[test]
fn q_is_monotone() {
    let mut prev = 0.0;
    for i in 0..=2000 {
        let x = -1.0 + i as f64 / 1000.0;
        let v = eval_q(x, 60).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn phase_coeffs_examples() {
    let k = PhaseKnots::radial();
    let id = solve_phase_coeffs(&k, &MeshTargets { y1: 0.1, y2: 0.5, y3: 0.85, extent: 1.0 }).unwrap();
    assert!((id.a0).abs() < 1e-15 && (id.a1 - 1.0).abs() < 1e-15);
    assert!(id.a2.abs() < 1e-15 && id.a3.abs() < 1e-14);

    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    // Exact rational evaluation of the closed-form solution.
    assert!(c.a0.abs() < 1e-18);
    assert!((c.a1 - 7e-4).abs() < 1e-18);
    assert!((c.a2 - 1.4285714285714285e-05).abs() < 1e-15);
    assert!((c.a3 - 6.661952380952381).abs() < 1e-12);

    let bad = MeshTargets { y1: 0.05, y2: 0.6, y3: 0.8, extent: 1.0 };
    assert!(matches!(solve_phase_coeffs(&k, &bad), Err(MeshError::NonPositiveDensity(_))));
}

#[test]
fn ideal_density_reproduces_targets() {
    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    // Piecewise-constant density: a1 + a0 on [0,s1], a1 on [s1,s2], a1+a2 on [s2,s3], a1+a2+a3 beyond.
    let p1 = (c.a0 + c.a1) * k.s1;
    let p2 = p1 + c.a1 * (k.s2 - k.s1);
    let p3 = p2 + (c.a1 + c.a2) * (k.s3 - k.s2);
    let p4 = p3 + (c.a1 + c.a2 + c.a3) * (1.0 - k.s3);
    assert!((p1 - t.y1).abs() < 1e-15);
    assert!((p2 - t.y2).abs() < 1e-15);
    assert!((p3 - t.y3).abs() < 1e-15);
    assert!((p4 - 1.0).abs() < 1e-14);
}

#[test]
fn identity_map_is_identity() {
    let m = build_map(&PhaseKnots::radial(), &DensityCoeffs::identity(), 1.0, 64).unwrap();
    for i in 0..=100 {
        let x = i as f64 / 100.0;
        assert!((m.eval(x) - x).abs() < 1e-15, "x = {x}");
    }
    assert_eq!(m.eval(1.0), 1.0);
    let half = build_map(&PhaseKnots::axial(), &DensityCoeffs::identity(), 0.5, 32).unwrap();
    assert_eq!(half.nodes()[32], 0.5);
    assert!((half.nodes()[16] - 0.25).abs() < 1e-15);
}

#[test]
fn map_matches_independent_quadrature() {
    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    let m = build_map(&k, &c, 1.0, 128).unwrap();
    let total = simpson(|s| ref_density(&c, &k, s), 0.0, 1.0, 400_000);
    for x in [0.03, 0.1, 0.27, 0.5, 0.61, 0.85, 0.9, 0.99] {
        let expect = simpson(|s| ref_density(&c, &k, s), 0.0, x, 400_000) / total;
        let got = m.eval(x);
        assert!(((got - expect) / expect).abs() < 1e-11, "x={x}: {got} vs {expect}");
    }
    assert!((m.rescale() - 1.0 / total).abs() < 1e-12 / total);
}

#[test]
fn appendix_example_hits_phase_targets() {
    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    let m = build_map(&k, &c, 1.0, 256).unwrap();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    assert!(rel(m.eval(k.s1), t.y1) < 0.01);
    assert!(rel(m.eval(k.s2), t.y2) < 0.01);
    // The softened step of the outer phase leaks density into [s2, s3]; with
    // a3 four orders of magnitude above a1 that leak dominates P(s3).
    let leak = simpson(|x| ref_q(x, 60), k.s2 - k.s3, 0.0, 20_000) * c.a3 * m.rescale();
    assert!(m.eval(k.s3) > t.y3);
    assert!(rel(m.eval(k.s3), t.y3 + leak) < 0.05, "{} vs {}", m.eval(k.s3), t.y3 + leak);
}

#[test]
fn density_even_at_origin() {
    let (k, t) = appendix_example();
    for c in [
        solve_phase_coeffs(&k, &t).unwrap(),
        solve_phase_coeffs(&k, &MeshTargets { y1: 0.02, y2: 0.1, y3: 0.3, extent: 1.0 }).unwrap(),
    ] {
        let m = build_map(&k, &c, 1.0, 64).unwrap();
        for i in 0..=50 {
            let s = i as f64 * 0.002;
            assert!((m.d1(s) - m.d1(-s)).abs() <= 1e-13 * m.d1(s), "s={s}");
        }
    }
}

#[test]
fn density_nearly_even_at_wall() {
    // With s3 = 0.85 and b = 60 the outer sigmoid is not saturated near s = 1
    // ((1.15)^-60 ~ 2e-4, (1.05)^-60 ~ 5e-2), so the density is only roughly
    // even about the wall.
    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    let m = build_map(&k, &c, 1.0, 64).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=50 {
        let s = i as f64 * 0.002;
        worst = worst.max((m.d1(1.0 - s) - m.d1(1.0 + s)).abs() / m.d1(1.0));
    }
    assert!(worst < 0.1, "{worst}");
}

#[test]
fn map_derivatives_match_differences() {
    let (k, t) = appendix_example();
    let c = solve_phase_coeffs(&k, &t).unwrap();
    let m = build_map(&k, &c, 1.0, 64).unwrap();
    let h = 1e-6;
    for x in [0.05, 0.2, 0.49, 0.7, 0.86, 0.95] {
        let fd1 = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
        assert!(((fd1 - m.d1(x)) / m.d1(x)).abs() < 1e-6);
        let fd2 = (m.d1(x + h) - m.d1(x - h)) / (2.0 * h);
        assert!((fd2 - m.d2(x)).abs() < 1e-5 * (1.0 + m.d2(x).abs()));
    }
}

#[test]
fn non_positive_density_rejected() {
    let bad = DensityCoeffs { a0: 0.0, a1: -1.0, a2: 0.0, a3: 0.0, b: 60 };
    assert!(build_map(&PhaseKnots::radial(), &bad, 1.0, 16).is_err());
}

#[test]
fn targets_examples() {
    let k = PhaseKnots::radial();
    let f = Front { r_max: 2e-4, z_max: 1e-5, r_grad: 1.5e-4 };
    let t = derive_targets(&f, MapAxis::R, &k).unwrap();
    assert!((t.y2 - 3.5e-4).abs() < 1e-18);
    assert!((t.y1 - 7e-5).abs() < 1e-18);
    assert!((t.y3 - 6e-4).abs() < 1e-18);
    let tz = derive_targets(&f, MapAxis::Z, &PhaseKnots::axial()).unwrap();
    assert_eq!(tz.y1, 0.0);
    assert!((tz.y2 - 1.5e-5).abs() < 1e-20);
    assert!((tz.y3 - 1.5e-4).abs() < 1e-19);
    let bad = Front { r_grad: 2e-4, ..f };
    assert!(matches!(derive_targets(&bad, MapAxis::R, &k), Err(MeshError::DegenerateProfile(_))));
}

fn example_front() -> Front {
    Front { r_max: 1.0e-3, z_max: 1.2e-4, r_grad: 8.5e-4 }
}

#[test]
fn update_criteria() {
    let f = example_front();
    let mesh = build_adaptive_mesh(&f, 256, 128).unwrap();
    assert_eq!(needs_update(&f, &mesh, &UpdateThresholds { n_min_r: 8, n_min_z: 8 }), None);

    // Front moved outward past r(s2).
    let hi = mesh.r.eval(mesh.r.knots().s2);
    let moved = Front { r_max: hi, r_grad: hi - 1e-4, ..f };
    assert_eq!(
        needs_update(&moved, &mesh, &UpdateThresholds { n_min_r: 1, n_min_z: 1 }),
        Some(UpdateReason::RadialEscape)
    );

    // Axial count threshold crossing.
    let nz = mesh.z.nodes().iter().filter(|&&z| z <= f.z_max).count();
    let th = UpdateThresholds { n_min_r: 1, n_min_z: nz + 1 };
    assert_eq!(needs_update(&f, &mesh, &th), Some(UpdateReason::AxialCount));
    let th = UpdateThresholds { n_min_r: 1, n_min_z: nz };
    assert_eq!(needs_update(&f, &mesh, &th), None);
}

#[test]
fn update_monotone_along_collapsing_trajectory() {
    let f0 = example_front();
    let mesh = build_adaptive_mesh(&f0, 256, 128).unwrap();
    let monitor = MeshMonitor::new(&f0, &mesh, UpdateThresholds::default());
    let mut fired = false;
    for step in 0..400 {
        let s = 1.0 - step as f64 / 400.0;
        // R grows like s^(-1/2), Z and d shrink like s.
        let f = Front {
            r_max: f0.r_max / s.sqrt(),
            z_max: f0.z_max * s,
            r_grad: f0.r_max / s.sqrt() - f0.width() * s,
        };
        let now = monitor.check(&f, &mesh).is_some();
        assert!(!fired || now, "criterion switched off at step {step}");
        fired |= now;
    }
    assert!(fired);
}

#[test]
fn fresh_mesh_does_not_request_update() {
    for n in [256usize, 512, 1024] {
        let f = example_front();
        let mesh = build_adaptive_mesh(&f, n, n / 2).unwrap();
        let monitor = MeshMonitor::new(&f, &mesh, UpdateThresholds::default());
        assert_eq!(monitor.check(&f, &mesh), None, "n = {n}");
    }
}

fn smooth_mesh_pair(n: usize, m: usize) -> Mesh2 {
    build_adaptive_mesh(&Front { r_max: 0.2, z_max: 0.02, r_grad: 0.15 }, n, m).unwrap()
}

#[test]
fn ip4_same_mesh_is_identity() {
    let mesh = smooth_mesh_pair(32, 16);
    let f = FieldGrid::from_computational_fn(32, 16, Parity::None, Parity::None, |x, y| x.powi(3) * y * y);
    let g = interpolate_ip4(&f, &mesh, &mesh).unwrap();
    assert_eq!(f, g);
    // A separately built but identical mesh goes through the full interpolation path.
    let twin = smooth_mesh_pair(32, 16);
    let g = interpolate_ip4(&f, &mesh, &twin).unwrap();
    let err = (&g.values - &f.values).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    assert!(err < 1e-12, "{err}");
}

#[test]
fn ip4_reproduces_bicubics_across_meshes() {
    let src = smooth_mesh_pair(40, 24);
    let dst = Mesh2::new(MeshMap::uniform(1.0, 57), MeshMap::uniform(0.5, 33));
    let cubic = |x: f64, y: f64| 1.0 + x - 2.0 * x * x * y + 3.0 * x.powi(3) * y.powi(3) - y.powi(2);
    let f = FieldGrid::from_computational_fn(40, 24, Parity::None, Parity::None, cubic);
    let g = interpolate_ip4(&f, &src, &dst).unwrap();
    for (i, &r) in dst.r.nodes().iter().enumerate() {
        for (j, &z) in dst.z.nodes().iter().enumerate() {
            let expect = cubic(src.r.inverse(r), src.z.inverse(z));
            assert!((g.get(i, j) - expect).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn ip4_fourth_order() {
    let dst = Mesh2::new(MeshMap::uniform(1.0, 301), MeshMap::uniform(0.5, 7));
    let err = |k: usize| {
        let src = Mesh2::uniform(k, 8);
        let f = FieldGrid::from_fn(&src, Parity::None, Parity::None, |r, _| (2.0 * std::f64::consts::PI * r).sin());
        let g = interpolate_ip4(&f, &src, &dst).unwrap();
        dst.r
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| (g.get(i, 3) - (2.0 * std::f64::consts::PI * r).sin()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(32) / err(64);
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn ip4_uses_parity_ghosts() {
    // cos(pi r) is even in r and cos(2 pi z) is even about z = 0 and z = 1/2.
    let src = Mesh2::uniform(16, 16);
    let dst = Mesh2::new(MeshMap::uniform(1.0, 23), MeshMap::uniform(0.5, 19));
    let f0 = |r: f64, z: f64| (std::f64::consts::PI * r).cos() * (2.0 * std::f64::consts::PI * z).cos();
    let even = FieldGrid::from_fn(&src, Parity::Even, Parity::Even, f0);
    let none = even.clone().with_parity(Parity::None, Parity::None);
    // Compare only in the first source cell next to each symmetry edge.
    let near = |r: f64, z: f64| r < 1.0 / 16.0 || z < 1.0 / 32.0 || z > 0.5 - 1.0 / 32.0;
    let err = |g: &FieldGrid| {
        let mut e = 0.0_f64;
        for (i, &r) in dst.r.nodes().iter().enumerate() {
            for (j, &z) in dst.z.nodes().iter().enumerate() {
                if near(r, z) && r < 0.9 {
                    e = e.max((g.get(i, j) - f0(r, z)).abs());
                }
            }
        }
        e
    };
    let e_even = err(&interpolate_ip4(&even, &src, &dst).unwrap());
    let e_none = err(&interpolate_ip4(&none, &src, &dst).unwrap());
    assert!(e_even < 1e-4 && e_none < 1e-3);
    assert!(e_even < e_none);
}

#[test]
fn point_interpolation_matches_grid_interpolation() {
    let src = smooth_mesh_pair(40, 24);
    let f = FieldGrid::from_fn(&src, Parity::Even, Parity::Odd, |r, z| (1.0 - r * r) * (2.0 * std::f64::consts::PI * z).sin());
    let dst = Mesh2::new(MeshMap::uniform(1.0, 9), MeshMap::uniform(0.5, 9));
    let g = interpolate_ip4(&f, &src, &dst).unwrap();
    for (i, &r) in dst.r.nodes().iter().enumerate() {
        for (j, &z) in dst.z.nodes().iter().enumerate() {
            let p = interpolate_point(&f, &src, r, z).unwrap();
            assert!((p - g.get(i, j)).abs() < 1e-14);
        }
    }
    assert!(matches!(interpolate_point(&f, &src, -0.1, 0.1), Err(MeshError::OutOfDomain(..))));
}

#[test]
fn dump_round_trip() {
    let mesh = smooth_mesh_pair(64, 32);
    let text = dump_map(&mesh.r);
    let (back, lines) = parse_map_dump(&text).unwrap();
    assert_eq!(lines, text.lines().count());
    assert_eq!(back.nodes(), mesh.r.nodes());
    assert_eq!(back.rescale(), mesh.r.rescale());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn built_maps_are_valid(r_max in 1e-4f64..0.05, frac in 0.3f64..0.95, z_max in 1e-6f64..0.02) {
        let f = Front { r_max, z_max, r_grad: r_max * frac };
        let mesh = build_adaptive_mesh(&f, 64, 32).unwrap();
        for map in [&mesh.r, &mesh.z] {
            let l = map.extent();
            prop_assert_eq!(map.eval(0.0), 0.0);
            prop_assert!(((map.eval(1.0) - l) / l).abs() < 1e-14);
            prop_assert!(map.nodes().windows(2).all(|w| w[1] > w[0]));
            for i in 0..=200 {
                prop_assert!(map.d1(i as f64 / 200.0) > 0.0);
            }
            for &x in &[0.013, 0.25, 0.5, 0.77, 0.999] {
                let y = map.eval(x);
                prop_assert!((map.inverse(y) - x).abs() < 1e-13);
            }
        }
    }
}
