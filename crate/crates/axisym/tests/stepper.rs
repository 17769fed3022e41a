mod common;

use std::f64::consts::PI;

use axisym::fields::{self, FieldGrid, Flow, NuFields, Parity};
use axisym::meshmap::Mesh2;
use axisym::poisson::Weight;
use axisym::stepper::*;

fn flow_with(ur: f64, uz: f64, n: usize, m: usize) -> Flow {
    let zero = |pr, pz| FieldGrid::zeros(n, m, pr, pz);
    Flow {
        psi: zero(Parity::Even, Parity::Odd),
        psi_r: zero(Parity::Odd, Parity::Odd),
        psi_z: zero(Parity::Even, Parity::Even),
        ur: zero(Parity::Odd, Parity::Even).map(|_| ur),
        uz: zero(Parity::Even, Parity::Odd).map(|_| uz),
    }
}

#[test]
fn compute_dt_examples() {
    // h r_rho = 1e-3, |u^r| = 10.
    let mesh = Mesh2::uniform(1000, 8);
    let flow = flow_with(10.0, 0.0, 1000, 8);
    let nu = NuFields::zeros(1000, 8);
    let (dt, branch) = compute_dt(&flow, &nu, &mesh, 0.1);
    assert!((dt - 1e-5).abs() < 1e-18, "{dt}");
    assert_eq!(branch, DtBranch::Convective);

    let (half, _) = compute_dt(&flow, &nu, &mesh, 0.05);
    assert_eq!(half, 0.5 * dt);

    let mut nu = NuFields::zeros(1000, 8);
    nu.nz.fill(1e3);
    let (dt, branch) = compute_dt(&flow, &nu, &mesh, 0.1);
    assert_eq!(branch, DtBranch::Diffusive);
    assert!((dt - 0.1 * (0.5f64 / 8.0).powi(2) / 1e3).abs() < 1e-18);
}

#[test]
fn zero_state_gives_zero_tendencies_and_stays_zero() {
    let mesh = Mesh2::uniform(32, 16);
    let zero_u = FieldGrid::zeros(32, 16, Parity::Even, Parity::Odd);
    for case in [Case::Constant(1e-3), Case::Inviscid] {
        let mut solver = Solver::new(case, 0.025, FilterPlan::standard(case, 16), 0.1, Weight::Quadratic);
        let nu = solver.nu_fields(&zero_u, &mesh).unwrap();
        let k = solver.rhs(&zero_u, &zero_u, &nu, &mesh).unwrap();
        assert_eq!(k.du1.sup_norm(), 0.0);
        assert_eq!(k.dw1.sup_norm(), 0.0);
        let mut state = State { t: 0.0, u1: zero_u.clone(), w1: zero_u.clone(), mesh: mesh.clone() };
        solver.step_fixed(&mut state, 1e-3).unwrap();
        assert_eq!(state.u1.sup_norm() + state.w1.sup_norm(), 0.0);
    }
}

#[test]
fn swirl_without_vorticity_only_generates_vorticity() {
    let mesh = Mesh2::uniform(64, 32);
    let u1 = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| (0.5 * PI * r).cos() * (2.0 * PI * z).sin());
    let w1 = FieldGrid::zeros(64, 32, Parity::Even, Parity::Odd);
    let nu = NuFields::zeros(64, 32);

    let mut plain = Solver::new(Case::Inviscid, 0.0, FilterPlan::none(), 0.1, Weight::Quadratic);
    let k = plain.rhs(&u1, &w1, &nu, &mesh).unwrap();
    assert_eq!(k.flow.psi.sup_norm(), 0.0);
    assert_eq!(k.du1.sup_norm(), 0.0);
    let u_z = fields::ddz(&u1, &mesh);
    for ((ij, &d), (&u, &uz)) in k.dw1.values.indexed_iter().zip(u1.values.iter().zip(u_z.values.iter())) {
        assert!((d - 2.0 * u * uz).abs() < 1e-12, "{ij:?}");
    }

    // With the filtering schedule the stretching term uses the filtered swirl.
    let mut filtered = Solver::new(Case::Inviscid, 0.0, FilterPlan::standard(Case::Inviscid, 32), 0.1, Weight::Quadratic);
    let k = filtered.rhs(&u1, &w1, &nu, &mesh).unwrap();
    assert_eq!(k.du1.sup_norm(), 0.0);
    let diff = (&k.dw1.values - &(2.0 * &u1.values * &u_z.values)).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(diff > 0.0 && diff < 0.05 * k.dw1.sup_norm(), "{diff}");
}

// psi = g(r) s(z) with g = (1 - r^2)^2, s = sin(2 pi z); u1 = cos(pi r / 2) s(z).
fn manufactured(r: f64, z: f64, mu: f64) -> (f64, f64, f64, f64) {
    let (s, c) = ((2.0 * PI * z).sin(), (2.0 * PI * z).cos());
    let k = 2.0 * PI;
    let g = (1.0 - r * r).powi(2);
    let g1 = -4.0 * r * (1.0 - r * r);
    // omega1 = -(psi_rr + 3 psi_r / r + psi_zz)
    let wr = 16.0 - 24.0 * r * r + k * k * g;
    let wr1 = -48.0 * r + k * k * g1;
    let wr2 = -48.0 + k * k * (-4.0 + 12.0 * r * r);
    let wr1_over_r = -48.0 + k * k * (-4.0 * (1.0 - r * r));
    let w1 = wr * s;

    let (cu, su) = ((0.5 * PI * r).cos(), (0.5 * PI * r).sin());
    let u = cu * s;
    let u_r = -0.5 * PI * su * s;
    let u_rr = -0.25 * PI * PI * cu * s;
    let u_r_over_r = if r > 0.0 { -0.5 * PI * su / r * s } else { -0.25 * PI * PI * s };
    let u_z = cu * k * c;
    let u_zz = -k * k * u;

    let psi_z = g * k * c;
    let ur = -r * psi_z;
    let uz = 2.0 * g * s + r * g1 * s;

    let w_r = wr1 * s;
    let w_z = wr * k * c;
    let lap_u = u_rr + 3.0 * u_r_over_r + u_zz;
    let lap_w = wr2 * s + 3.0 * wr1_over_r * s - k * k * w1;

    let du = -(ur * u_r + uz * u_z) + 2.0 * u * psi_z + mu * lap_u;
    let dw = -(ur * w_r + uz * w_z) + 2.0 * u * u_z + mu * lap_w;
    (u, w1, du, dw)
}

#[test]
fn tendencies_match_symbolic_values_at_second_order() {
    let mu = 1e-2;
    let err = |n: usize| {
        let mesh = Mesh2::uniform(n, n / 2);
        let u1 = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| manufactured(r, z, mu).0);
        let w1 = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| manufactured(r, z, mu).1);
        let mut solver = Solver::new(Case::Constant(mu), 0.0, FilterPlan::none(), 0.1, Weight::Quadratic);
        let nu = solver.nu_fields(&w1, &mesh).unwrap();
        let k = solver.rhs(&u1, &w1, &nu, &mesh).unwrap();
        let (rn, zn) = (mesh.r.nodes(), mesh.z.nodes());
        let (mut eu, mut ew) = (0.0_f64, 0.0_f64);
        for i in 0..n {
            for j in 0..=n / 2 {
                let (_, _, du, dw) = manufactured(rn[i], zn[j], mu);
                eu = eu.max((k.du1.get(i, j) - du).abs());
                ew = ew.max((k.dw1.get(i, j) - dw).abs());
            }
        }
        (eu, ew)
    };
    let (a, b) = (err(64), err(128));
    let (ru, rw) = (a.0 / b.0, a.1 / b.1);
    assert!((3.3..4.8).contains(&ru), "{ru} {a:?} {b:?}");
    assert!((3.3..4.8).contains(&rw), "{rw} {a:?} {b:?}");
}

fn smooth_state(n: usize) -> State {
    let mesh = Mesh2::uniform(n, n / 2);
    let u1 = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| manufactured(r, z, 0.0).0);
    let w1 = FieldGrid::from_fn(&mesh, Parity::Even, Parity::Odd, |r, z| manufactured(r, z, 0.0).1);
    State { t: 0.0, u1, w1, mesh }
}

#[test]
fn heun_is_second_order_in_time() {
    let horizon = 0.02;
    let solve = |steps: usize| {
        let mut state = smooth_state(32);
        let mut solver = Solver::new(Case::Constant(1e-2), 0.0, FilterPlan::none(), 0.1, Weight::Quadratic);
        for _ in 0..steps {
            solver.step_fixed(&mut state, horizon / steps as f64).unwrap();
        }
        state
    };
    let reference = solve(64);
    let err = |steps: usize| {
        let s = solve(steps);
        (&s.u1.values - &reference.u1.values).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    };
    let ratio = err(4) / err(8);
    assert!((3.3..4.8).contains(&ratio), "{ratio}");
}

#[test]
fn symmetry_rows_stay_zero_and_energy_does_not_grow() {
    let mut state = smooth_state(32);
    let mut solver = Solver::new(Case::Constant(1e-2), 0.0, FilterPlan::standard(Case::Constant(1e-2), 16), 0.1, Weight::Quadratic);
    let energy = |solver: &mut Solver, s: &State| solver.record(s, 0.0, false).unwrap().energy;
    let mut e = energy(&mut solver, &state);
    for _ in 0..10 {
        solver.step(&mut state, 1.0).unwrap();
        for i in 0..=32 {
            assert_eq!((state.u1.get(i, 0), state.u1.get(i, 16)), (0.0, 0.0));
            assert_eq!((state.w1.get(i, 0), state.w1.get(i, 16)), (0.0, 0.0));
        }
        for j in 0..=16 {
            assert_eq!(state.u1.get(32, j), 0.0);
        }
        let next = energy(&mut solver, &state);
        assert!(next <= e * (1.0 + 1e-6), "{next} > {e}");
        e = next;
    }
}

#[test]
fn seed_data_step_grows_the_maximum_by_less_than_one_percent() {
    let config = RunConfig::new(1, 256, 128, 1.0);
    let mut state = initial_state(&config).unwrap();
    let mut solver = config.solver().unwrap();
    let report = solver.step(&mut state, 1.0).unwrap();
    assert!(report.dt > 0.0 && report.growth.is_finite());
    assert!((report.growth - 1.0).abs() < 0.01, "{report:?}");
}

#[test]
fn zero_horizon_run_emits_initial_diagnostics_only() {
    struct Count(usize, usize);
    impl Observer for Count {
        fn record(&mut self, _: &axisym::diagnostics::DiagnosticsRecord) {
            self.0 += 1;
        }
        fn step(&mut self, _: &StepReport, _: &State) {
            self.1 += 1;
        }
    }
    let config = RunConfig::new(1, 64, 32, 0.0);
    let mut obs = Count(0, 0);
    let summary = run(&config, &mut obs).unwrap();
    assert_eq!((obs.0, obs.1, summary.steps), (1, 0, 0));
    assert_eq!(summary.halt, Halt::Completed);
}

#[test]
fn run_stops_exactly_at_the_horizon() {
    let mut config = RunConfig::new(2, 64, 32, 3e-7);
    config.mu = 1e-5;
    let summary = run(&config, &mut NoOutput).unwrap();
    assert_eq!(summary.state.t, 3e-7);
    assert_eq!(summary.halt, Halt::Completed);
    assert!(summary.steps >= 1);
}

#[test]
fn regularized_case_invokes_the_remeshed_filter() {
    let mut config = RunConfig::new(4, 64, 32, 1.0);
    config.rlpf_k = 5;
    config.max_steps = Some(2);
    let summary = run(&config, &mut NoOutput).unwrap();
    assert_eq!(summary.halt, Halt::StepLimit);
    assert_eq!(summary.rlpf_calls, 8);

    config.case = 1;
    let summary = run(&config, &mut NoOutput).unwrap();
    assert_eq!(summary.rlpf_calls, 0);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = RunConfig::new(5, 64, 32, 1.0);
    assert!(matches!(c.validate(), Err(ConfigError::Case(5))));
    c.case = 1;
    c.cfl = 1.5;
    assert!(matches!(c.validate(), Err(ConfigError::Cfl(_))));
    c.cfl = 0.1;
    c.n = 4;
    assert!(matches!(c.validate(), Err(ConfigError::Resolution(4, 32))));
}
