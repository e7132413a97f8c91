//! Integrator and flow-composition tests: closed-form and fixed-step
//! reference oracles, tolerance behavior, dense output, and the multi-period
//! runner.

use bchd_orbit::bchd::{bind_handle, SeriesMethod};
use bchd_orbit::flow::{
    compose_flows, compose_flows_with, flow_autonomous, integrate, simulate_periods,
    SwitchingSchedule, ToleranceConfig,
};
use bchd_orbit::lie::{FnField, Jet};
use bchd_orbit::linalg::{vec_norm2, vec_sub, DMat};
use bchd_orbit::models::{build_cstr2, build_cstr3, synthetic_linear, Cstr2Params, Cstr3Params};
use bchd_orbit::solve::{solve_shooting, SolverConfig};

#[test]
fn exponential_decay_to_high_accuracy() {
    let f = bchd_orbit::lie::LinearField::new(DMat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]));
    let traj = integrate(&f, &[1.0, 1.0], 0.0, 1.0, &ToleranceConfig::default()).unwrap();
    let e = (-1.0f64).exp();
    let end = &traj.endpoint().1;
    assert!((end[0] - e).abs() <= 1e-9 && (end[1] - e).abs() <= 1e-9);
}

#[test]
fn cstr_drift_against_fixed_step_rk4() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let f1 = sys.frozen(&sys.control_max());
    let x0 = [0.0, 0.0];
    // fixed-step classical RK4 as an independent reference
    let h = 1e-5;
    let steps = 50_000; // 0.5 time units
    let mut y = x0.to_vec();
    let eval = |y: &[f64]| f1.eval(y).unwrap();
    for _ in 0..steps {
        let k1 = eval(&y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = eval(&y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = eval(&y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = eval(&y4);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let traj = integrate(f1.as_ref(), &x0, 0.0, 0.5, &ToleranceConfig::default()).unwrap();
    let end = &traj.endpoint().1;
    assert!(
        vec_norm2(&vec_sub(end, &y)) <= 1e-7,
        "adaptive endpoint {end:?} vs rk4 reference {y:?}"
    );
}

#[test]
fn final_sample_is_exactly_at_the_requested_time() {
    let f = bchd_orbit::lie::ConstField::new(vec![1.0]);
    let traj = integrate(&f, &[0.0], 0.0, 0.7654321, &ToleranceConfig::default()).unwrap();
    assert_eq!(traj.endpoint().0, 0.7654321);
}

#[test]
fn tolerance_monotonicity() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let sched = SwitchingSchedule::symmetric_bang_bang(1.0, &sys);
    let x0 = [0.2, 0.1];
    let loose = compose_flows_with(
        &sys,
        &sched,
        &x0,
        &ToleranceConfig::with_rtol_atol(1e-8, 1e-10),
    )
    .unwrap();
    let tight = compose_flows_with(
        &sys,
        &sched,
        &x0,
        &ToleranceConfig::with_rtol_atol(1e-9, 1e-11),
    )
    .unwrap();
    let drift = vec_norm2(&vec_sub(&loose, &tight));
    assert!(
        drift <= 1e-8 * (1.0 + vec_norm2(&tight)),
        "tightening moved endpoint by {drift}"
    );
}

#[test]
fn autonomous_flow_time_rescaling_identity() {
    // flow of the degree-1 series over [0, 1] equals the plain flow over tau
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let f = sys.frozen(&[0.3, 0.01]);
    let tau = 0.8;
    let series = SeriesMethod::Recursive.build(1, 1).unwrap();
    let bound = bind_handle(&series, std::slice::from_ref(&f), &[1.0], tau).unwrap();
    let tol = ToleranceConfig::with_rtol_atol(1e-12, 1e-14);
    let x0 = [0.05, -0.02];
    let a = flow_autonomous(bound.as_ref(), &x0, 1.0, &tol).unwrap();
    let b = integrate(f.as_ref(), &x0, 0.0, tau, &tol)
        .unwrap()
        .endpoint()
        .1
        .clone();
    assert!(vec_norm2(&vec_sub(&a, &b)) <= 1e-8);
}

#[test]
fn long_flow_of_bound_series_approaches_its_equilibrium() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let sched = SwitchingSchedule::symmetric_bang_bang(1.0, &sys);
    let fields: Vec<_> = sched.controls.iter().map(|u| sys.frozen(u)).collect();
    let series = SeriesMethod::Recursive.build(2, 4).unwrap();
    let bound = bind_handle(&series, &fields, &sched.interval_fractions(), 1.0).unwrap();
    let tol = ToleranceConfig::with_rtol_atol(1e-10, 1e-12);
    let end = flow_autonomous(bound.as_ref(), &[0.5, 0.5], 50.0, &tol).unwrap();
    let attractor = [-0.4384, -0.01634];
    assert!(
        vec_norm2(&vec_sub(&end, attractor.as_ref())) <= 1e-4,
        "long-time state {end:?} not at the attractor"
    );
}

#[test]
fn periodic_orbit_closes_from_shooting_point() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let sched = SwitchingSchedule::symmetric_bang_bang(1.0, &sys);
    let report = solve_shooting(
        &sys,
        &sched,
        &[-0.4314, -0.01646],
        &SolverConfig::default(),
        &ToleranceConfig::default(),
    );
    assert!(report.converged);
    let back = compose_flows(&sys, &sched, &report.x_star).unwrap();
    assert!(vec_norm2(&vec_sub(&back, &report.x_star)) <= 1e-8);
    // all per-period samples coincide with the fixed point
    let run =
        simulate_periods(&sys, &sched, &report.x_star, 4, &ToleranceConfig::default()).unwrap();
    for p in &run.poincare {
        assert!(vec_norm2(&vec_sub(p, &report.x_star)) <= 1e-8);
    }
}

#[test]
fn three_state_per_period_distances_eventually_decrease() {
    let p = Cstr3Params::default();
    let sys = build_cstr3::<f64>(&p);
    let sched = SwitchingSchedule::new(
        1.0,
        vec![0.0, 0.5, 1.0],
        vec![vec![p.u1_max, p.u2_ref], vec![p.u1_min, p.u2_ref]],
    )
    .unwrap();
    let tol = ToleranceConfig::with_rtol_atol(1e-10, 1e-10);
    let run = simulate_periods(&sys, &sched, &[0.0, 0.0, 350.0], 15, &tol).unwrap();
    let mut gaps = Vec::new();
    let mut prev = vec![0.0, 0.0, 350.0];
    for p in &run.poincare {
        gaps.push(vec_norm2(&vec_sub(p, &prev)));
        prev = p.clone();
    }
    // successive-period displacement shrinks once the transient passes
    for w in gaps[2..].windows(2) {
        assert!(
            w[1] < w[0],
            "per-period displacement not decreasing: {gaps:?}"
        );
    }
}

#[test]
fn uniform_samples_follow_the_solution() {
    let f = bchd_orbit::lie::LinearField::new(DMat::from_rows(&[vec![-1.0]]));
    let cfg = ToleranceConfig {
        uniform_samples: 11,
        ..Default::default()
    };
    let traj = integrate(&f, &[1.0], 0.0, 1.0, &cfg).unwrap();
    // all requested times present (give or take dedup against step ends)
    for k in 0..11 {
        let t = k as f64 / 10.0;
        let (tn, x) = traj
            .samples
            .iter()
            .min_by(|a, b| (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap())
            .unwrap();
        assert!((tn - t).abs() <= 1e-9, "no sample near t = {t}");
        assert!(
            (x[0] - (-t).exp()).abs() <= 1e-7,
            "dense sample off at t = {t}"
        );
    }
}

#[test]
fn switch_samples_sit_exactly_on_the_breakpoints() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let sched =
        SwitchingSchedule::new(0.8, vec![0.0, 0.25, 0.7, 1.0], vec![sys.control_max(); 3]).unwrap();
    let traj = bchd_orbit::flow::compose_flows_trajectory(
        &sys,
        &sched,
        &[0.0, 0.0],
        &ToleranceConfig::default(),
    )
    .unwrap();
    assert_eq!(traj.switch_indices.len(), 3);
    for (&idx, (_, tb)) in traj.switch_indices.iter().zip(sched.segment_times()) {
        assert_eq!(
            traj.samples[idx].0, tb,
            "segment end not exactly at its breakpoint"
        );
    }
}

#[test]
fn integration_errors_carry_the_last_state() {
    // field blows up in finite time: 1/(1 - t)-like via x' = x^2 from x0 = 1
    let f = FnField::new(1, |x: &[Jet<f64>]| vec![&x[0] * &x[0]]);
    let err = integrate(&f, &[1.0], 0.0, 2.0, &ToleranceConfig::default()).unwrap_err();
    let state = err.last_state().expect("error carries last state");
    assert!(state[0].is_finite());
}

#[test]
fn segment_errors_are_annotated() {
    let sys = synthetic_linear(DMat::from_rows(&[vec![0.0]]), DMat::identity(1));
    // second segment control outside the box
    let sched =
        SwitchingSchedule::new(1.0, vec![0.0, 0.5, 1.0], vec![vec![0.5], vec![7.0]]).unwrap();
    let err = compose_flows(&sys, &sched, &[0.0]).unwrap_err();
    assert!(
        err.to_string().contains("control"),
        "unexpected error: {err}"
    );
}
