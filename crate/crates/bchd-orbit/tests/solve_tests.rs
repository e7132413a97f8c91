//! Solver tests: the 2-state reactor equilibrium chain against its published
//! reference values, shooting against closed-form and chain results, and the
//! solver contracts (warm-start budget, guess locality, residual
//! certificates).

use bchd_orbit::bchd::{bind_handle, SeriesMethod};
use bchd_orbit::flow::{SwitchingSchedule, ToleranceConfig};
use bchd_orbit::linalg::{vec_norm2, vec_sub, DMat};
use bchd_orbit::models::{build_cstr2, build_cstr3, synthetic_linear, Cstr2Params, Cstr3Params};
use bchd_orbit::solve::{find_equilibrium, refine_chain, solve_shooting, SolverConfig};

const TABLE_2D: [(usize, [f64; 2]); 4] = [
    (1, [0.0, 0.0]),
    (2, [-0.3651, -0.01796]),
    (3, [-0.4638, -0.01644]),
    (4, [-0.4384, -0.01634]),
];

fn cstr2_setup() -> (bchd_orbit::System64, SwitchingSchedule<f64>) {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let sched = SwitchingSchedule::symmetric_bang_bang(1.0, &sys);
    (sys, sched)
}

#[test]
fn equilibrium_chain_reproduces_reference_values() {
    let (sys, sched) = cstr2_setup();
    let orders: Vec<usize> = TABLE_2D.iter().map(|(m, _)| *m).collect();
    let reports = refine_chain(
        &sys,
        &sched,
        &orders,
        &[0.1, 0.1],
        &SolverConfig::default(),
        SeriesMethod::Recursive,
        false,
        &ToleranceConfig::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 4);
    for (report, (order, want)) in reports.iter().zip(TABLE_2D) {
        assert!(report.converged, "order {order} did not converge");
        for (i, (&got, want)) in report.x_star.iter().zip(want).enumerate() {
            assert!(
                (got - want).abs() <= 1e-3,
                "order {order}, coordinate {i}: got {got}, reference {want}"
            );
        }
    }
}

#[test]
fn chain_methods_agree() {
    let (sys, sched) = cstr2_setup();
    let cfg = SolverConfig::default();
    let tol = ToleranceConfig::default();
    let a = refine_chain(
        &sys,
        &sched,
        &[3],
        &[-0.4, -0.016],
        &cfg,
        SeriesMethod::Recursive,
        false,
        &tol,
    )
    .unwrap();
    let b = refine_chain(
        &sys,
        &sched,
        &[3],
        &[-0.4, -0.016],
        &cfg,
        SeriesMethod::Appendix,
        false,
        &tol,
    )
    .unwrap();
    let c = refine_chain(
        &sys,
        &sched,
        &[3],
        &[-0.4, -0.016],
        &cfg,
        SeriesMethod::General,
        false,
        &tol,
    )
    .unwrap();
    assert!(vec_norm2(&vec_sub(&a[0].x_star, &b[0].x_star)) <= 1e-9);
    assert!(vec_norm2(&vec_sub(&a[0].x_star, &c[0].x_star)) <= 1e-9);
}

#[test]
fn warm_start_budget_is_respected() {
    // measured during bring-up: warm-started stages settle in a few steps
    let (sys, sched) = cstr2_setup();
    let reports = refine_chain(
        &sys,
        &sched,
        &[1, 2, 3, 4],
        &[0.1, 0.1],
        &SolverConfig::default(),
        SeriesMethod::Recursive,
        false,
        &ToleranceConfig::default(),
    )
    .unwrap();
    for report in &reports {
        assert!(report.converged);
        assert!(
            report.iterations <= 6,
            "{}: took {} Newton steps",
            report.method,
            report.iterations
        );
    }
}

#[test]
fn shooting_reproduces_reference_fixed_point() {
    let (sys, sched) = cstr2_setup();
    let report = solve_shooting(
        &sys,
        &sched,
        &[-0.4384, -0.01634],
        &SolverConfig {
            tol_residual: 1e-10,
            ..Default::default()
        },
        &ToleranceConfig::default(),
    );
    assert!(report.converged, "status {:?}", report.status);
    assert!(
        (report.x_star[0] - -0.4314).abs() <= 2e-3,
        "x1 = {}",
        report.x_star[0]
    );
    assert!(
        (report.x_star[1] - -0.01646).abs() <= 2e-3,
        "x2 = {}",
        report.x_star[1]
    );
    // orbitally stable: monodromy inside the unit circle
    for ev in &report.jacobian_eigenvalues {
        assert!(
            ev.norm() < 1.0,
            "monodromy eigenvalue {ev} outside the unit circle"
        );
    }
}

#[test]
fn shooting_linear_oracle() {
    // xdot = -x + u in 2 states, decoupled: fixed point per state from the
    // scalar geometric series
    let sys = synthetic_linear(
        DMat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]),
        DMat::identity(2),
    );
    let tau = 1.3;
    let sched = SwitchingSchedule::symmetric_bang_bang(tau, &sys);
    let e = (-(tau / 2.0f64)).exp();
    let xfix = (-e * e + 2.0 * e - 1.0) / (1.0 - e * e);
    let report = solve_shooting(
        &sys,
        &sched,
        &[0.0, 0.0],
        &SolverConfig {
            tol_residual: 1e-12,
            ..Default::default()
        },
        &ToleranceConfig::default(),
    );
    assert!(report.converged);
    assert!((report.x_star[0] - xfix).abs() <= 1e-9);
    assert!((report.x_star[1] - xfix).abs() <= 1e-9);
}

#[test]
fn guess_locality_for_the_reference_problems() {
    let (sys, sched) = cstr2_setup();
    let cfg = SolverConfig::default();
    let tol = ToleranceConfig::default();
    for order in [2usize, 3, 4] {
        let base = refine_chain(
            &sys,
            &sched,
            &[order],
            &[-0.4, -0.016],
            &cfg,
            SeriesMethod::Recursive,
            false,
            &tol,
        )
        .unwrap()[0]
            .x_star
            .clone();
        for delta in [[1e-3, 0.0], [0.0, 1e-3], [-1e-3, -1e-3]] {
            let guess = [-0.4 + delta[0], -0.016 + delta[1]];
            let shifted = refine_chain(
                &sys,
                &sched,
                &[order],
                &guess,
                &cfg,
                SeriesMethod::Recursive,
                false,
                &tol,
            )
            .unwrap()[0]
                .x_star
                .clone();
            assert!(
                vec_norm2(&vec_sub(&base, &shifted)) <= 1e-7,
                "order {order}: equilibrium moved under guess perturbation {delta:?}"
            );
        }
    }
}

#[test]
fn residual_certificate_is_independent_of_the_solver_path() {
    let (sys, sched) = cstr2_setup();
    let fields: Vec<_> = sched.controls.iter().map(|u| sys.frozen(u)).collect();
    let series = SeriesMethod::Recursive.build(2, 4).unwrap();
    let bound = bind_handle(&series, &fields, &sched.interval_fractions(), sched.tau).unwrap();
    let cfg = SolverConfig::default();
    let report = find_equilibrium(bound.as_ref(), &[-0.4, -0.016], &cfg);
    assert!(report.converged);
    let f = bound.eval(&report.x_star).unwrap();
    assert!(
        vec_norm2(&f) <= cfg.tol_residual,
        "re-evaluated residual {}",
        vec_norm2(&f)
    );
}

#[test]
fn three_state_equilibrium_and_polish() {
    let p = Cstr3Params::default();
    let sys = build_cstr3::<f64>(&p);
    // the case-study schedule modulates the inlet concentration only; the
    // temperature input stays at its reference value
    let sched = SwitchingSchedule::new(
        1.0,
        vec![0.0, 0.5, 1.0],
        vec![vec![p.u1_max, p.u2_ref], vec![p.u1_min, p.u2_ref]],
    )
    .unwrap();
    let cfg = SolverConfig {
        tol_residual: 1e-8,
        ..Default::default()
    };
    let tol = ToleranceConfig::with_rtol_atol(1e-12, 1e-12);
    let reports = refine_chain(
        &sys,
        &sched,
        &[4],
        &[0.3683, 0.6189, 357.7354],
        &cfg,
        SeriesMethod::Recursive,
        true,
        &tol,
    )
    .unwrap();
    let eq = &reports[0];
    let shoot = &reports[1];
    assert!(eq.converged && shoot.converged);
    // series zero approximates the published point to about a percent; the
    // shooting polish lands within a part in a thousand per coordinate
    let reference = [0.2582478, 0.6062874, 357.4668];
    for (i, (&got, want)) in eq.x_star.iter().zip(reference).enumerate() {
        assert!(
            ((got - want) / want).abs() <= 1e-2,
            "series equilibrium coordinate {i}: {got} vs {want}"
        );
    }
    for (i, (&got, want)) in shoot.x_star.iter().zip(reference).enumerate() {
        assert!(
            ((got - want) / want).abs() <= 1e-3,
            "polished coordinate {i}: {got} vs {want}"
        );
    }
    assert!(
        shoot.residual_norm <= 1e-6,
        "periodicity residual {}",
        shoot.residual_norm
    );
}
