//! Empirical order-of-accuracy harness: compare the period-map endpoint of
//! the switched system against the time-1 flow of the bound series over a
//! ladder of periods, and regress the error on the period in log-log scale.
//! The slope approaching order+1 is the working check that the truncation
//! order is delivered (and pins the flow-composition reading).

use crate::bchd::SeriesMethod;
use crate::flow::{
    compose_flows_with, flow_autonomous, FlowError, SwitchingSchedule, ToleranceConfig,
};
use crate::models::ControlAffineSystem;
use crate::scalar::{r, Real};
use crate::solve::SolveError;

/// Least-squares slope of y over x.
pub fn regression_slope<R: Real>(x: &[R], y: &[R]) -> R {
    assert_eq!(x.len(), y.len());
    let n = r::<R>(x.len() as f64);
    let mx = x.iter().copied().sum::<R>() / n;
    let my = y.iter().copied().sum::<R>() / n;
    let mut num = R::zero();
    let mut den = R::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Per-period errors `|flow_1(bound series)(x0) - period_map(x0)|` for the
/// schedule rescaled to each period in `taus`.
pub fn series_vs_period_map_errors<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    method: SeriesMethod,
    order: usize,
    x0: &[R],
    taus: &[R],
) -> Result<Vec<R>, SolveError> {
    let series = method.build(schedule.n_segments(), order)?;
    // tight tolerances: the measured error at the smallest period must
    // dominate the integration error
    let tol = ToleranceConfig::with_rtol_atol(r(1e-12), r(1e-14));
    let mut errors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let sched = schedule.with_tau(tau);
        let fields: Vec<_> = sched.controls.iter().map(|u| system.frozen(u)).collect();
        let bound = crate::bchd::bind_handle(&series, &fields, &sched.interval_fractions(), tau)?;
        let series_end = flow_autonomous(bound.as_ref(), x0, R::one(), &tol)?;
        let map_end = compose_flows_with(system, &sched, x0, &tol)?;
        let err = crate::linalg::vec_norm2(&crate::linalg::vec_sub(&series_end, &map_end));
        errors.push(err);
    }
    Ok(errors)
}

/// Log-log slope of the errors over the period ladder.
pub fn order_slope<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    method: SeriesMethod,
    order: usize,
    x0: &[R],
    taus: &[R],
) -> Result<R, SolveError> {
    let errors = series_vs_period_map_errors(system, schedule, method, order, x0, taus)?;
    let lx: Vec<R> = taus.iter().map(|&t| t.ln()).collect();
    let ly: Vec<R> = errors.iter().map(|&e| e.ln()).collect();
    Ok(regression_slope(&lx, &ly))
}

/// Convenience used by tests: errors of a custom map against the schedule's
/// period map over the ladder.
pub fn period_map_endpoint<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
) -> Result<Vec<R>, FlowError> {
    compose_flows_with(
        system,
        schedule,
        x0,
        &ToleranceConfig::with_rtol_atol(r(1e-12), r(1e-14)),
    )
}
