//! Switched-system integration: an embedded 5(4) Runge-Kutta pair with PI
//! step control, exact segmenting over the switching schedule (switch times
//! are breakpoints, never events), and autonomous flows of bound series.

mod dopri5;

pub use dopri5::ToleranceConfig;

use thiserror::Error;

use crate::lie::{LieError, VectorField};
use crate::models::{ControlAffineSystem, ModelError};
use crate::scalar::{r, Real};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64, last_state: Vec<f64> },
    #[error("non-finite field value at t = {t}")]
    NonFiniteField { t: f64, last_state: Vec<f64> },
    #[error("step budget exhausted at t = {t}")]
    MaxStepsExceeded { t: f64, last_state: Vec<f64> },
    #[error("field evaluation failed at t = {t}: {source}")]
    FieldEval {
        t: f64,
        last_state: Vec<f64>,
        #[source]
        source: LieError,
    },
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<FlowError>,
    },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("time span must be increasing (t0 = {t0}, t1 = {t1})")]
    BadSpan { t0: f64, t1: f64 },
}

impl FlowError {
    fn in_segment(self, index: usize) -> FlowError {
        FlowError::Segment {
            index,
            source: Box::new(self),
        }
    }

    /// Last state the integrator accepted before failing, when one exists.
    pub fn last_state(&self) -> Option<&[f64]> {
        match self {
            FlowError::StepSizeUnderflow { last_state, .. }
            | FlowError::NonFiniteField { last_state, .. }
            | FlowError::MaxStepsExceeded { last_state, .. }
            | FlowError::FieldEval { last_state, .. } => Some(last_state),
            FlowError::Segment { source, .. } => source.last_state(),
            _ => None,
        }
    }
}

/// Bang-bang switching schedule over one period: strictly increasing
/// breakpoints from exactly 0 to exactly 1 (fractions of the period), one
/// control vector per interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSchedule<R> {
    pub tau: R,
    pub breakpoints: Vec<R>,
    pub controls: Vec<Vec<R>>,
}

impl<R: Real> SwitchingSchedule<R> {
    pub fn new(tau: R, breakpoints: Vec<R>, controls: Vec<Vec<R>>) -> Result<Self, FlowError> {
        if !(tau > R::zero()) || !tau.is_finite() {
            return Err(FlowError::Schedule(format!(
                "period must be positive, got {tau}"
            )));
        }
        if breakpoints.len() < 2 {
            return Err(FlowError::Schedule(
                "need at least breakpoints 0 and 1".into(),
            ));
        }
        if breakpoints[0] != R::zero() || *breakpoints.last().unwrap() != R::one() {
            return Err(FlowError::Schedule(
                "breakpoints must start at exactly 0 and end at exactly 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(FlowError::Schedule(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if controls.len() != breakpoints.len() - 1 {
            return Err(FlowError::Schedule(format!(
                "{} intervals but {} control vectors",
                breakpoints.len() - 1,
                controls.len()
            )));
        }
        Ok(SwitchingSchedule {
            tau,
            breakpoints,
            controls,
        })
    }

    /// The standard two-interval scenario: first half at the upper control
    /// vertex, second half at the lower one.
    pub fn symmetric_bang_bang(tau: R, system: &ControlAffineSystem<R>) -> Self {
        SwitchingSchedule {
            tau,
            breakpoints: vec![R::zero(), r(0.5), R::one()],
            controls: vec![system.control_max(), system.control_min()],
        }
    }

    pub fn n_segments(&self) -> usize {
        self.controls.len()
    }

    /// Interval lengths as fractions of the period; these are the exponent
    /// weights handed to a Lie series.
    pub fn interval_fractions(&self) -> Vec<R> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Per-segment absolute time windows `[a_{k-1} tau, a_k tau]`.
    pub fn segment_times(&self) -> Vec<(R, R)> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[0] * self.tau, w[1] * self.tau))
            .collect()
    }

    pub fn validate_against(&self, system: &ControlAffineSystem<R>) -> Result<(), ModelError> {
        for u in &self.controls {
            system.validate_control(u)?;
        }
        Ok(())
    }

    pub fn with_tau(&self, tau: R) -> Self {
        let mut s = self.clone();
        s.tau = tau;
        s
    }
}

/// Time-stamped solution samples with segment markers.
#[derive(Clone, Debug)]
pub struct Trajectory<R> {
    /// (time, state), strictly increasing times, first at the initial time
    pub samples: Vec<(R, Vec<R>)>,
    /// sample indices that end a segment
    pub switch_indices: Vec<usize>,
    /// tolerances the integrator ran with
    pub rtol: R,
    pub atol: R,
}

impl<R: Real> Trajectory<R> {
    pub fn endpoint(&self) -> &(R, Vec<R>) {
        self.samples
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |(_, x)| x.len())
    }

    fn segment_of(&self, sample_index: usize) -> usize {
        self.switch_indices
            .iter()
            .filter(|&&s| s < sample_index)
            .count()
    }

    /// CSV with header `t,x1,...,xn,segment`, round-trip float formatting.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let n = self.dim();
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",x{i}")?;
        }
        writeln!(w, ",segment")?;
        for (idx, (t, x)) in self.samples.iter().enumerate() {
            write!(w, "{t}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.segment_of(idx))?;
        }
        Ok(())
    }

    /// Concatenate, dropping the duplicated joint sample.
    fn extend_with(&mut self, other: Trajectory<R>) {
        let offset = self.samples.len();
        self.samples.extend(other.samples.into_iter().skip(1));
        self.switch_indices
            .extend(other.switch_indices.into_iter().map(|i| i + offset - 1));
    }
}

/// Adaptive integration of `field` over `[t0, t1]`; the final sample lands
/// exactly at `t1`.
pub fn integrate<R: Real>(
    field: &dyn VectorField<R>,
    x0: &[R],
    t0: R,
    t1: R,
    tol: &ToleranceConfig<R>,
) -> Result<Trajectory<R>, FlowError> {
    dopri5::solve(field, x0, t0, t1, tol)
}

/// Flow of the switched system over one period: integrates each frozen
/// segment over its exact time window and chains the endpoints. Returns the
/// state at `tau`.
pub fn compose_flows<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
) -> Result<Vec<R>, FlowError> {
    compose_flows_with(system, schedule, x0, &ToleranceConfig::default())
}

pub fn compose_flows_with<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
    tol: &ToleranceConfig<R>,
) -> Result<Vec<R>, FlowError> {
    Ok(run_segments(system, schedule, x0, tol, R::zero(), false)?.1)
}

/// As `compose_flows` but keeping the full trajectory.
pub fn compose_flows_trajectory<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
    tol: &ToleranceConfig<R>,
) -> Result<Trajectory<R>, FlowError> {
    Ok(run_segments(system, schedule, x0, tol, R::zero(), true)?
        .0
        .expect("trajectory requested"))
}

/// One pass over the segments, optionally shifted in time. Switch times are
/// segment boundaries; every segment ends exactly on its breakpoint.
fn run_segments<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
    tol: &ToleranceConfig<R>,
    offset: R,
    keep_trajectory: bool,
) -> Result<(Option<Trajectory<R>>, Vec<R>), FlowError> {
    schedule.validate_against(system)?;
    // stiff segments are tamed by capping the step at tau/50
    let seg_cap = schedule.tau / r(50.0);
    let mut seg_tol = tol.clone();
    seg_tol.max_step = Some(tol.max_step.map_or(seg_cap, |m| m.min(seg_cap)));

    let mut state = x0.to_vec();
    let mut full: Option<Trajectory<R>> = None;
    for (k, ((ta, tb), u)) in schedule
        .segment_times()
        .iter()
        .zip(&schedule.controls)
        .enumerate()
    {
        let field = system.frozen(u);
        let traj = dopri5::solve(field.as_ref(), &state, *ta + offset, *tb + offset, &seg_tol)
            .map_err(|e| e.in_segment(k))?;
        state = traj.endpoint().1.clone();
        if keep_trajectory {
            match &mut full {
                None => {
                    let mut t = traj;
                    t.switch_indices.push(t.samples.len() - 1);
                    full = Some(t);
                }
                Some(acc) => {
                    acc.extend_with(traj);
                    acc.switch_indices.push(acc.samples.len() - 1);
                }
            }
        }
    }
    Ok((full, state))
}

/// Endpoint of the autonomous flow of `field` after time `t_final`
/// (the associated series field is integrated over [0, 1]).
pub fn flow_autonomous<R: Real>(
    field: &dyn VectorField<R>,
    x0: &[R],
    t_final: R,
    tol: &ToleranceConfig<R>,
) -> Result<Vec<R>, FlowError> {
    Ok(dopri5::solve(field, x0, R::zero(), t_final, tol)?
        .endpoint()
        .1
        .clone())
}

/// Full multi-period simulation of the switched system.
pub struct SimulationRun<R> {
    pub trajectory: Trajectory<R>,
    /// state at the end of each period (k = 1..=n_periods)
    pub poincare: Vec<Vec<R>>,
}

pub fn simulate_periods<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x0: &[R],
    n_periods: usize,
    tol: &ToleranceConfig<R>,
) -> Result<SimulationRun<R>, FlowError> {
    assert!(n_periods >= 1);
    let mut poincare = Vec::with_capacity(n_periods);
    let mut state = x0.to_vec();
    let mut trajectory: Option<Trajectory<R>> = None;
    for period in 0..n_periods {
        let offset = schedule.tau * r(period as f64);
        let (traj, end) = run_segments(system, schedule, &state, tol, offset, true)?;
        state = end;
        poincare.push(state.clone());
        let traj = traj.expect("trajectory requested");
        match &mut trajectory {
            None => trajectory = Some(traj),
            Some(acc) => acc.extend_with(traj),
        }
    }
    Ok(SimulationRun {
        trajectory: trajectory.expect("n_periods >= 1"),
        poincare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{ConstField, LinearField};
    use crate::linalg::{vec_norm2, vec_sub, DMat};
    use crate::models::synthetic_linear;
    use approx::assert_relative_eq;

    fn decay_field() -> LinearField<f64> {
        LinearField::new(DMat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]))
    }

    #[test]
    fn linear_decay_endpoint() {
        let traj = integrate(
            &decay_field(),
            &[1.0, 1.0],
            0.0,
            1.0,
            &ToleranceConfig::default(),
        )
        .unwrap();
        let (t, x) = traj.endpoint();
        assert_eq!(*t, 1.0);
        let e = (-1.0f64).exp();
        assert_relative_eq!(x[0], e, epsilon = 1e-9);
        assert_relative_eq!(x[1], e, epsilon = 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let f = ConstField::new(vec![0.0, 0.0]);
        let traj = integrate(&f, &[2.0, -3.0], 0.0, 5.0, &ToleranceConfig::default()).unwrap();
        for (_, x) in &traj.samples {
            assert_eq!(x, &vec![2.0, -3.0]);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(
            SwitchingSchedule::new(1.0, vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![0.0]]).is_ok()
        );
        assert!(SwitchingSchedule::new(0.0, vec![0.0, 1.0], vec![vec![0.0]]).is_err());
        assert!(SwitchingSchedule::new(1.0, vec![0.0, 0.5], vec![vec![0.0]]).is_err());
        assert!(SwitchingSchedule::new(1.0, vec![0.0, 0.6, 0.5, 1.0], vec![vec![]; 3]).is_err());
    }

    #[test]
    fn compose_linear_drift_no_control() {
        // xdot = -x, one segment with u = 0: endpoint e^{-tau} x0
        let sys = synthetic_linear(
            DMat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]),
            DMat::identity(2),
        );
        let sched = SwitchingSchedule::new(0.8, vec![0.0, 1.0], vec![vec![0.0, 0.0]]).unwrap();
        let out = compose_flows(&sys, &sched, &[2.0, -1.0]).unwrap();
        let factor = (-0.8f64).exp();
        assert_relative_eq!(out[0], 2.0 * factor, epsilon = 1e-9);
        assert_relative_eq!(out[1], -factor, epsilon = 1e-9);
    }

    #[test]
    fn tiny_period_is_near_identity() {
        let sys = crate::models::build_cstr2::<f64>(&crate::models::Cstr2Params::default());
        let sched = SwitchingSchedule::symmetric_bang_bang(1e-8, &sys);
        let x0 = [0.1, 0.05];
        let out = compose_flows(&sys, &sched, &x0).unwrap();
        assert!(vec_norm2(&vec_sub(&out, &x0)) <= 1e-7);
    }

    #[test]
    fn zero_field_period_is_identity_within_atol() {
        let sys = synthetic_linear(DMat::zeros(2, 2), DMat::identity(2));
        let sched = SwitchingSchedule::new(1e-8, vec![0.0, 1.0], vec![vec![0.0, 0.0]]).unwrap();
        let x0 = [0.3, 0.4];
        let out = compose_flows(&sys, &sched, &x0).unwrap();
        assert!(vec_norm2(&vec_sub(&out, &x0)) <= 10.0 * 1e-12);
    }

    #[test]
    fn splitting_a_segment_changes_nothing() {
        let sys = crate::models::build_cstr2::<f64>(&crate::models::Cstr2Params::default());
        let whole = SwitchingSchedule::symmetric_bang_bang(1.0, &sys);
        let u1 = sys.control_max();
        let u2 = sys.control_min();
        let split = SwitchingSchedule::new(
            1.0,
            vec![0.0, 0.2, 0.5, 1.0],
            vec![u1.clone(), u1.clone(), u2.clone()],
        )
        .unwrap();
        let x0 = [0.0, 0.0];
        let a = compose_flows(&sys, &whole, &x0).unwrap();
        let b = compose_flows(&sys, &split, &x0).unwrap();
        let tol = ToleranceConfig::<f64>::default();
        assert!(vec_norm2(&vec_sub(&a, &b)) <= 10.0 * tol.rtol * (1.0 + vec_norm2(&a)));
    }

    #[test]
    fn simulate_periods_from_fixed_point_stays() {
        // xdot = -x + u, symmetric bang-bang with u in {1, -1}: by symmetry
        // the periodic point for the first segment start is analytic
        let sys = synthetic_linear(DMat::from_rows(&[vec![-1.0]]), DMat::identity(1));
        let tau = 0.6f64;
        let sched = SwitchingSchedule::symmetric_bang_bang(tau, &sys);
        // fixed point of e^{-tau/2}(e^{-tau/2}(x+ ... )): solve scalar map
        // x -> e^{-h}(x - u2e) + u2e after x -> e^{-h}(x - u1e) + u1e with
        // u1e = 1, u2e = -1, h = tau/2
        let h = tau / 2.0;
        let e = (-h).exp();
        // P(x) = e*(e*(x-1)+1+1) - 1 = e^2 x - e^2 + 2e - 1
        let xfix = (-e * e + 2.0 * e - 1.0) / (1.0 - e * e);
        let run = simulate_periods(&sys, &sched, &[xfix], 5, &ToleranceConfig::default()).unwrap();
        for p in &run.poincare {
            assert_relative_eq!(p[0], xfix, epsilon = 1e-8);
        }
    }

    #[test]
    fn trajectory_csv_header_and_segments() {
        let sys = synthetic_linear(DMat::zeros(2, 2), DMat::identity(2));
        let sched = SwitchingSchedule::new(
            1.0,
            vec![0.0, 0.5, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let traj = compose_flows_trajectory(&sys, &sched, &[0.0, 0.0], &ToleranceConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,segment");
        assert!(text.lines().last().unwrap().ends_with(",1"));
    }
}
