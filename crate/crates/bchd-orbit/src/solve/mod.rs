//! Newton-type solvers: equilibria of bound series fields (jet Jacobians)
//! and fixed points of the period map (finite-difference Jacobians), plus
//! the warm-started refinement chain over truncation orders.

use std::fmt::Write as _;

use num_complex::Complex;
use thiserror::Error;

use crate::bchd::{bind_handle, BchdError, SeriesMethod};
use crate::flow::{compose_flows_with, FlowError, SwitchingSchedule, ToleranceConfig};
use crate::lie::{jacobian, DomainBox, VectorField};
use crate::linalg::{vec_norm2, vec_sub, DMat};
use crate::models::ControlAffineSystem;
use crate::scalar::{r, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<R> {
    pub tol_residual: R,
    pub max_iter: usize,
    /// central-difference step scale for the period-map Jacobian
    pub fd_step_scale: R,
    /// backtracking factor for the damped step
    pub damping: R,
    /// sufficient-decrease constant for the backtracking test
    pub armijo: R,
    /// Jacobians with 1-norm condition beyond this are treated as singular
    pub cond_limit: R,
}

impl<R: Real> Default for SolverConfig<R> {
    fn default() -> Self {
        SolverConfig {
            tol_residual: r(1e-10),
            max_iter: 50,
            fd_step_scale: r(1e-6),
            damping: r(0.5),
            armijo: r(1e-4),
            cond_limit: r(1e12),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    SingularJacobian,
    LineSearchStalled,
    EvaluationFailed,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::SingularJacobian => "singular-jacobian",
            SolveStatus::LineSearchStalled => "line-search-stalled",
            SolveStatus::EvaluationFailed => "evaluation-failed",
        }
    }
}

/// Outcome of an equilibrium or shooting solve. `jacobian_eigenvalues` holds
/// the field Jacobian spectrum for equilibria and the monodromy (period-map
/// Jacobian) spectrum for shooting solves.
#[derive(Clone, Debug)]
pub struct EquilibriumReport<R> {
    pub method: String,
    pub x_star: Vec<R>,
    pub residual_norm: R,
    pub iterations: usize,
    pub jacobian_eigenvalues: Vec<Complex<R>>,
    pub converged: bool,
    pub status: SolveStatus,
}

impl<R: Real> EquilibriumReport<R> {
    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "status={}", self.status.as_str());
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "residual_norm={:e}", self.residual_norm);
        for (i, v) in self.x_star.iter().enumerate() {
            let _ = writeln!(s, "x{}={}", i + 1, v);
        }
        for (i, ev) in self.jacobian_eigenvalues.iter().enumerate() {
            let _ = writeln!(
                s,
                "eig{}={}{}{}i",
                i + 1,
                ev.re,
                if ev.im < R::zero() { "-" } else { "+" },
                ev.im.abs()
            );
        }
        s
    }

    pub fn csv_header(dim: usize) -> String {
        let mut s = String::from("method,status,converged,iterations,residual_norm");
        for i in 1..=dim {
            let _ = write!(s, ",x{i}");
        }
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{:e}",
            self.method,
            self.status.as_str(),
            self.converged,
            self.iterations,
            self.residual_norm
        );
        for v in &self.x_star {
            let _ = write!(s, ",{v}");
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Series(#[from] BchdError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

struct NewtonOutcome<R> {
    x: Vec<R>,
    residual: R,
    iterations: usize,
    status: SolveStatus,
}

/// Damped Newton with backtracking on the squared residual and a domain
/// guard: trial points outside `domain` (or where evaluation fails) shrink
/// the step.
fn damped_newton<R: Real>(
    mut eval: impl FnMut(&[R]) -> Option<Vec<R>>,
    mut jac: impl FnMut(&[R]) -> Option<DMat<R>>,
    domain: Option<&DomainBox<R>>,
    x_guess: &[R],
    cfg: &SolverConfig<R>,
) -> NewtonOutcome<R> {
    assert!(
        cfg.tol_residual > R::zero(),
        "residual tolerance must be positive"
    );
    assert!(cfg.max_iter >= 1, "need at least one iteration");
    let mut x = x_guess.to_vec();
    let mut fx = match eval(&x) {
        Some(v) => v,
        None => {
            return NewtonOutcome {
                x,
                residual: R::infinity(),
                iterations: 0,
                status: SolveStatus::EvaluationFailed,
            }
        }
    };
    let mut res = vec_norm2(&fx);
    for iter in 0..cfg.max_iter {
        if res <= cfg.tol_residual {
            return NewtonOutcome {
                x,
                residual: res,
                iterations: iter,
                status: SolveStatus::Converged,
            };
        }
        let j = match jac(&x) {
            Some(j) => j,
            None => {
                return NewtonOutcome {
                    x,
                    residual: res,
                    iterations: iter,
                    status: SolveStatus::EvaluationFailed,
                }
            }
        };
        let lu = match j.lu() {
            Some(lu) => lu,
            None => {
                return NewtonOutcome {
                    x,
                    residual: res,
                    iterations: iter,
                    status: SolveStatus::SingularJacobian,
                }
            }
        };
        if let Some(cond) = j.cond_1() {
            if cond > cfg.cond_limit {
                return NewtonOutcome {
                    x,
                    residual: res,
                    iterations: iter,
                    status: SolveStatus::SingularJacobian,
                };
            }
        }
        let neg_fx: Vec<R> = fx.iter().map(|&v| -v).collect();
        let step = lu.solve(&neg_fx);
        let mut lambda = R::one();
        let mut accepted = false;
        while lambda > r(1e-14) {
            let trial: Vec<R> = x
                .iter()
                .zip(&step)
                .map(|(&xi, &si)| xi + lambda * si)
                .collect();
            let inside = domain.is_none_or(|d| d.contains(&trial));
            if inside {
                if let Some(ftrial) = eval(&trial) {
                    let rtrial = vec_norm2(&ftrial);
                    if rtrial * rtrial <= (R::one() - cfg.armijo * lambda) * res * res
                        || rtrial <= cfg.tol_residual
                    {
                        x = trial;
                        fx = ftrial;
                        res = rtrial;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= cfg.damping;
        }
        if !accepted {
            return NewtonOutcome {
                x,
                residual: res,
                iterations: iter + 1,
                status: SolveStatus::LineSearchStalled,
            };
        }
    }
    let status = if res <= cfg.tol_residual {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    NewtonOutcome {
        x,
        residual: res,
        iterations: cfg.max_iter,
        status,
    }
}

/// Find a zero of `field` by damped Newton with the jet-computed Jacobian.
/// The report's eigenvalues are those of the field Jacobian at the solution.
pub fn find_equilibrium<R: Real>(
    field: &dyn VectorField<R>,
    x_guess: &[R],
    cfg: &SolverConfig<R>,
) -> EquilibriumReport<R> {
    let outcome = damped_newton(
        |x| {
            field
                .eval(x)
                .ok()
                .filter(|v| v.iter().all(|c| c.is_finite()))
        },
        |x| jacobian(field, x).ok(),
        field.domain(),
        x_guess,
        cfg,
    );
    let eigenvalues = if outcome.status == SolveStatus::Converged {
        jacobian(field, &outcome.x)
            .map(|j| j.eigenvalues())
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    EquilibriumReport {
        method: "equilibrium".into(),
        x_star: outcome.x,
        residual_norm: outcome.residual,
        iterations: outcome.iterations,
        jacobian_eigenvalues: eigenvalues,
        converged: outcome.status == SolveStatus::Converged,
        status: outcome.status,
    }
}

/// Jacobian of the period map by per-coordinate central differences.
fn period_map_jacobian<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x: &[R],
    cfg: &SolverConfig<R>,
    tol: &ToleranceConfig<R>,
) -> Result<DMat<R>, FlowError> {
    let n = x.len();
    let mut j = DMat::zeros(n, n);
    for col in 0..n {
        let h = cfg.fd_step_scale * R::one().max(x[col].abs());
        let mut xp = x.to_vec();
        xp[col] += h;
        let mut xm = x.to_vec();
        xm[col] -= h;
        let fp = compose_flows_with(system, schedule, &xp, tol)?;
        let fm = compose_flows_with(system, schedule, &xm, tol)?;
        for row in 0..n {
            j[(row, col)] = (fp[row] - fm[row]) / (r::<R>(2.0) * h);
        }
    }
    Ok(j)
}

/// Solve the periodic boundary problem `x(tau; x) = x` by Newton on
/// `G(x) = P(x) - x`. The report's eigenvalues are the monodromy spectrum
/// (Jacobian of the period map) at the fixed point.
pub fn solve_shooting<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    x_guess: &[R],
    cfg: &SolverConfig<R>,
    tol: &ToleranceConfig<R>,
) -> EquilibriumReport<R> {
    let n = system.n;
    let outcome = damped_newton(
        |x| {
            compose_flows_with(system, schedule, x, tol)
                .ok()
                .map(|p| vec_sub(&p, x))
                .filter(|v| v.iter().all(|c| c.is_finite()))
        },
        |x| {
            let jp = period_map_jacobian(system, schedule, x, cfg, tol).ok()?;
            let mut jg = jp;
            for i in 0..n {
                jg[(i, i)] -= R::one();
            }
            Some(jg)
        },
        Some(&system.domain_box),
        x_guess,
        cfg,
    );
    let eigenvalues = if outcome.status == SolveStatus::Converged {
        period_map_jacobian(system, schedule, &outcome.x, cfg, tol)
            .map(|j| j.eigenvalues())
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    EquilibriumReport {
        method: "shooting".into(),
        x_star: outcome.x,
        residual_norm: outcome.residual,
        iterations: outcome.iterations,
        jacobian_eigenvalues: eigenvalues,
        converged: outcome.status == SolveStatus::Converged,
        status: outcome.status,
    }
}

/// For each truncation order, bind the series for this schedule and solve
/// for its zero, warm-starting from the previous solution; optionally polish
/// the last solution with a shooting solve (appended as an extra report).
#[allow(clippy::too_many_arguments)]
pub fn refine_chain<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    orders: &[usize],
    x_guess: &[R],
    cfg: &SolverConfig<R>,
    method: SeriesMethod,
    polish: bool,
    tol: &ToleranceConfig<R>,
) -> Result<Vec<EquilibriumReport<R>>, SolveError> {
    assert!(!orders.is_empty(), "orders must be nonempty");
    let n_gen = schedule.n_segments();
    let fields: Vec<_> = schedule.controls.iter().map(|u| system.frozen(u)).collect();
    let fractions = schedule.interval_fractions();
    let mut reports = Vec::with_capacity(orders.len() + 1);
    let mut guess = x_guess.to_vec();
    for &order in orders {
        let series = method.build(n_gen, order)?;
        let bound = bind_handle(&series, &fields, &fractions, schedule.tau)?;
        let mut report = find_equilibrium(bound.as_ref(), &guess, cfg);
        report.method = format!("equilibrium:order={order}");
        if report.converged {
            guess = report.x_star.clone();
        }
        reports.push(report);
    }
    if polish {
        let mut report = solve_shooting(system, schedule, &guess, cfg, tol);
        report.method = "shooting".into();
        reports.push(report);
    }
    Ok(reports)
}
