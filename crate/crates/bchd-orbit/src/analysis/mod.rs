//! Certification machinery: divergence scans over planar boxes, constant
//! Lyapunov metrics, and sampled contraction checks over state-control
//! grids. All certificates are sampled, never proved.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{simulate_periods, FlowError, SwitchingSchedule, ToleranceConfig};
use crate::lie::{jacobian, Jet, LieError, VectorField};
use crate::linalg::{vec_norm2, vec_sub, DMat};
use crate::models::ControlAffineSystem;
use crate::scalar::{r, Real};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("region: {0}")]
    Region(String),
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("matrix is not Hurwitz (eigenvalue with nonnegative real part)")]
    NotHurwitz,
    #[error("linear system too ill-conditioned to solve reliably")]
    IllConditioned,
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Axis-aligned sampling box with per-axis grid counts.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
    pub grid: Vec<usize>,
}

impl<R: Real> BoxRegion<R> {
    pub fn new(lower: Vec<R>, upper: Vec<R>, grid: Vec<usize>) -> Result<Self, AnalysisError> {
        if lower.len() != upper.len() || lower.len() != grid.len() {
            return Err(AnalysisError::Region(
                "lower/upper/grid lengths differ".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(&lo, &hi)| !(lo < hi)) {
            return Err(AnalysisError::Region(
                "need lower < upper componentwise".into(),
            ));
        }
        if grid.iter().any(|&g| g < 2) {
            return Err(AnalysisError::Region(
                "need at least 2 samples per axis".into(),
            ));
        }
        Ok(BoxRegion { lower, upper, grid })
    }

    /// Box centered at `center` with half-widths `deltas`.
    pub fn centered(center: &[R], deltas: &[R], grid: Vec<usize>) -> Result<Self, AnalysisError> {
        let lower = center.iter().zip(deltas).map(|(&c, &d)| c - d).collect();
        let upper = center.iter().zip(deltas).map(|(&c, &d)| c + d).collect();
        Self::new(lower, upper, grid)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.iter().product()
    }

    /// Grid node by flat index, axis 0 slowest. Endpoints included.
    pub fn point(&self, flat: usize) -> Vec<R> {
        let mut idx = flat;
        let mut coords = vec![R::zero(); self.dim()];
        for axis in (0..self.dim()).rev() {
            let g = self.grid[axis];
            let i = idx % g;
            idx /= g;
            let frac = r::<R>(i as f64) / r(g as f64 - 1.0);
            coords[axis] = self.lower[axis] + (self.upper[axis] - self.lower[axis]) * frac;
        }
        coords
    }
}

/// Divergence of a field at a point: trace of the jet Jacobian.
pub fn divergence<R: Real>(field: &dyn VectorField<R>, x: &[R]) -> Result<R, LieError> {
    let n = field.dim();
    if x.len() != n {
        return Err(LieError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let seeds = Jet::seed_point(x, 1);
    let out = field.eval_jets(&seeds)?;
    if !out.iter().all(Jet::is_finite) {
        return Err(LieError::NonFinite {
            context: "divergence",
        });
    }
    Ok((0..n).map(|i| out[i].linear(i)).sum())
}

/// Result of a divergence sign scan.
#[derive(Clone, Debug)]
pub struct DulacReport<R> {
    /// sign shared by the nonzero samples (+1 by convention when all vanish)
    pub rho_sign: i8,
    pub min_abs_divergence: R,
    /// no two samples with strictly opposite signs
    pub sign_uniform: bool,
    pub region: BoxRegion<R>,
    pub positive_samples: usize,
    pub negative_samples: usize,
    pub zero_samples: usize,
    pub error_samples: usize,
    /// true when the scan cannot support a one-signed-divergence claim:
    /// mixed signs, identically zero samples, or too many failed samples
    pub inconclusive: bool,
    /// divergence arguments only rule out closed orbits in the plane
    pub planar: bool,
}

impl<R: Real> DulacReport<R> {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rho_sign={}", self.rho_sign);
        let _ = writeln!(s, "sign_uniform={}", self.sign_uniform);
        let _ = writeln!(s, "inconclusive={}", self.inconclusive);
        let _ = writeln!(s, "min_abs_divergence={:e}", self.min_abs_divergence);
        let _ = writeln!(s, "positive_samples={}", self.positive_samples);
        let _ = writeln!(s, "negative_samples={}", self.negative_samples);
        let _ = writeln!(s, "zero_samples={}", self.zero_samples);
        let _ = writeln!(s, "error_samples={}", self.error_samples);
        let _ = writeln!(s, "samples={}", self.region.n_points());
        let _ = writeln!(s, "planar={}", self.planar);
        s
    }
}

/// Evaluate the divergence over the full grid and report sign uniformity.
/// Sample-level domain errors are tolerated up to 0.1% of the grid; beyond
/// that the report is inconclusive.
pub fn dulac_scan<R: Real>(
    field: &dyn VectorField<R>,
    region: &BoxRegion<R>,
) -> Result<DulacReport<R>, AnalysisError> {
    if region.dim() != field.dim() {
        return Err(AnalysisError::Region(format!(
            "region dimension {} does not match field dimension {}",
            region.dim(),
            field.dim()
        )));
    }
    let total = region.n_points();
    let values: Vec<Option<R>> = (0..total)
        .into_par_iter()
        .map(|flat| divergence(field, &region.point(flat)).ok())
        .collect();

    let mut positive = 0usize;
    let mut negative = 0usize;
    let mut zero = 0usize;
    let mut errors = 0usize;
    let mut min_abs = R::infinity();
    for v in &values {
        match v {
            None => errors += 1,
            Some(d) => {
                min_abs = min_abs.min(d.abs());
                if *d > R::zero() {
                    positive += 1;
                } else if *d < R::zero() {
                    negative += 1;
                } else {
                    zero += 1;
                }
            }
        }
    }
    if errors == total {
        return Err(AnalysisError::Region(
            "every grid sample failed to evaluate".into(),
        ));
    }
    let sign_uniform = !(positive > 0 && negative > 0);
    let rho_sign = if negative > 0 && positive == 0 { -1 } else { 1 };
    let error_budget = (total as f64 * 0.001).ceil() as usize;
    let inconclusive = !sign_uniform || zero > 0 || errors > error_budget || min_abs == R::zero();
    Ok(DulacReport {
        rho_sign,
        min_abs_divergence: min_abs,
        sign_uniform,
        region: region.clone(),
        positive_samples: positive,
        negative_samples: negative,
        zero_samples: zero,
        error_samples: errors,
        inconclusive,
        planar: field.dim() == 2,
    })
}

/// Solve `M A + A^T M = -Q` for symmetric positive definite `M` by
/// Kronecker vectorization. `A` must be Hurwitz, `Q` symmetric positive
/// definite.
pub fn solve_lyapunov<R: Real>(a: &DMat<R>, q: &DMat<R>) -> Result<DMat<R>, AnalysisError> {
    assert!(a.is_square() && q.is_square());
    assert_eq!(a.rows(), q.rows());
    let n = a.rows();
    if a.eigenvalues().iter().any(|ev| ev.re >= R::zero()) {
        return Err(AnalysisError::NotHurwitz);
    }
    if !q.is_symmetric(r::<R>(1e-12) * q.max_abs_entry().max(R::one()))
        || q.symmetric_eigenvalues()
            .first()
            .is_some_and(|&ev| ev <= R::zero())
    {
        return Err(AnalysisError::NotSpd);
    }
    // row-major vec: vec(M A) = (I (x) A^T) vec(M), vec(A^T M) = (A^T (x) I) vec(M)
    let at = a.transpose();
    let eye = DMat::identity(n);
    let k = eye.kron(&at).add(&at.kron(&eye));
    let rhs: Vec<R> = (0..n * n).map(|f| -q[(f / n, f % n)]).collect();
    let lu = k.lu().ok_or(AnalysisError::IllConditioned)?;
    if k.cond_1().is_some_and(|c| c > r(1e14)) {
        return Err(AnalysisError::IllConditioned);
    }
    let v = lu.solve(&rhs);
    let m = DMat::from_fn(n, n, |i, j| v[i * n + j]).symmetrized();
    // residual certificate
    let resid = m.matmul(a).add(&at.matmul(&m)).add(q);
    if resid.frobenius_norm() > r::<R>(1e-10) * q.frobenius_norm() {
        return Err(AnalysisError::IllConditioned);
    }
    if m.symmetric_eigenvalues()
        .first()
        .is_some_and(|&ev| ev <= R::zero())
    {
        return Err(AnalysisError::NotSpd);
    }
    Ok(m)
}

/// Sampled contraction certificate: worst eigenvalue of
/// `M J(x,u) + J(x,u)^T M + beta I` over the grid and the control-box
/// vertices (vertices suffice because the Jacobian is affine in `u`; for
/// constant input fields a single check per point suffices and the
/// certificate records u-independence).
#[derive(Clone, Debug)]
pub struct ContractionCertificate<R> {
    pub metric_m: DMat<R>,
    pub beta: R,
    pub region: BoxRegion<R>,
    pub worst_eigenvalue: R,
    pub samples_checked: usize,
    pub vertex_controls_checked: usize,
    pub u_independent: bool,
}

impl<R: Real> ContractionCertificate<R> {
    pub fn is_valid(&self) -> bool {
        self.worst_eigenvalue <= R::zero()
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "valid={}", self.is_valid());
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "worst_eigenvalue={:e}", self.worst_eigenvalue);
        let _ = writeln!(s, "samples_checked={}", self.samples_checked);
        let _ = writeln!(
            s,
            "vertex_controls_checked={}",
            self.vertex_controls_checked
        );
        let _ = writeln!(s, "u_independent={}", self.u_independent);
        let n = self.metric_m.rows();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{}", self.metric_m[(i, j)]))
                .collect();
            let _ = writeln!(s, "metric_row{}={}", i + 1, row.join(","));
        }
        s
    }
}

pub fn contraction_check<R: Real>(
    system: &ControlAffineSystem<R>,
    metric_m: &DMat<R>,
    beta: R,
    region: &BoxRegion<R>,
) -> Result<ContractionCertificate<R>, AnalysisError> {
    assert!(beta > R::zero(), "beta must be positive");
    if !metric_m.is_symmetric(r::<R>(1e-10) * metric_m.max_abs_entry().max(R::one()))
        || metric_m
            .symmetric_eigenvalues()
            .first()
            .is_some_and(|&ev| ev <= R::zero())
    {
        return Err(AnalysisError::NotSpd);
    }
    if region.dim() != system.n {
        return Err(AnalysisError::Region(format!(
            "region dimension {} does not match state dimension {}",
            region.dim(),
            system.n
        )));
    }
    let u_independent = system.constant_controls;
    let fields: Vec<_> = if u_independent {
        vec![std::sync::Arc::clone(&system.f0)]
    } else {
        system
            .control_vertices()
            .iter()
            .map(|u| system.frozen(u))
            .collect()
    };
    let total = region.n_points();
    let worst_per_sample: Vec<Result<R, AnalysisError>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let x = region.point(flat);
            let mut worst = -R::infinity();
            for f in &fields {
                let j = jacobian(f.as_ref(), &x)?;
                let mj = metric_m.matmul(&j);
                let mut s = mj.add(&mj.transpose());
                for i in 0..system.n {
                    s[(i, i)] += beta;
                }
                worst = worst.max(s.max_symmetric_eigenvalue());
            }
            Ok(worst)
        })
        .collect();
    let mut worst = -R::infinity();
    for w in worst_per_sample {
        worst = worst.max(w?);
    }
    Ok(ContractionCertificate {
        metric_m: metric_m.clone(),
        beta,
        region: region.clone(),
        worst_eigenvalue: worst,
        samples_checked: total,
        vertex_controls_checked: fields.len(),
        u_independent,
    })
}

/// Largest margin that still certifies: bisect on beta over
/// `(0, 2 |worst eigenvalue of M J + J^T M at the box center|]`.
/// Returns None when even a vanishing margin fails.
pub fn search_beta<R: Real>(
    system: &ControlAffineSystem<R>,
    metric_m: &DMat<R>,
    region: &BoxRegion<R>,
) -> Result<Option<R>, AnalysisError> {
    let center: Vec<R> = region
        .lower
        .iter()
        .zip(&region.upper)
        .map(|(&lo, &hi)| (lo + hi) / r(2.0))
        .collect();
    let j = jacobian(system.f0.as_ref(), &center)?;
    let mj = metric_m.matmul(&j);
    let s0 = mj.add(&mj.transpose());
    let anchor = s0
        .symmetric_eigenvalues()
        .last()
        .copied()
        .unwrap_or(R::zero())
        .abs();
    if anchor == R::zero() {
        return Ok(None);
    }
    let mut lo = R::zero();
    let mut hi = r::<R>(2.0) * anchor;
    // certificate is monotone in beta: valid at beta implies valid below
    if !contraction_check(system, metric_m, hi, region)?.is_valid() {
        for _ in 0..60 {
            let mid = (lo + hi) / r(2.0);
            if mid <= R::zero() || mid == lo || mid == hi {
                break;
            }
            if contraction_check(system, metric_m, mid, region)?.is_valid() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == R::zero() {
            return Ok(None);
        }
        return Ok(Some(lo));
    }
    Ok(Some(hi))
}

/// M-weighted distance `sqrt((a-b)^T M (a-b))`; plain Euclidean when no
/// metric is given.
pub fn metric_distance<R: Real>(metric: Option<&DMat<R>>, a: &[R], b: &[R]) -> R {
    let d = vec_sub(a, b);
    match metric {
        None => vec_norm2(&d),
        Some(m) => {
            let md = m.matvec(&d);
            d.iter().zip(&md).map(|(&x, &y)| x * y).sum::<R>().sqrt()
        }
    }
}

/// Distance of the per-period states to a periodic-orbit anchor point, for
/// each start in `x0_list`. Entry k is the distance after k periods
/// (k = 0 is the start itself).
pub fn attractivity_probe<R: Real>(
    system: &ControlAffineSystem<R>,
    schedule: &SwitchingSchedule<R>,
    orbit_anchor: &[R],
    x0_list: &[Vec<R>],
    n_periods: usize,
    metric: Option<&DMat<R>>,
    tol: &ToleranceConfig<R>,
) -> Result<Vec<Vec<R>>, AnalysisError> {
    let mut out = Vec::with_capacity(x0_list.len());
    for x0 in x0_list {
        let run = simulate_periods(system, schedule, x0, n_periods, tol)?;
        let mut dists = Vec::with_capacity(n_periods + 1);
        dists.push(metric_distance(metric, x0, orbit_anchor));
        for p in &run.poincare {
            dists.push(metric_distance(metric, p, orbit_anchor));
        }
        out.push(dists);
    }
    Ok(out)
}
