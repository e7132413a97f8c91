//! Embedded Dormand-Prince 5(4) step with PI error control and 4th-order
//! dense output, following the classic Hairer-Norsett-Wanner coefficients.

use crate::lie::VectorField;
use crate::scalar::{r, Real};

use super::{FlowError, Trajectory};

/// Integrator tolerances and limits.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceConfig<R> {
    pub rtol: R,
    pub atol: R,
    /// hard cap on the step size
    pub max_step: Option<R>,
    /// initial step; estimated when absent
    pub init_step: Option<R>,
    pub max_steps: usize,
    /// extra uniformly spaced samples over the span (0 = accepted steps only)
    pub uniform_samples: usize,
}

impl<R: Real> Default for ToleranceConfig<R> {
    fn default() -> Self {
        ToleranceConfig {
            rtol: r(1e-10),
            atol: r(1e-12),
            max_step: None,
            init_step: None,
            max_steps: 10_000_000,
            uniform_samples: 0,
        }
    }
}

impl<R: Real> ToleranceConfig<R> {
    pub fn with_rtol_atol(rtol: R, atol: R) -> Self {
        ToleranceConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Eval<'a, R: Real> {
    field: &'a dyn VectorField<R>,
}

impl<R: Real> Eval<'_, R> {
    fn f(&self, t: R, y: &[R]) -> Result<Vec<R>, FlowError> {
        let v = self.field.eval(y).map_err(|e| FlowError::FieldEval {
            t: t.to_f64().unwrap_or(f64::NAN),
            last_state: y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            source: e,
        })?;
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(FlowError::NonFiniteField {
                t: t.to_f64().unwrap_or(f64::NAN),
                last_state: y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            })
        }
    }
}

pub fn solve<R: Real>(
    field: &dyn VectorField<R>,
    x0: &[R],
    t0: R,
    t1: R,
    cfg: &ToleranceConfig<R>,
) -> Result<Trajectory<R>, FlowError> {
    if !(t1 > t0) {
        return Err(FlowError::BadSpan {
            t0: t0.to_f64().unwrap_or(f64::NAN),
            t1: t1.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = x0.len();
    let span = t1 - t0;
    let ev = Eval { field };

    let a: Vec<Vec<R>> = A
        .iter()
        .map(|row| row.iter().map(|&v| r(v)).collect())
        .collect();
    let c: Vec<R> = C.iter().map(|&v| r(v)).collect();
    let e_coef: Vec<R> = E.iter().map(|&v| r(v)).collect();
    let d_coef: Vec<R> = D.iter().map(|&v| r(v)).collect();

    let safe = r::<R>(0.9);
    let beta = r::<R>(0.04);
    let expo1 = r::<R>(0.2) - beta * r(0.75);
    let facc1 = r::<R>(1.0 / 0.2); // max step growth 5x
    let facc2 = r::<R>(1.0 / 10.0); // max step shrink 10x
    let mut facold = r::<R>(1e-4);

    let h_max = cfg.max_step.map_or(span, |m| m.min(span));

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k1 = ev.f(t, &y)?;

    let mut h = match cfg.init_step {
        Some(h0) => h0.min(h_max),
        None => initial_step(&ev, t, &y, &k1, cfg, h_max)?,
    };

    // pending uniform output times, ascending
    let sample_times: Vec<R> = if cfg.uniform_samples >= 2 {
        let m = cfg.uniform_samples;
        (1..m)
            .map(|k| t0 + span * r(k as f64) / r(m as f64 - 1.0))
            .collect()
    } else {
        Vec::new()
    };
    let mut next_sample = 0usize;

    let mut samples: Vec<(R, Vec<R>)> = vec![(t, y.clone())];
    let mut rejected = false;

    for _step in 0..cfg.max_steps {
        if t >= t1 {
            break;
        }
        h = h.min(h_max);
        // land exactly on t1 when the remaining span fits in this step,
        // stretching slightly so rounding residues cannot strand us short
        let clipped = h * r(1.01) >= t1 - t;
        if clipped {
            h = t1 - t;
        }
        if h <= (t1 - t0) * R::epsilon() * r(4.0) || !(h > R::zero()) {
            return Err(FlowError::StepSizeUnderflow {
                t: t.to_f64().unwrap_or(f64::NAN),
                last_state: y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }

        // k[0] = f(t, y); rows of A give stages 2..7; the last row equals the
        // 5th-order weights, so stage 7's input is y_new and k[6] is FSAL
        let mut k = vec![k1.clone()];
        let mut y_new = y.clone();
        for s in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let w = a[s][j] * h;
                for i in 0..n {
                    ys[i] += w * kj[i];
                }
            }
            if s == 5 {
                y_new = ys.clone();
            }
            k.push(ev.f(t + c[s] * h, &ys)?);
        }
        let mut err = R::zero();
        for i in 0..n {
            let sk = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            let mut sum = R::zero();
            for (j, kj) in k.iter().enumerate() {
                sum += kj[i] * e_coef[j];
            }
            let ei = h * sum / sk;
            err += ei * ei;
        }
        err = (err / r(n as f64)).sqrt();

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).max(facc2).min(facc1);
        let h_new = h / fac;

        if err <= R::one() {
            facold = err.max(r(1e-4));
            let k_new = k[6].clone();
            // dense output over (t, t+h]
            if next_sample < sample_times.len() {
                let ydiff: Vec<R> = (0..n).map(|i| y_new[i] - y[i]).collect();
                let bspl: Vec<R> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
                let cont3: Vec<R> = (0..n).map(|i| ydiff[i] - h * k_new[i] - bspl[i]).collect();
                let cont4: Vec<R> = (0..n)
                    .map(|i| {
                        let mut sum = R::zero();
                        for (j, kj) in k.iter().enumerate() {
                            sum += kj[i] * d_coef[j];
                        }
                        sum * h
                    })
                    .collect();
                while next_sample < sample_times.len() {
                    let ts = sample_times[next_sample];
                    if ts > t + h {
                        break;
                    }
                    next_sample += 1;
                    if (ts - (t + h)).abs() <= (t1 - t0) * R::epsilon() * r(8.0) {
                        continue; // step endpoint covers it
                    }
                    let s = (ts - t) / h;
                    let s1 = R::one() - s;
                    let yi: Vec<R> = (0..n)
                        .map(|i| {
                            y[i] + (ydiff[i] + (bspl[i] + (cont3[i] + cont4[i] * s1) * s) * s1) * s
                        })
                        .collect();
                    samples.push((ts, yi));
                }
            }
            t = if clipped { t1 } else { t + h };
            y = y_new;
            k1 = k_new;
            samples.push((t, y.clone()));
            h = if rejected { h_new.min(h) } else { h_new };
            rejected = false;
        } else {
            if !err.is_finite() {
                return Err(FlowError::NonFiniteField {
                    t: t.to_f64().unwrap_or(f64::NAN),
                    last_state: y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                });
            }
            h /= (fac11 / safe).min(facc1);
            rejected = true;
        }
    }
    if t < t1 {
        return Err(FlowError::MaxStepsExceeded {
            t: t.to_f64().unwrap_or(f64::NAN),
            last_state: y.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        });
    }

    Ok(Trajectory {
        samples,
        switch_indices: Vec::new(),
        rtol: cfg.rtol,
        atol: cfg.atol,
    })
}

/// Order-aware starting step: standard two-probe estimate.
fn initial_step<R: Real>(
    ev: &Eval<R>,
    t0: R,
    y0: &[R],
    f0: &[R],
    cfg: &ToleranceConfig<R>,
    h_max: R,
) -> Result<R, FlowError> {
    let n = y0.len();
    let sc: Vec<R> = (0..n).map(|i| cfg.atol + cfg.rtol * y0[i].abs()).collect();
    let d0 = rms(y0, &sc);
    let d1 = rms(f0, &sc);
    let mut h0 = if d0 < r(1e-5) || d1 < r(1e-5) {
        r(1e-6)
    } else {
        r::<R>(0.01) * (d0 / d1)
    };
    h0 = h0.min(h_max);
    let y1: Vec<R> = (0..n).map(|i| y0[i] + h0 * f0[i]).collect();
    let f1 = ev.f(t0 + h0, &y1)?;
    let diff: Vec<R> = (0..n).map(|i| f1[i] - f0[i]).collect();
    let d2 = rms(&diff, &sc) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= r(1e-15) {
        (h0 * r(1e-3)).max(r(1e-6))
    } else {
        (r::<R>(0.01) / dm).powf(r(0.2))
    };
    Ok((h0 * r(100.0)).min(h1).min(h_max))
}

fn rms<R: Real>(v: &[R], sc: &[R]) -> R {
    let n = v.len();
    let sum: R = v.iter().zip(sc).map(|(&a, &s)| (a / s) * (a / s)).sum();
    (sum / r(n as f64)).sqrt()
}
