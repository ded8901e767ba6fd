//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with error-based
//! step rejection, the 4th-order continuous extension for dense output,
//! and blow-up detection by threshold crossing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// A state norm above this value is reported as blow-up.
    pub blowup_threshold: f64,
    /// Sample the solution on a uniform output grid instead of at every
    /// accepted step.
    pub dense_output: bool,
    pub output_points: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-20,
            max_step: 1.0,
            blowup_threshold: 1e12,
            dense_output: true,
            output_points: 501,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::Validation(
                "integrator tolerances and max_step must be > 0".into(),
            ));
        }
        if !(self.blowup_threshold > 1.0) {
            return Err(Error::Validation("blowup_threshold must be > 1".into()));
        }
        if self.dense_output && self.output_points < 2 {
            return Err(Error::Validation("dense output needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_output_points(mut self, n: usize) -> Self {
        self.output_points = n;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Threshold crossing of the state norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowUpEvent {
    /// End of the step on which the threshold was crossed.
    pub time: f64,
    pub threshold: f64,
    /// The last two accepted step times; the singularity lies near or
    /// just beyond this bracket.
    pub bracket: (f64, f64),
    /// The step controller hit its floor before the crossing.
    pub step_collapse: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub blowup: Option<BlowUpEvent>,
    pub stats: IntegratorStats,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
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
// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Continuous extension (Hairer, Nørsett & Wanner, dopri5).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const MAX_STEPS: usize = 20_000_000;
const MAX_FORCED_STEPS: usize = 100_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Dense {
    t: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + th * (self.r[1][i]
                    + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

/// Integrates `y' = rhs(t, y)` from `t = 0` to `t_end`.
pub(crate) fn integrate<F>(mut rhs: F, y0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::Validation(format!("integration end time must be > 0 (got {t_end})")));
    }
    let n = y0.len();
    let mut stats = IntegratorStats::default();
    let h_min = 1e-14 * t_end;
    let collapse_level = cfg.blowup_threshold.powf(0.25);

    let output_times: Vec<f64> = if cfg.dense_output {
        let m = cfg.output_points;
        (0..m).map(|i| t_end * i as f64 / (m - 1) as f64).collect()
    } else {
        Vec::new()
    };
    let mut next_out = 0usize;

    let mut times = vec![0.0];
    let mut states = vec![y0.to_vec()];
    if cfg.dense_output {
        next_out = 1;
    }

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    rhs(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    let mut h = {
        let (d0, d1) = (norm(&y), norm(&k[0]));
        let guess = if d0 > 1e-5 && d1 > 1e-5 { 0.01 * d0 / d1 } else { 1e-6 * t_end.max(1.0) };
        guess.min(cfg.max_step).min(t_end).max(h_min)
    };
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err_vec = vec![0.0; n];
    let mut rejected_last = false;
    let mut forced_steps = 0usize;

    while t < t_end {
        if stats.steps + stats.rejected > MAX_STEPS {
            return Err(Error::StepUnderflow { t, step: h });
        }
        let mut forced = false;
        if h < h_min {
            let growing = dot(&y, &k[0]) > 0.0;
            if growing && norm(&y) > collapse_level && forced_steps < MAX_FORCED_STEPS {
                forced = true;
                forced_steps += 1;
                h = h_min;
            } else {
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                y_stage[i] = acc;
            }
            rhs(t + C[s] * h, &y_stage, &mut k[s]);
            stats.rhs_evals += 1;
        }
        // Stage 7 is evaluated at the 5th-order solution (FSAL), so y_stage holds y_new.
        y_new.copy_from_slice(&y_stage);
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            err_vec[i] = h * e;
        }
        let scale = cfg.abs_tol + cfg.rel_tol * norm(&y).max(norm(&y_new));
        let mut err = norm(&err_vec) / scale;
        if !err.is_finite() {
            err = f64::INFINITY;
        }
        let finite = y_new.iter().all(|v| v.is_finite());

        if err <= 1.0 || forced {
            let t_new = if last { t_end } else { t + h };
            stats.steps += 1;
            let crossed = !finite || norm(&y_new) > cfg.blowup_threshold;

            if cfg.dense_output && finite {
                let mut dense = Dense {
                    t,
                    h,
                    r: [y.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
                };
                for i in 0..n {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    dense.r[1][i] = ydiff;
                    dense.r[2][i] = bspl;
                    dense.r[3][i] = ydiff - h * k[6][i] - bspl;
                    let mut acc = 0.0;
                    for s in 0..7 {
                        acc += D[s] * k[s][i];
                    }
                    dense.r[4][i] = h * acc;
                }
                let mut buf = vec![0.0; n];
                while next_out < output_times.len() && output_times[next_out] <= t_new {
                    let to = output_times[next_out];
                    if crossed {
                        break;
                    }
                    if to == t_new {
                        buf.copy_from_slice(&y_new);
                    } else {
                        dense.eval(to, &mut buf);
                    }
                    times.push(to);
                    states.push(buf.clone());
                    next_out += 1;
                }
            }

            if crossed {
                let recorded: Vec<f64> = if finite {
                    y_new.clone()
                } else {
                    vec![f64::INFINITY; n]
                };
                times.push(t_new);
                states.push(recorded);
                return Ok(Solution {
                    times,
                    states,
                    blowup: Some(BlowUpEvent {
                        time: t_new,
                        threshold: cfg.blowup_threshold,
                        bracket: (t, t_new),
                        step_collapse: forced,
                    }),
                    stats,
                });
            }

            if !cfg.dense_output {
                times.push(t_new);
                states.push(y_new.clone());
            }
            t = t_new;
            y.copy_from_slice(&y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);

            let mut factor = if err == 0.0 {
                MAX_GROWTH
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SHRINK, MAX_GROWTH)
            };
            if rejected_last {
                factor = factor.min(1.0);
            }
            rejected_last = false;
            if !forced {
                h = (h * factor).min(cfg.max_step);
            }
        } else {
            stats.rejected += 1;
            rejected_last = true;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SHRINK, 1.0)
            } else {
                MIN_SHRINK
            };
            h *= factor;
        }
    }

    Ok(Solution {
        times,
        states,
        blowup: None,
        stats,
    })
}
