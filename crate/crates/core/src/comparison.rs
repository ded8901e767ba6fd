//! Scalar oracle: the equality form `g' = gamma g + alpha g^p + beta` of the
//! norm inequality, which majorizes every solution of the inequality with
//! the same data, plus the closed-form Bernoulli solution for `beta = 0`.

use std::io::Write;

use crate::certificates::estimate_blowup_time;
use crate::coefficients::{Problem, ProblemSpec};
use crate::error::{Error, Result};
use crate::ode::{integrate, BlowUpEvent, IntegratorConfig, IntegratorStats};

#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub blowup: Option<BlowUpEvent>,
    pub stats: IntegratorStats,
}

impl ScalarTrajectory {
    /// Value at the last sample.
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Writes `t,g` rows, then `blowup,<time>` if a blow-up was detected.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "g"])?;
        for (t, g) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), g.to_string()])?;
        }
        if let Some(b) = &self.blowup {
            w.write_record(["blowup".to_string(), b.time.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates the comparison equation from `g0` to the spec horizon.
pub fn integrate_comparison(spec: &ProblemSpec, cfg: &IntegratorConfig) -> Result<ScalarTrajectory> {
    if !(spec.g0 >= 0.0) {
        return Err(Error::Validation(format!("g0 must be >= 0 (got {})", spec.g0)));
    }
    let pr = &spec.profile;
    let p = pr.p;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let g = y[0];
        dy[0] = pr.gamma(t) * g + pr.alpha(t) * g.max(0.0).powf(p) + pr.beta(t);
    };
    let sol = integrate(rhs, &[spec.g0], spec.horizon, cfg)?;
    Ok(ScalarTrajectory {
        times: sol.times,
        values: sol.states.into_iter().map(|s| s[0]).collect(),
        blowup: sol.blowup,
        stats: sol.stats,
    })
}

/// Value of the closed-form Bernoulli solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernoulliValue {
    Finite(f64),
    /// The inner denominator is no longer positive: the solution has blown up.
    BlowUp,
}

/// `g(t) = (g0^(1-p) - (p-1) int_0^t alpha / nu^(p-1))^(-1/(p-1)) / nu(t)`,
/// evaluated in log space.
pub fn exact_bernoulli(problem: &Problem, t: f64) -> Result<BernoulliValue> {
    if !problem.profile().beta_is_zero() {
        return Err(Error::ProfileHasBeta);
    }
    let g0 = problem.g0();
    if !(g0 > 0.0) {
        return Err(Error::ZeroInitialNorm);
    }
    if t == 0.0 {
        return Ok(BernoulliValue::Finite(g0));
    }
    let p = problem.p();
    // Factor out g0^(1-p) so the denominator is relative.
    let x = (p - 1.0) * (problem.log_int_alpha_over_nu(t)? + (p - 1.0) * g0.ln()).exp();
    let d = 1.0 - x;
    if !(d > 0.0) {
        return Ok(BernoulliValue::BlowUp);
    }
    let log_g = problem.cumulative_gamma(t)? + g0.ln() - d.ln() / (p - 1.0);
    Ok(BernoulliValue::Finite(log_g.exp()))
}

/// Outcome of comparing the integrator with the closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleAgreement {
    /// No blow-up on the horizon; max relative error over the sample grid.
    Trajectory { max_rel_error: f64, worst_time: f64 },
    /// Both sides report blow-up.
    BlowUp { integrator: f64, closed_form: f64 },
}

/// Number of samples compared by [`verify_oracle_agreement`].
pub const AGREEMENT_POINTS: usize = 100;

/// Runs the integrator on a `beta = 0` problem and compares it with the
/// closed form at 100 evenly spaced times. Blow-up times must agree to
/// within `1e-2 * max(1, t0)`.
pub fn verify_oracle_agreement(problem: &Problem, cfg: &IntegratorConfig) -> Result<OracleAgreement> {
    if !problem.profile().beta_is_zero() {
        return Err(Error::ProfileHasBeta);
    }
    let est = estimate_blowup_time(problem)?;
    let mut cfg = *cfg;
    cfg.dense_output = true;
    cfg.output_points = AGREEMENT_POINTS;
    let traj = integrate_comparison(problem.spec(), &cfg)?;
    match (traj.blowup, est.t0) {
        (None, None) => {
            let mut worst = (0.0, 0.0);
            for (&t, &g) in traj.times.iter().zip(&traj.values) {
                let exact = match exact_bernoulli(problem, t)? {
                    BernoulliValue::Finite(v) => v,
                    BernoulliValue::BlowUp => {
                        return Err(Error::BlowUpDisagreement {
                            integrator: None,
                            closed_form: Some(t),
                        })
                    }
                };
                let err = (g - exact).abs() / (exact + 1e-30);
                if err > worst.0 {
                    worst = (err, t);
                }
            }
            Ok(OracleAgreement::Trajectory {
                max_rel_error: worst.0,
                worst_time: worst.1,
            })
        }
        (Some(b), Some(t0)) if (b.time - t0).abs() <= 1e-2 * t0.max(1.0) => Ok(OracleAgreement::BlowUp {
            integrator: b.time,
            closed_form: t0,
        }),
        (b, t0) => Err(Error::BlowUpDisagreement {
            integrator: b.map(|e| e.time),
            closed_form: t0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientProfile;
    use proptest::prelude::*;

    fn spec(g: &str, a: &str, b: &str, p: f64, g0: f64, h: f64) -> ProblemSpec {
        ProblemSpec::simple(CoefficientProfile::parse(g, a, b, p).unwrap(), g0, h).unwrap()
    }

    #[test]
    fn linear_decay() {
        let s = spec("-1", "0", "0", 2.0, 1.0, 1.0);
        let tr = integrate_comparison(&s, &IntegratorConfig::default()).unwrap();
        assert!((tr.last() - (-1f64).exp()).abs() < 1e-9);
        assert!(tr.blowup.is_none());
    }

    #[test]
    fn riccati_blowup() {
        let s = spec("0", "1", "0", 2.0, 1.0, 3.0);
        let tr = integrate_comparison(&s, &IntegratorConfig::default()).unwrap();
        let b = tr.blowup.unwrap();
        assert!((b.time - 1.0).abs() < 1e-6);
        assert!(tr.last() > b.threshold);
    }

    #[test]
    fn bernoulli_examples() {
        let pr = spec("0", "1", "0", 2.0, 1.0, 3.0).prepare().unwrap();
        assert_eq!(exact_bernoulli(&pr, 0.0).unwrap(), BernoulliValue::Finite(1.0));
        match exact_bernoulli(&pr, 0.5).unwrap() {
            BernoulliValue::Finite(v) => assert!((v - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(exact_bernoulli(&pr, 1.5).unwrap(), BernoulliValue::BlowUp);

        let pr = spec("-1", "exp_decay(2)", "0", 2.0, 1.0, 3.0).prepare().unwrap();
        let want = (-1f64).exp() / (1.0 - (1.0 - (-3f64).exp()) / 3.0);
        match exact_bernoulli(&pr, 1.0).unwrap() {
            BernoulliValue::Finite(v) => assert!((v / want - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        let pr = spec("-1", "0", "1", 2.0, 1.0, 3.0).prepare().unwrap();
        assert_eq!(exact_bernoulli(&pr, 1.0), Err(Error::ProfileHasBeta));
        let pr = spec("-1", "1", "0", 2.0, 0.0, 3.0).prepare().unwrap();
        assert_eq!(exact_bernoulli(&pr, 1.0), Err(Error::ZeroInitialNorm));
    }

    #[test]
    fn oracle_agreement_examples() {
        let cfg = IntegratorConfig::default();
        let pr = spec("-1", "exp_decay(2)", "0", 2.0, 1.0, 30.0).prepare().unwrap();
        match verify_oracle_agreement(&pr, &cfg).unwrap() {
            OracleAgreement::Trajectory { max_rel_error, .. } => assert!(max_rel_error < 1e-6),
            other => panic!("{other:?}"),
        }
        let pr = spec("sin", "0", "0", 3.0, 0.7, 30.0).prepare().unwrap();
        match verify_oracle_agreement(&pr, &cfg).unwrap() {
            OracleAgreement::Trajectory { max_rel_error, .. } => assert!(max_rel_error < 1e-8),
            other => panic!("{other:?}"),
        }
        let pr = spec("0", "1", "0", 2.0, 1.0, 3.0).prepare().unwrap();
        match verify_oracle_agreement(&pr, &cfg).unwrap() {
            OracleAgreement::BlowUp { integrator, closed_form } => {
                assert!((integrator - 1.0).abs() < 1e-3);
                assert!((closed_form - 1.0).abs() < 1e-3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stays_below_linear_regime_bound() {
        let s = spec("sin", "power_decay(2)", "1e-4", 2.0, 1e-3, 50.0);
        let pr = s.clone().prepare().unwrap();
        let tr = integrate_comparison(&s, &IntegratorConfig::default()).unwrap();
        let env = crate::certificates::linear_envelope(&pr, 0.1).unwrap();
        for (&t, &g) in tr.times.iter().zip(&tr.values) {
            assert!(g < 0.1);
            assert!(g <= env.eval(t).unwrap() * (1.0 + 1e-9), "t={t}");
        }
    }

    #[test]
    fn detected_blowup_does_not_precede_estimate() {
        for g0 in [1.0, 0.5, 0.1, 2.0] {
            let s = spec("sin", "power_decay(1)", "0", 2.0, g0, 200.0);
            let pr = s.clone().prepare().unwrap();
            let tr = integrate_comparison(&s, &IntegratorConfig::default()).unwrap();
            let est = estimate_blowup_time(&pr).unwrap();
            if let (Some(b), Some(t0)) = (tr.blowup, est.t0) {
                assert!(b.time >= t0 - 10.0 * crate::certificates::ROOT_TOL, "g0={g0}: {} < {t0}", b.time);
            } else {
                assert_eq!(tr.blowup.is_some(), est.t0.is_some(), "g0={g0}");
            }
        }
    }

    #[test]
    fn csv_has_trailing_blowup_row() {
        let s = spec("0", "1", "0", 2.0, 1.0, 3.0);
        let tr = integrate_comparison(&s, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,g\n0,1\n"));
        assert!(text.lines().last().unwrap().starts_with("blowup,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn comparison_principle(b1 in 0.0..0.5f64, extra in 0.0..0.5f64, k in 0.1..2.0f64, g0 in 0.0..0.5f64) {
            let gamma = "-1 + 0.5 * sin";
            let alpha = format!("exp_decay({k})");
            let lo = spec(gamma, &alpha, &format!("{b1} * power_decay(1)"), 2.0, g0, 10.0);
            let hi = spec(gamma, &alpha, &format!("{} * power_decay(1)", b1 + extra), 2.0, g0, 10.0);
            let cfg = IntegratorConfig::default();
            let a = integrate_comparison(&lo, &cfg).unwrap();
            let b = integrate_comparison(&hi, &cfg).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(*x <= *y + 1e-9);
            }
        }

        #[test]
        fn nonnegative_at_every_step(g0 in 0.0..2.0f64, b in 0.0..0.1f64, p in 1.2..3.0f64) {
            let s = spec("-2 + cos", "exp_decay(1)", &format!("{b} * exp_decay(3)"), p, g0, 15.0);
            let cfg = IntegratorConfig {
                dense_output: false,
                ..IntegratorConfig::default()
            };
            let tr = integrate_comparison(&s, &cfg).unwrap();
            prop_assert!(tr.values.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn halving_tolerance_is_stable(g0 in 0.01..1.0f64, k in 0.5..2.0f64) {
            let s = spec("sin_damped(0.5) - 0.1", &format!("power_decay({})", 1.0 + k), "0", 2.0, g0, 20.0);
            let tol = 1e-8;
            let a = integrate_comparison(&s, &IntegratorConfig::default().with_rel_tol(tol)).unwrap();
            let b = integrate_comparison(&s, &IntegratorConfig::default().with_rel_tol(tol / 2.0)).unwrap();
            prop_assume!(a.blowup.is_none() && b.blowup.is_none());
            prop_assert!((a.last() - b.last()).abs() <= 10.0 * tol * a.last().abs().max(1e-300));
        }
    }
}
