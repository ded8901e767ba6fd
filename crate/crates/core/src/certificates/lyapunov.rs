use std::sync::Arc;

use super::envelope::{Envelope, EnvelopeKind, Provenance};
use super::{tail_caveats, Failure, Verdict, DELTA_SAFETY};
use crate::coefficients::table::log_add_exp;
use crate::coefficients::Problem;
use crate::error::{Error, Result};

/// Lyapunov stability of the zero solution: a radius `delta_max` such that
/// `g0 < delta_max` keeps the trajectory below `eps` for all time, given a
/// bounded `int_0^t gamma` and integrable `alpha`.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub eps: f64,
    /// `sup_t int_0^t gamma`
    pub m: f64,
    pub m_attained_at: f64,
    /// `int_0^T alpha`
    pub int_alpha: f64,
    /// `M + eps^(p-1) int alpha`
    pub m1: f64,
    pub delta_max: f64,
    /// Perturbations need `sup_t (int_0^t beta mu) / mu < beta_budget`.
    pub beta_budget: f64,
    pub verdict: Verdict,
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Validation(format!("eps must be a positive number (got {eps})")));
    }
    Ok(())
}

pub fn check_lyapunov(problem: &Problem, eps: f64) -> Result<LyapunovCertificate> {
    check_eps(eps)?;
    let sup = problem.sup_cumulative_gamma()?;
    let mut caveats = tail_caveats(problem, true);
    let mut failure = None;
    let mut verdict = Verdict::Holds;

    let int_alpha = match problem.improper_integral_alpha() {
        Ok(ia) => {
            if !ia.converged {
                verdict = Verdict::Inconclusive;
                caveats.push(format!(
                    "int alpha not converged on the horizon (tail {}); assert alpha_integrable to accept",
                    ia.tail
                ));
            }
            ia.value
        }
        Err(Error::DivergenceSuspected { tail, .. }) => {
            verdict = Verdict::Inconclusive;
            failure = Some(Failure::DivergenceSuspected {
                integral: "int alpha",
                tail,
            });
            f64::INFINITY
        }
        Err(e) => return Err(e),
    };
    if sup.unbounded_suspected {
        verdict = Verdict::Fails;
        failure = Some(Failure::UnboundedCumulativeGamma);
    }

    let coupling = eps.powf(problem.p() - 1.0);
    let m1 = sup.value + coupling * int_alpha;
    let budget = eps / 3.0;
    let delta_max = budget * (-m1).exp() * (1.0 - DELTA_SAFETY);
    let margin = if verdict == Verdict::Fails {
        f64::NEG_INFINITY
    } else {
        budget - delta_max * m1.exp()
    };
    Ok(LyapunovCertificate {
        eps,
        m: sup.value,
        m_attained_at: sup.attained_at,
        int_alpha,
        m1,
        delta_max,
        beta_budget: budget,
        verdict,
        margin,
        caveats,
        failure,
    })
}

/// The forcing condition for stability under persistent perturbations:
/// `sup_t (int_0^t beta mu_eps) / mu_eps < eps / 3`.
#[derive(Debug, Clone)]
pub struct PerturbationBudget {
    pub eps: f64,
    pub sup_value: f64,
    pub attained_at: f64,
    pub budget: f64,
    pub holds: bool,
    pub verdict: Verdict,
    /// `budget - sup_value`
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

pub fn perturbation_budget_check(problem: &Problem, eps: f64) -> Result<PerturbationBudget> {
    check_eps(eps)?;
    let bm = problem.beta_mu_table(eps)?;
    let tab = problem.table();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (i, &t) in tab.grid.iter().enumerate() {
        let log_mu = -tab.gamma[i] - bm.coupling * tab.alpha[i];
        let v = bm.log_values[i] - log_mu;
        if v > best.0 {
            best = (v, t);
        }
    }
    let sup_value = best.0.exp();
    let budget = eps / 3.0;
    let holds = sup_value < budget;
    let failure = (!holds).then_some(Failure::BudgetExceeded {
        sup: sup_value,
        budget,
    });
    Ok(PerturbationBudget {
        eps,
        sup_value,
        attained_at: best.1,
        budget,
        holds,
        verdict: if holds { Verdict::Holds } else { Verdict::Fails },
        margin: budget - sup_value,
        caveats: vec![format!("sup taken over the grid on [0, {}]", problem.horizon())],
        failure,
    })
}

/// The linear-regime bound `(g0 + int_0^t beta mu) / mu` at time `t`. It
/// bounds the comparison solution for as long as that solution stays below
/// `eps`.
pub fn linear_bound(problem: &Problem, eps: f64, t: f64) -> Result<f64> {
    check_eps(eps)?;
    let bm = problem.beta_mu_table(eps)?;
    let log_mu = problem.log_mu(eps, t)?;
    let log_int = problem.log_int_beta_mu(&bm, t)?;
    Ok((log_add_exp(problem.g0().ln(), log_int) - log_mu).exp())
}

pub fn linear_envelope(problem: &Problem, eps: f64) -> Result<Envelope> {
    check_eps(eps)?;
    let bm = problem.beta_mu_table(eps)?;
    Ok(Envelope::new(
        problem,
        Provenance::LinearBound,
        EnvelopeKind::Linear {
            eps,
            beta_mu: Arc::new(bm),
        },
        vec![format!("valid only while the trajectory stays below eps = {eps}")],
    ))
}
