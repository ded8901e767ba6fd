use std::fmt;
use std::sync::Arc;

use crate::coefficients::table::log_add_exp;
use crate::coefficients::{BetaMuTable, Problem};
use crate::error::Result;

/// Which check produced an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// `C2 * exp(int_0^t gamma)` from the global-bound check.
    GlobalBound,
    /// `q * zeta(t)` from the zeta check.
    ZetaBound,
    /// `g0 / mu + int_0^t beta mu / mu`, valid while the trajectory stays below eps.
    LinearBound,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::GlobalBound => "global_bound",
            Provenance::ZetaBound => "zeta_envelope",
            Provenance::LinearBound => "linear_bound",
        }
    }
}

#[derive(Debug, Clone)]
pub enum EnvelopeKind {
    Exponential { c2: f64 },
    Zeta { q: f64 },
    Linear { eps: f64, beta_mu: Arc<BetaMuTable> },
}

/// An upper bound `E(t)` on `|u(t)|` over `[0, horizon]`, evaluated in log
/// space so it stays usable when the integrating factor over- or underflows.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub provenance: Provenance,
    pub kind: EnvelopeKind,
    pub horizon: f64,
    pub caveats: Vec<String>,
    problem: Problem,
    log_scale: f64,
}

impl Envelope {
    pub(crate) fn new(problem: &Problem, provenance: Provenance, kind: EnvelopeKind, caveats: Vec<String>) -> Self {
        Envelope {
            provenance,
            kind,
            horizon: problem.horizon(),
            caveats,
            problem: problem.clone(),
            log_scale: 0.0,
        }
    }

    /// Multiplies the envelope by `factor`. Used for fault injection.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.log_scale += factor.ln();
        self
    }

    pub fn log_eval(&self, t: f64) -> Result<f64> {
        let pr = &self.problem;
        let v = match &self.kind {
            EnvelopeKind::Exponential { c2 } => c2.ln() + pr.cumulative_gamma(t)?,
            EnvelopeKind::Zeta { q } => q.ln() + super::log_zeta(pr, t)?,
            EnvelopeKind::Linear { eps, beta_mu } => {
                let log_mu = pr.log_mu(*eps, t)?;
                let log_int = pr.log_int_beta_mu(beta_mu, t)?;
                log_add_exp(pr.g0().ln(), log_int) - log_mu
            }
        };
        Ok(v + self.log_scale)
    }

    /// `E(t)`; may be `+inf` when the bound exceeds the f64 range.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.log_eval(t)?.exp())
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = self.log_scale.exp();
        match &self.kind {
            EnvelopeKind::Exponential { c2 } => write!(f, "{} * exp(int_0^t gamma)", c2 * scale),
            EnvelopeKind::Zeta { q } => write!(f, "{} * zeta(t)", q * scale),
            EnvelopeKind::Linear { eps, .. } => {
                write!(f, "{scale} * (g0 + int_0^t beta mu) / mu, eps = {eps}")
            }
        }
    }
}
