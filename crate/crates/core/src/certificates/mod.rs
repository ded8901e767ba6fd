//! Stability and blow-up certificates for the scalar comparison equation
//! `g' = gamma g + alpha g^p + beta`.
//!
//! Every check returns a record with a verdict, a numeric margin, the
//! constants it derived and the caveats that apply. Hypotheses are only
//! evaluated on `[0, T]`; anything claimed beyond the horizon is flagged.

mod blowup;
mod envelope;
mod global;
mod lyapunov;
mod zeta;

use std::fmt::{self, Write as _};

pub use blowup::{estimate_blowup_time, BlowUpEstimate};
pub use envelope::{Envelope, EnvelopeKind, Provenance};
pub use global::{
    check_global_bound, check_small_data, default_small_data_constant, search_omega, GlobalBoundCertificate,
    OmegaSearch, SmallDataCertificate,
};
pub use lyapunov::{
    check_lyapunov, linear_bound, linear_envelope, perturbation_budget_check, LyapunovCertificate,
    PerturbationBudget,
};
pub use zeta::{
    check_bounded, check_decay, check_zeta_certificate, log_zeta, search_q, zeta, BoundedCertificate,
    DecayCertificate, QSearch, ZetaCertificate,
};

use crate::coefficients::Problem;

/// Relative margin below which a strict inequality is reported as marginal.
pub const STRICT_MARGIN: f64 = 1e-6;
/// Safety factor applied to the admissible perturbation radius.
pub const DELTA_SAFETY: f64 = 1e-6;
/// Pointwise slack allowed in the zeta inequality.
pub const ZETA_MARGIN_TOL: f64 = 1e-12;
/// `int_0^T gamma` must fall below `-DECAY_LOG_THRESHOLD` for decay evidence.
pub const DECAY_LOG_THRESHOLD: f64 = 13.815510557964274;
/// `|beta / gamma|` at the horizon must fall below this for decay evidence.
pub const RATIO_THRESHOLD: f64 = 1e-3;
/// Tolerance on the blow-up root residual.
pub const ROOT_TOL: f64 = 1e-9;
/// Share of last-decade grid points where gamma may vanish before the ratio
/// test is refused.
pub const GAMMA_VANISH_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Marginal,
    Fails,
    Inconclusive,
    Bounded,
    Decays,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Marginal => "marginal",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Bounded => "bounded",
            Verdict::Decays => "decays",
        }
    }

    /// True for verdicts that certify something.
    pub fn is_positive(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::Bounded | Verdict::Decays)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The hypothesis that made a check fail.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    UnboundedCumulativeGamma,
    DivergenceSuspected { integral: &'static str, tail: f64 },
    NonpositiveDenominator { value: f64 },
    ForcingNotDominated { t: f64, ratio: f64 },
    SmallDataViolated { lhs: f64, c1: f64 },
    ZetaInequality { t: f64, margin: f64 },
    BudgetExceeded { sup: f64, budget: f64 },
    NotDecaying(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::UnboundedCumulativeGamma => f.write_str("int_0^t gamma appears unbounded on the horizon"),
            Failure::DivergenceSuspected { integral, tail } => {
                write!(f, "{integral} suspected divergent (tail over [T/2, T] = {tail})")
            }
            Failure::NonpositiveDenominator { value } => write!(f, "denominator D = {value} is not positive"),
            Failure::ForcingNotDominated { t, ratio } => {
                write!(f, "forcing not dominated at t = {t} (ratio {ratio})")
            }
            Failure::SmallDataViolated { lhs, c1 } => write!(f, "(g0 + C^(1/p))^p = {lhs} is not below C1 = {c1}"),
            Failure::ZetaInequality { t, margin } => write!(f, "zeta inequality violated at t = {t} (margin {margin})"),
            Failure::BudgetExceeded { sup, budget } => write!(f, "forcing budget {sup} is not below {budget}"),
            Failure::NotDecaying(why) => f.write_str(why),
        }
    }
}

/// Any certificate, for uniform reporting.
#[derive(Debug, Clone)]
pub enum Certificate {
    Lyapunov(LyapunovCertificate),
    PerturbationBudget(PerturbationBudget),
    GlobalBound(GlobalBoundCertificate),
    SmallData(SmallDataCertificate),
    Zeta(ZetaCertificate),
    Bounded(BoundedCertificate),
    Decay(DecayCertificate),
}

impl Certificate {
    pub fn id(&self) -> &'static str {
        match self {
            Certificate::Lyapunov(_) => "lyapunov",
            Certificate::PerturbationBudget(_) => "perturbation_budget",
            Certificate::GlobalBound(_) => "global_bound",
            Certificate::SmallData(_) => "small_data",
            Certificate::Zeta(_) => "zeta_envelope",
            Certificate::Bounded(_) => "bounded",
            Certificate::Decay(_) => "decay",
        }
    }

    pub fn verdict(&self) -> Verdict {
        match self {
            Certificate::Lyapunov(c) => c.verdict,
            Certificate::PerturbationBudget(c) => c.verdict,
            Certificate::GlobalBound(c) => c.verdict,
            Certificate::SmallData(c) => c.verdict,
            Certificate::Zeta(c) => c.verdict,
            Certificate::Bounded(c) => c.verdict,
            Certificate::Decay(c) => c.verdict,
        }
    }

    pub fn margin(&self) -> f64 {
        match self {
            Certificate::Lyapunov(c) => c.margin,
            Certificate::PerturbationBudget(c) => c.margin,
            Certificate::GlobalBound(c) => c.margin,
            Certificate::SmallData(c) => c.margin,
            Certificate::Zeta(c) => c.margin,
            Certificate::Bounded(c) => c.margin,
            Certificate::Decay(c) => c.margin,
        }
    }

    pub fn caveats(&self) -> &[String] {
        match self {
            Certificate::Lyapunov(c) => &c.caveats,
            Certificate::PerturbationBudget(c) => &c.caveats,
            Certificate::GlobalBound(c) => &c.caveats,
            Certificate::SmallData(c) => &c.caveats,
            Certificate::Zeta(c) => &c.caveats,
            Certificate::Bounded(c) => &c.caveats,
            Certificate::Decay(c) => &c.caveats,
        }
    }

    pub fn failure(&self) -> Option<&Failure> {
        match self {
            Certificate::Lyapunov(c) => c.failure.as_ref(),
            Certificate::PerturbationBudget(c) => c.failure.as_ref(),
            Certificate::GlobalBound(c) => c.failure.as_ref(),
            Certificate::SmallData(c) => c.failure.as_ref(),
            Certificate::Zeta(c) => c.failure.as_ref(),
            Certificate::Bounded(c) => c.failure.as_ref(),
            Certificate::Decay(c) => c.failure.as_ref(),
        }
    }

    /// The bound on `|u|` this certificate yields, if any.
    pub fn envelope(&self) -> Option<&Envelope> {
        match self {
            Certificate::GlobalBound(c) => c.envelope.as_ref(),
            Certificate::SmallData(c) => c.global.as_ref().and_then(|g| g.envelope.as_ref()),
            Certificate::Zeta(c) => c.envelope.as_ref(),
            _ => None,
        }
    }

    /// Named constants in a stable order.
    pub fn constants(&self) -> Vec<(&'static str, f64)> {
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        match self {
            Certificate::Lyapunov(c) => vec![
                ("eps", c.eps),
                ("M", c.m),
                ("M_attained_at", c.m_attained_at),
                ("int_alpha", c.int_alpha),
                ("M1", c.m1),
                ("delta_max", c.delta_max),
                ("beta_budget", c.beta_budget),
            ],
            Certificate::PerturbationBudget(c) => vec![
                ("eps", c.eps),
                ("sup", c.sup_value),
                ("attained_at", c.attained_at),
                ("budget", c.budget),
            ],
            Certificate::GlobalBound(c) => vec![
                ("omega", c.omega),
                ("M", c.m),
                ("I_inf", c.i_inf),
                ("D", c.denominator),
                ("M3", opt(c.m3)),
                ("C2", opt(c.c2)),
                ("forcing_margin", c.forcing_margin),
            ],
            Certificate::SmallData(c) => vec![
                ("C", c.c),
                ("C1", c.c1),
                ("omega0", c.omega0),
                ("lhs", c.lhs),
                ("forcing_ratio_max", c.forcing_ratio_max),
                ("C2", opt(c.global.as_ref().and_then(|g| g.c2))),
            ],
            Certificate::Zeta(c) => vec![
                ("q", c.q),
                ("margin_at", c.margin_at),
                ("zeta_max", c.zeta_max),
                ("bounded_flag", if c.bounded_flag { 1.0 } else { 0.0 }),
                ("decay_flag", if c.decay_flag { 1.0 } else { 0.0 }),
            ],
            Certificate::Bounded(c) => vec![("L", c.l), ("int_beta", opt(c.int_beta)), ("bound", opt(c.bound))],
            Certificate::Decay(c) => vec![
                ("int_gamma_T", c.cumulative_gamma_end),
                ("int_gamma_half_T", c.cumulative_gamma_half),
                ("ratio_T", c.ratio_end),
                ("ratio_half_T", c.ratio_half),
            ],
        }
    }

    /// Multi-line `key = value` block.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.id());
        let _ = writeln!(s, "verdict = {}", self.verdict());
        let _ = writeln!(s, "margin = {}", self.margin());
        for (k, v) in self.constants() {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(f) = self.failure() {
            let _ = writeln!(s, "failure = {f}");
        }
        if let Some(e) = self.envelope() {
            let _ = writeln!(s, "envelope = {e}");
        }
        for c in self.caveats() {
            let _ = writeln!(s, "caveat = {c}");
        }
        s
    }

    /// One CSV record: `theorem, verdict, margin, constants, caveats`.
    pub fn csv_record(&self) -> [String; 5] {
        let constants = self
            .constants()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut caveats = self.caveats().to_vec();
        if let Some(f) = self.failure() {
            caveats.insert(0, format!("failure: {f}"));
        }
        [
            self.id().to_string(),
            self.verdict().to_string(),
            format!("{}", self.margin()),
            constants,
            caveats.join("; "),
        ]
    }
}

pub const CSV_HEADER: [&str; 5] = ["theorem", "verdict", "margin", "constants", "caveats"];

/// Verdict for a strict inequality with relative margin `rel`.
pub(crate) fn strict_verdict(rel: f64) -> Verdict {
    if !(rel > 0.0) {
        Verdict::Fails
    } else if rel < STRICT_MARGIN {
        Verdict::Marginal
    } else {
        Verdict::Holds
    }
}

/// Coefficient samples on the problem grid.
pub(crate) struct GridSamples {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GridSamples {
    pub fn new(problem: &Problem) -> Self {
        let pr = problem.profile();
        let grid = problem.grid();
        GridSamples {
            alpha: grid.iter().map(|&t| pr.alpha(t)).collect(),
            beta: grid.iter().map(|&t| pr.beta(t)).collect(),
            gamma: grid.iter().map(|&t| pr.gamma(t)).collect(),
        }
    }
}

/// `max_t beta nu^p / alpha` over the grid, with the time it is attained.
/// Points with `alpha = beta = 0` are skipped; `alpha = 0 < beta` gives `+inf`.
pub(crate) fn max_forcing_ratio(problem: &Problem, samples: &GridSamples) -> (f64, f64) {
    let p = problem.p();
    let tab = problem.table();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (i, &t) in tab.grid.iter().enumerate() {
        let (a, b) = (samples.alpha[i], samples.beta[i]);
        if b == 0.0 {
            continue;
        }
        if a == 0.0 {
            return (f64::INFINITY, t);
        }
        let log_r = b.ln() - p * tab.gamma[i] - a.ln();
        if log_r > best.0 {
            best = (log_r, t);
        }
    }
    (best.0.exp(), best.1)
}

pub(crate) fn tail_caveats(problem: &Problem, sup_used: bool) -> Vec<String> {
    let tail = problem.tail();
    let mut out = Vec::new();
    if sup_used && !tail.gamma_sup_attained {
        out.push(format!(
            "sup of int_0^t gamma is taken over [0, {}]; later excursions are not covered",
            problem.horizon()
        ));
    }
    if tail.alpha_integrable {
        out.push("alpha integrability asserted by the user".into());
    }
    if tail.beta_integrable {
        out.push("beta integrability asserted by the user".into());
    }
    if tail.gamma_sup_attained {
        out.push("sup of int_0^t gamma asserted attained within the horizon".into());
    }
    out
}


#[cfg(test)]
mod tests {
    use super::test_util::problem;
    use super::*;

    #[test]
    fn strict_verdicts() {
        assert_eq!(strict_verdict(0.5), Verdict::Holds);
        assert_eq!(strict_verdict(1e-8), Verdict::Marginal);
        assert_eq!(strict_verdict(0.0), Verdict::Fails);
        assert_eq!(strict_verdict(f64::NAN), Verdict::Fails);
    }

    #[test]
    fn decay_threshold_is_log_of_a_million() {
        assert!((DECAY_LOG_THRESHOLD - 1e6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn report_and_csv_carry_verdict_and_constants() {
        let pr = problem("-1", "exp_decay(1)", "0", 2.0, 0.1, 30.0);
        let cert = Certificate::GlobalBound(check_global_bound(&pr, 1.0).unwrap());
        let rep = cert.report();
        assert!(rep.starts_with("[global_bound]\nverdict = holds\n"));
        assert!(rep.contains("C2 = "));
        let rec = cert.csv_record();
        assert_eq!(rec[0], "global_bound");
        assert_eq!(rec[1], "holds");
        assert!(rec[3].contains("omega=1"));
    }

    #[test]
    fn forcing_ratio_handles_vanishing_alpha() {
        let pr = problem("-1", "0", "1", 2.0, 0.1, 5.0);
        let s = GridSamples::new(&pr);
        assert_eq!(max_forcing_ratio(&pr, &s).0, f64::INFINITY);
        let pr = problem("-1", "0", "0", 2.0, 0.1, 5.0);
        let s = GridSamples::new(&pr);
        assert_eq!(max_forcing_ratio(&pr, &s).0, 0.0);
    }
}
