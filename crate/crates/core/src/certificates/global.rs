use super::envelope::{Envelope, EnvelopeKind, Provenance};
use super::{max_forcing_ratio, strict_verdict, tail_caveats, Failure, GridSamples, Verdict};
use crate::coefficients::{golden_section_max, Problem};
use crate::error::{Error, Result};

/// Global bound `|u(t)| <= C2 exp(int_0^t gamma)` for all `t`, from
/// `D = (g0 + omega)^(1-p) - (p-1) I_inf > 0` and `beta nu^p / alpha <= omega^p`.
#[derive(Debug, Clone)]
pub struct GlobalBoundCertificate {
    pub omega: f64,
    pub m: f64,
    /// `int_0^inf alpha / nu^(p-1)`, truncated at the horizon.
    pub i_inf: f64,
    pub denominator: f64,
    /// `min_t (1 - beta nu^p / (alpha omega^p))`
    pub forcing_margin: f64,
    pub m3: Option<f64>,
    pub c2: Option<f64>,
    pub envelope: Option<Envelope>,
    pub decay_flag: bool,
    pub verdict: Verdict,
    /// `D / (g0 + omega)^(1-p)`
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

/// `I_inf` or the failure that prevents using it.
fn i_inf(problem: &Problem, caveats: &mut Vec<String>) -> Result<std::result::Result<(f64, bool), Failure>> {
    match problem.improper_integral_alpha_over_nu() {
        Ok(ii) => {
            if !ii.converged {
                caveats.push(format!(
                    "int alpha / nu^(p-1) not converged on the horizon (tail {}); assert alpha_integrable to accept",
                    ii.tail
                ));
            }
            Ok(Ok((ii.value, ii.converged)))
        }
        Err(Error::DivergenceSuspected { tail, .. }) => Ok(Err(Failure::DivergenceSuspected {
            integral: "int alpha / nu^(p-1)",
            tail,
        })),
        Err(e) => Err(e),
    }
}

pub fn check_global_bound(problem: &Problem, omega: f64) -> Result<GlobalBoundCertificate> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Validation(format!("omega must be a positive number (got {omega})")));
    }
    let p = problem.p();
    let g0 = problem.g0();
    let samples = GridSamples::new(problem);
    let sup = problem.sup_cumulative_gamma()?;
    let mut caveats = tail_caveats(problem, true);
    let mut failure = None;

    let (i_value, converged) = match i_inf(problem, &mut caveats)? {
        Ok(v) => v,
        Err(f) => {
            failure = Some(f);
            (f64::INFINITY, false)
        }
    };
    let base = (g0 + omega).powf(1.0 - p);
    let denominator = base - (p - 1.0) * i_value;
    let margin = if i_value.is_finite() { denominator / base } else { f64::NEG_INFINITY };

    let (ratio, ratio_at) = max_forcing_ratio(problem, &samples);
    let forcing_margin = 1.0 - ratio / omega.powf(p);

    let mut verdict = strict_verdict(margin);
    if failure.is_none() && verdict == Verdict::Fails {
        failure = Some(Failure::NonpositiveDenominator { value: denominator });
    }
    if forcing_margin < -1e-12 {
        verdict = Verdict::Fails;
        if failure.is_none() {
            failure = Some(Failure::ForcingNotDominated { t: ratio_at, ratio });
        }
    }
    if sup.unbounded_suspected {
        verdict = Verdict::Fails;
        failure = Some(Failure::UnboundedCumulativeGamma);
    }
    if verdict == Verdict::Holds && !converged {
        verdict = Verdict::Inconclusive;
    }

    let (m3, c2, envelope) = if failure.is_none() {
        let m3 = 1.0 / denominator;
        let c2 = m3.powf(1.0 / (p - 1.0)) - omega;
        let env = Envelope::new(
            problem,
            Provenance::GlobalBound,
            EnvelopeKind::Exponential { c2 },
            caveats.clone(),
        );
        (Some(m3), Some(c2), Some(env))
    } else {
        (None, None, None)
    };

    let h = problem.horizon();
    let gamma_end = problem.table().gamma.last().copied().unwrap_or(0.0);
    let decay_flag = gamma_end < -super::DECAY_LOG_THRESHOLD && gamma_end < problem.cumulative_gamma(0.5 * h)?;

    Ok(GlobalBoundCertificate {
        omega,
        m: sup.value,
        i_inf: i_value,
        denominator,
        forcing_margin,
        m3,
        c2,
        envelope,
        decay_flag,
        verdict,
        margin,
        caveats,
        failure,
    })
}

/// Outcome of the search for an admissible `omega`.
#[derive(Debug, Clone)]
pub struct OmegaSearch {
    pub omega: Option<f64>,
    pub certificate: GlobalBoundCertificate,
}

/// Searches `omega` over a log grid on `[1e-6, 1e6]`, refined by golden
/// section, for the largest value of
/// `min(D(omega), omega^p - max_t beta nu^p / alpha)`.
pub fn search_omega(problem: &Problem) -> Result<OmegaSearch> {
    let p = problem.p();
    let g0 = problem.g0();
    let i_value = match problem.improper_integral_alpha_over_nu() {
        Ok(ii) => ii.value,
        Err(Error::DivergenceSuspected { .. }) => {
            return Ok(OmegaSearch {
                omega: None,
                certificate: check_global_bound(problem, 1.0)?,
            })
        }
        Err(e) => return Err(e),
    };
    let samples = GridSamples::new(problem);
    let (ratio, _) = max_forcing_ratio(problem, &samples);
    // Relative margins keep the objective well scaled across decades.
    let objective = |log_w: f64| -> f64 {
        let w = log_w.exp();
        let base = (g0 + w).powf(1.0 - p);
        let d = 1.0 - (p - 1.0) * i_value / base;
        let f = 1.0 - ratio / w.powf(p);
        d.min(f)
    };
    let n = 157;
    let (lo, hi) = (1e-6f64.ln(), 1e6f64.ln());
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..n {
        let x = lo + step * k as f64;
        let v = objective(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let (a, b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let refined = golden_section_max(objective, a, b, 1e-10);
    if refined.1 > best.1 {
        best = refined;
    }
    let omega = best.0.exp();
    let certificate = check_global_bound(problem, omega)?;
    let found = certificate.failure.is_none();
    Ok(OmegaSearch {
        omega: found.then_some(omega),
        certificate,
    })
}

/// Small-data corollary: `beta nu^p / alpha <= C` and
/// `(g0 + C^(1/p))^p < C1 = ((p-1) I_inf)^(-p/(p-1))` imply the global bound
/// with `omega = C^(1/p)`.
#[derive(Debug, Clone)]
pub struct SmallDataCertificate {
    pub c: f64,
    pub c1: f64,
    pub omega0: f64,
    pub lhs: f64,
    pub forcing_ratio_max: f64,
    pub global: Option<GlobalBoundCertificate>,
    pub verdict: Verdict,
    /// `1 - lhs / C1`
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

/// Smallest admissible `C`: the forcing ratio sup, padded slightly, with a
/// floor so `omega0` stays positive when `beta = 0`.
pub fn default_small_data_constant(problem: &Problem) -> f64 {
    let samples = GridSamples::new(problem);
    let (ratio, _) = max_forcing_ratio(problem, &samples);
    ratio.max(1e-12) * (1.0 + 1e-6)
}

pub fn check_small_data(problem: &Problem, c: f64) -> Result<SmallDataCertificate> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Validation(format!("C must be a positive number (got {c})")));
    }
    let p = problem.p();
    let samples = GridSamples::new(problem);
    let (ratio, ratio_at) = max_forcing_ratio(problem, &samples);
    let mut caveats = tail_caveats(problem, false);
    let mut failure = None;

    let c1 = match i_inf(problem, &mut caveats)? {
        Ok((i, _)) => ((p - 1.0) * i).powf(-p / (p - 1.0)),
        Err(f) => {
            failure = Some(f);
            0.0
        }
    };
    let omega0 = c.powf(1.0 / p);
    let lhs = (problem.g0() + omega0).powf(p);
    let margin = if c1.is_infinite() { 1.0 } else { 1.0 - lhs / c1 };
    let mut verdict = strict_verdict(margin);
    if verdict == Verdict::Fails && failure.is_none() {
        failure = Some(Failure::SmallDataViolated { lhs, c1 });
    }
    if ratio > c * (1.0 + 1e-12) {
        verdict = Verdict::Fails;
        failure.get_or_insert(Failure::ForcingNotDominated { t: ratio_at, ratio });
    }
    let global = if failure.is_none() {
        let g = check_global_bound(problem, omega0)?;
        // The corollary implies the theorem, so defer to its verdict; a
        // marginal small-data margin stays marginal.
        if verdict == Verdict::Holds || g.verdict != Verdict::Holds {
            verdict = g.verdict;
        }
        if g.failure.is_some() {
            failure = g.failure.clone();
        }
        Some(g)
    } else {
        None
    };
    Ok(SmallDataCertificate {
        c,
        c1,
        omega0,
        lhs,
        forcing_ratio_max: ratio,
        global,
        verdict,
        margin,
        caveats,
        failure,
    })
}
