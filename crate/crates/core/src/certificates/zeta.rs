use super::envelope::{Envelope, EnvelopeKind, Provenance};
use super::{
    tail_caveats, Failure, GridSamples, Verdict, DECAY_LOG_THRESHOLD, GAMMA_VANISH_FRACTION, RATIO_THRESHOLD,
    ZETA_MARGIN_TOL,
};
use crate::coefficients::table::log_add_exp;
use crate::coefficients::{golden_section_max, keeps_growing, Problem};
use crate::error::{Error, Result};

/// `ln zeta(t)` with `zeta = (g0 + int_0^t beta nu) / nu`.
pub fn log_zeta(problem: &Problem, t: f64) -> Result<f64> {
    if !(problem.g0() > 0.0) {
        return Err(Error::ZeroInitialNorm);
    }
    let log_b = problem.log_int_beta_nu(t)?;
    Ok(problem.cumulative_gamma(t)? + log_add_exp(problem.g0().ln(), log_b))
}

pub fn zeta(problem: &Problem, t: f64) -> Result<f64> {
    Ok(log_zeta(problem, t)?.exp())
}

fn log_zeta_grid(problem: &Problem) -> Result<Vec<f64>> {
    if !(problem.g0() > 0.0) {
        return Err(Error::ZeroInitialNorm);
    }
    let tab = problem.table();
    let lg0 = problem.g0().ln();
    Ok((0..tab.len())
        .map(|i| tab.gamma[i] + log_add_exp(lg0, tab.log_beta_nu[i]))
        .collect())
}

/// `min_t ((q-1) beta / (q zeta)^p - alpha)` on the grid, with its location.
fn zeta_margin(q: f64, p: f64, log_zeta: &[f64], samples: &GridSamples) -> (f64, usize) {
    let lq = q.ln();
    let lc = (q - 1.0).ln();
    let mut best = (f64::INFINITY, 0);
    for (i, &lz) in log_zeta.iter().enumerate() {
        let b = samples.beta[i];
        let lead = if b > 0.0 {
            (lc + b.ln() - p * (lq + lz)).exp()
        } else {
            0.0
        };
        let m = lead - samples.alpha[i];
        if m < best.0 {
            best = (m, i);
        }
    }
    best
}

/// Envelope `|u| <= q zeta(t)` from the pointwise condition
/// `alpha <= (q-1) beta / (q zeta)^p`.
#[derive(Debug, Clone)]
pub struct ZetaCertificate {
    pub q: f64,
    pub margin: f64,
    pub margin_at: f64,
    pub zeta_max: f64,
    pub envelope: Option<Envelope>,
    /// `zeta` stops growing over the horizon.
    pub bounded_flag: bool,
    /// The decay test passes.
    pub decay_flag: bool,
    pub verdict: Verdict,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

pub fn check_zeta_certificate(problem: &Problem, q: f64) -> Result<ZetaCertificate> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::Validation(format!("q must be > 1 (got {q})")));
    }
    let lz = log_zeta_grid(problem)?;
    let samples = GridSamples::new(problem);
    let (margin, k) = zeta_margin(q, problem.p(), &lz, &samples);
    let grid = problem.grid();
    let mut caveats = tail_caveats(problem, false);
    caveats.push(format!(
        "zeta inequality checked on the grid over [0, {}] only",
        problem.horizon()
    ));

    let holds = margin >= -ZETA_MARGIN_TOL;
    let failure = (!holds).then_some(Failure::ZetaInequality { t: grid[k], margin });
    let envelope = holds.then(|| {
        Envelope::new(problem, Provenance::ZetaBound, EnvelopeKind::Zeta { q }, caveats.clone())
    });

    // Growth of the running max of zeta, on the same windows as the sup test.
    // Grid maxima are refined between neighbours so windows compare fairly.
    let running = |t: f64| -> f64 {
        let n = grid.partition_point(|&g| g <= t).max(1);
        let (i, best) = lz[..n]
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)].min(t);
        if hi <= lo || !best.is_finite() {
            return best;
        }
        let f = |s: f64| log_zeta(problem, s).unwrap_or(f64::NEG_INFINITY);
        golden_section_max(f, lo, hi, 1e-12 * hi.max(1.0)).1.max(best)
    };
    let h = problem.horizon();
    let (r4, r2, r1) = (running(0.25 * h), running(0.5 * h), running(h));
    let zeta_max = r1.exp();
    let tol = (1e3 * problem.quad_tol()).max(1e-6);
    let bounded_flag = r1.is_finite() && !keeps_growing((r1 - r2).max(0.0), (r2 - r4).max(0.0), tol);
    let decay_flag = match check_decay(problem) {
        Ok(d) => d.verdict == Verdict::Decays,
        Err(e) => {
            caveats.push(format!("decay test not applicable: {e}"));
            false
        }
    };

    Ok(ZetaCertificate {
        q,
        margin,
        margin_at: grid[k],
        zeta_max,
        envelope,
        bounded_flag,
        decay_flag,
        verdict: if holds { Verdict::Holds } else { Verdict::Fails },
        caveats,
        failure,
    })
}

#[derive(Debug, Clone)]
pub struct QSearch {
    pub q: Option<f64>,
    pub certificate: ZetaCertificate,
}

/// Searches `q - 1` over a log grid on `[1e-4, 999]`, refined by golden
/// section. With `alpha = 0` the margin is a positive multiple of
/// `(q-1) / q^p`, so `q = p / (p - 1)` is returned directly.
pub fn search_q(problem: &Problem) -> Result<QSearch> {
    let p = problem.p();
    let lz = log_zeta_grid(problem)?;
    let samples = GridSamples::new(problem);
    let objective = |x: f64| zeta_margin(1.0 + x.exp(), p, &lz, &samples).0;

    let (lo, hi) = (1e-4f64.ln(), 999f64.ln());
    let n = 281;
    let step = (hi - lo) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|k| objective(lo + step * k as f64)).collect();
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);

    let q = if samples.alpha.iter().all(|&a| a == 0.0) || vmax - vmin <= 1e-15 * (1.0 + vmax.abs()) {
        p / (p - 1.0)
    } else {
        let k = values.iter().position(|&v| v == vmax).unwrap();
        let x = lo + step * k as f64;
        let (a, b) = ((x - step).max(lo), (x + step).min(hi));
        let (xr, vr) = golden_section_max(objective, a, b, 1e-12);
        1.0 + if vr > vmax { xr } else { x }.exp()
    };
    let certificate = check_zeta_certificate(problem, q)?;
    Ok(QSearch {
        q: (certificate.verdict == Verdict::Holds).then_some(q),
        certificate,
    })
}

/// Boundedness from `L = sup |int_0^t gamma| < inf` and `int beta < inf`:
/// `|u| <= g0 e^L + e^(2L) int beta`.
#[derive(Debug, Clone)]
pub struct BoundedCertificate {
    pub l: f64,
    pub l_unbounded: bool,
    pub int_beta: Option<f64>,
    pub bound: Option<f64>,
    pub verdict: Verdict,
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

pub fn check_bounded(problem: &Problem) -> Result<BoundedCertificate> {
    let sup = problem.sup_cumulative_gamma()?;
    let running = |t: f64| {
        problem
            .window_sup_cumulative_gamma(1.0, t)
            .max(problem.window_sup_cumulative_gamma(-1.0, t))
    };
    let h = problem.horizon();
    let (r4, r2, r1) = (running(0.25 * h), running(0.5 * h), running(h));
    let l = r1.max(sup.value).max(0.0);
    let l_unbounded = keeps_growing(r1 - r2, r2 - r4, (1e3 * problem.quad_tol()).max(1e-6));

    let mut caveats = tail_caveats(problem, true);
    let mut failure = None;
    let int_beta = match problem.improper_integral_beta() {
        Ok(ib) => {
            if !ib.converged {
                caveats.push(format!("int beta not converged on the horizon (tail {})", ib.tail));
            }
            Some((ib.value, ib.converged))
        }
        Err(Error::DivergenceSuspected { tail, .. }) => {
            failure = Some(Failure::DivergenceSuspected {
                integral: "int beta",
                tail,
            });
            None
        }
        Err(e) => return Err(e),
    };
    if l_unbounded {
        caveats.push("L = sup |int_0^t gamma| appears unbounded".into());
        failure.get_or_insert(Failure::UnboundedCumulativeGamma);
    }
    let bound = match int_beta {
        Some((ib, _)) if !l_unbounded => Some(problem.g0() * l.exp() + (2.0 * l).exp() * ib),
        _ => None,
    };
    let verdict = match (bound, int_beta) {
        _ if l_unbounded => Verdict::Fails,
        (Some(_), Some((_, true))) => Verdict::Bounded,
        _ => Verdict::Inconclusive,
    };
    Ok(BoundedCertificate {
        l,
        l_unbounded,
        int_beta: int_beta.map(|x| x.0),
        bound,
        verdict,
        margin: bound.map_or(f64::NAN, |b| -b.ln()),
        caveats,
        failure,
    })
}

/// Decay evidence: `int_0^T gamma < -ln 1e6` and still falling, and
/// `|beta / gamma|` at the horizon below `1e-3` and falling.
#[derive(Debug, Clone)]
pub struct DecayCertificate {
    pub cumulative_gamma_end: f64,
    pub cumulative_gamma_half: f64,
    pub ratio_end: f64,
    pub ratio_half: f64,
    pub vanishing_fraction: f64,
    pub verdict: Verdict,
    /// `min(-int gamma - threshold, ln(1e-3 / ratio))`
    pub margin: f64,
    pub caveats: Vec<String>,
    pub failure: Option<Failure>,
}

pub fn check_decay(problem: &Problem) -> Result<DecayCertificate> {
    let tab = problem.table();
    let samples = GridSamples::new(problem);
    let h = problem.horizon();
    let start = tab.grid.partition_point(|&t| t < 0.5 * h);
    let window: Vec<usize> = (start..tab.len()).collect();
    let zeros = window.iter().filter(|&&i| samples.gamma[i] == 0.0).count();
    let vanishing_fraction = zeros as f64 / window.len().max(1) as f64;
    if vanishing_fraction > GAMMA_VANISH_FRACTION {
        return Err(Error::GammaVanishes {
            fraction: 100.0 * vanishing_fraction,
        });
    }
    let ratio = |i: usize| (samples.beta[i] / samples.gamma[i]).abs();
    let nonzero: Vec<usize> = window.iter().copied().filter(|&i| samples.gamma[i] != 0.0).collect();
    let (ratio_half, ratio_end) = match (nonzero.first(), nonzero.last()) {
        (Some(&a), Some(&b)) => (ratio(a), ratio(b)),
        _ => (f64::NAN, f64::NAN),
    };

    let g_end = *tab.gamma.last().unwrap();
    let g_half = problem.cumulative_gamma(0.5 * h)?;
    let gamma_ok = g_end < -DECAY_LOG_THRESHOLD && g_end < g_half;
    let ratio_ok = ratio_end < RATIO_THRESHOLD && (ratio_end == 0.0 || ratio_end < ratio_half);
    let margin = (-g_end - DECAY_LOG_THRESHOLD).min(if ratio_end == 0.0 {
        f64::INFINITY
    } else {
        (RATIO_THRESHOLD / ratio_end).ln()
    });

    let failure = if !gamma_ok {
        Some(Failure::NotDecaying(format!(
            "int_0^T gamma = {g_end} is not below -ln 1e6 and decreasing"
        )))
    } else if !ratio_ok {
        Some(Failure::NotDecaying(format!(
            "|beta / gamma| at T = {ratio_end} is not below 1e-3 and decreasing"
        )))
    } else {
        None
    };
    let mut caveats = vec!["limits are horizon-truncated evidence, not a proof".to_string()];
    if zeros > 0 {
        caveats.push(format!("{zeros} last-decade grid points with gamma = 0 skipped"));
    }
    Ok(DecayCertificate {
        cumulative_gamma_end: g_end,
        cumulative_gamma_half: g_half,
        ratio_end,
        ratio_half,
        vanishing_fraction,
        verdict: if failure.is_none() { Verdict::Decays } else { Verdict::Fails },
        margin,
        caveats,
        failure,
    })
}
