use super::ROOT_TOL;
use crate::coefficients::Problem;
use crate::error::{Error, Result};

/// Blow-up time of the forcing-free comparison equation: the root `t0` of
/// `(p-1) int_0^t alpha / nu^(p-1) = g0^(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpEstimate {
    pub t0: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    /// `g0^(1-p) - (p-1) int_0^t0 alpha / nu^(p-1)`, or its value at the
    /// horizon when no root was found.
    pub residual: f64,
    pub caveats: Vec<String>,
}

pub fn estimate_blowup_time(problem: &Problem) -> Result<BlowUpEstimate> {
    let g0 = problem.g0();
    if !(g0 > 0.0) {
        return Err(Error::ZeroInitialNorm);
    }
    let p = problem.p();
    let target = (1.0 - p) * g0.ln() - (p - 1.0).ln();
    let tab = problem.table();
    let residual_at = |log_i: f64| g0.powf(1.0 - p) - (p - 1.0) * log_i.exp();

    let mut caveats = Vec::new();
    if !problem.profile().beta_is_zero() {
        caveats.push("beta is ignored; forcing only makes blow-up earlier".into());
    }
    let Some(k) = tab.log_alpha_over_nu.iter().position(|&v| v >= target) else {
        caveats.push(format!("no blow-up before the horizon {}", problem.horizon()));
        return Ok(BlowUpEstimate {
            t0: None,
            bracket: None,
            residual: residual_at(*tab.log_alpha_over_nu.last().unwrap()),
            caveats,
        });
    };
    let (mut lo, mut hi) = (tab.grid[k.saturating_sub(1)], tab.grid[k]);
    let bracket = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if problem.log_int_alpha_over_nu(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let t0 = 0.5 * (lo + hi);
    let residual = residual_at(problem.log_int_alpha_over_nu(t0)?);
    if residual.abs() >= ROOT_TOL * g0.powf(1.0 - p).max(1.0) {
        caveats.push(format!("root residual {residual} exceeds tolerance {ROOT_TOL}"));
    }
    Ok(BlowUpEstimate {
        t0: Some(t0),
        bracket: Some(bracket),
        residual,
        caveats,
    })
}
