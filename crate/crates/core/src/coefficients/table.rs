//! Cumulative integrals of the coefficient functions on a time grid.
//!
//! Integrals whose integrand carries an integrating factor
//! (`alpha / nu^(p-1)`, `beta * nu`, `beta * mu`) are stored as natural
//! logarithms. Each grid segment is integrated relative to the factor at
//! its left end, so the stored values stay representable even when
//! `nu` itself overflows.

use super::CoefficientProfile;
use crate::error::Result;
use crate::quadrature::{integrate, SimpsonConfig};

/// Tolerance for the inner integrals that rebuild an exponent inside a segment.
const INNER_TOL: f64 = 1e-13;

/// Which coefficient weights a cumulative integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Alpha,
    Beta,
}

/// Integrand `weight(s) * exp(wg * Gamma(s) + wa * A(s))` where
/// `Gamma = int gamma` and `A = int alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub weight: Weight,
    pub wg: f64,
    pub wa: f64,
}

#[derive(Debug, Clone)]
pub struct AntiderivativeTable {
    pub grid: Vec<f64>,
    /// `int_0^t gamma`
    pub gamma: Vec<f64>,
    /// `int_0^t alpha`
    pub alpha: Vec<f64>,
    /// `int_0^t beta`
    pub beta: Vec<f64>,
    /// `ln int_0^t alpha / nu^(p-1)`, `-inf` while the integral is zero
    pub log_alpha_over_nu: Vec<f64>,
    /// `ln int_0^t beta * nu`
    pub log_beta_nu: Vec<f64>,
    pub quad_tol: f64,
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Time grid: `n` uniform points on `[0, horizon]`, merged with a geometric
/// sweep that is dense near the origin, and any interior `breakpoints`.
pub fn build_grid(horizon: f64, n: usize, breakpoints: &[f64]) -> Vec<f64> {
    let n = n.max(3);
    let mut pts: Vec<f64> = (0..n)
        .map(|i| horizon * i as f64 / (n - 1) as f64)
        .collect();
    let start = (horizon / (n - 1) as f64).min(1e-2);
    let m = n / 2;
    if m >= 2 && start < horizon {
        let ratio = (horizon / start).powf(1.0 / (m - 1) as f64);
        let mut x = start;
        for _ in 0..m {
            pts.push(x.min(horizon));
            x *= ratio;
        }
    }
    pts.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < horizon));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = 1e-9 * horizon;
    let mut grid: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match grid.last() {
            Some(&last) if p - last < min_gap => {}
            _ => grid.push(p),
        }
    }
    if let Some(last) = grid.last_mut() {
        if horizon - *last < min_gap {
            *last = horizon;
        } else {
            grid.push(horizon);
        }
    }
    grid
}

/// Index `i` of the segment `[grid[i], grid[i+1]]` containing `t`.
pub(crate) fn segment_of(grid: &[f64], t: f64) -> usize {
    let k = grid.partition_point(|&g| g <= t);
    k.saturating_sub(1).min(grid.len().saturating_sub(2))
}

pub(crate) fn segment_tol(quad_tol: f64, a: f64, b: f64, horizon: f64) -> f64 {
    0.5 * quad_tol * (b - a) / horizon
}

impl Weight {
    fn eval(self, profile: &CoefficientProfile, t: f64) -> f64 {
        match self {
            Weight::Alpha => profile.alpha(t),
            Weight::Beta => profile.beta(t),
        }
    }
}

/// `int_a^s (wg * gamma + wa * alpha)`.
pub(crate) fn local_exponent(
    profile: &CoefficientProfile,
    a: f64,
    s: f64,
    wg: f64,
    wa: f64,
) -> Result<f64> {
    if s == a {
        return Ok(0.0);
    }
    let f = |x: f64| {
        let mut v = 0.0;
        if wg != 0.0 {
            v += wg * profile.gamma(x);
        }
        if wa != 0.0 {
            v += wa * profile.alpha(x);
        }
        v
    };
    integrate(f, a, s, SimpsonConfig::with_tol(INNER_TOL))
}

/// `ln int_a^b weight(s) exp(local_exponent(a, s))`, i.e. the segment
/// integral scaled by the integrating factor at `a`.
pub(crate) fn log_scaled_segment(
    profile: &CoefficientProfile,
    kind: Exponential,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    if b <= a {
        return Ok(f64::NEG_INFINITY);
    }
    let f = |s: f64| {
        let w = kind.weight.eval(profile, s);
        if w == 0.0 {
            return 0.0;
        }
        match local_exponent(profile, a, s, kind.wg, kind.wa) {
            Ok(e) => w * e.exp(),
            Err(_) => f64::NAN,
        }
    };
    let v = integrate(f, a, b, SimpsonConfig::with_tol(tol))?;
    Ok(if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
}

pub(crate) fn plain_segment(
    profile: &CoefficientProfile,
    which: fn(&CoefficientProfile, f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    integrate(|s| which(profile, s), a, b, SimpsonConfig::with_tol(tol))
}

/// Log-cumulative column of an exponentially weighted integrand, given the
/// already-built `gamma` and `alpha` columns.
pub(crate) fn log_column(
    profile: &CoefficientProfile,
    grid: &[f64],
    gamma: &[f64],
    alpha: &[f64],
    kind: Exponential,
    quad_tol: f64,
) -> Result<Vec<f64>> {
    let horizon = *grid.last().unwrap();
    let mut out = Vec::with_capacity(grid.len());
    out.push(f64::NEG_INFINITY);
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let scale = kind.wg * gamma[i] + kind.wa * alpha[i];
        let tol = segment_tol(quad_tol, a, b, horizon);
        let seg = log_scaled_segment(profile, kind, a, b, tol)?;
        out.push(log_add_exp(out[i], scale + seg));
    }
    Ok(out)
}

impl AntiderivativeTable {
    pub fn build(profile: &CoefficientProfile, grid: Vec<f64>, quad_tol: f64) -> Result<Self> {
        let horizon = *grid.last().unwrap();
        let n = grid.len();
        let mut gamma = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for i in 0..n - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let tol = segment_tol(quad_tol, a, b, horizon);
            gamma[i + 1] = gamma[i] + plain_segment(profile, CoefficientProfile::gamma, a, b, tol)?;
            alpha[i + 1] = alpha[i] + plain_segment(profile, CoefficientProfile::alpha, a, b, tol)?;
            beta[i + 1] = beta[i] + plain_segment(profile, CoefficientProfile::beta, a, b, tol)?;
        }
        let p = profile.p;
        let log_alpha_over_nu = log_column(
            profile,
            &grid,
            &gamma,
            &alpha,
            Exponential {
                weight: Weight::Alpha,
                wg: p - 1.0,
                wa: 0.0,
            },
            quad_tol,
        )?;
        let log_beta_nu = log_column(
            profile,
            &grid,
            &gamma,
            &alpha,
            Exponential {
                weight: Weight::Beta,
                wg: -1.0,
                wa: 0.0,
            },
            quad_tol,
        )?;
        Ok(AntiderivativeTable {
            grid,
            gamma,
            alpha,
            beta,
            log_alpha_over_nu,
            log_beta_nu,
            quad_tol,
        })
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn int_alpha_over_nu(&self, i: usize) -> f64 {
        self.log_alpha_over_nu[i].exp()
    }

    pub fn int_beta_nu(&self, i: usize) -> f64 {
        self.log_beta_nu[i].exp()
    }
}
