//! Adaptive composite Simpson quadrature with interval bisection.
//!
//! Each accepted panel is corrected by Richardson extrapolation
//! (`S2 + (S2 - S1) / 15`). The panel budget is capped so that
//! non-integrable or badly behaved integrands surface as an error
//! instead of an endless refinement.

use crate::error::{Error, Result};

/// Hard cap on the number of accepted subintervals.
pub const MAX_SUBINTERVALS: usize = 1 << 20;

const MAX_DEPTH: u32 = 60;

#[derive(Debug, Clone, Copy)]
pub struct SimpsonConfig {
    pub abs_tol: f64,
    pub max_subintervals: usize,
}

impl Default for SimpsonConfig {
    fn default() -> Self {
        SimpsonConfig {
            abs_tol: 1e-9,
            max_subintervals: MAX_SUBINTERVALS,
        }
    }
}

impl SimpsonConfig {
    pub fn with_tol(abs_tol: f64) -> Self {
        SimpsonConfig {
            abs_tol,
            ..Default::default()
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn finite_or_err(v: f64, x: f64, a: f64, b: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureDivergence {
            a,
            b,
            reason: format!("integrand is not finite at t = {x}"),
        })
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `cfg.abs_tol`.
///
/// The tolerance is floored at a few ulps of the running estimate so that
/// panels whose contribution is already at machine precision are accepted.
pub fn integrate<F>(f: F, a: f64, b: f64, cfg: SimpsonConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, cfg).map(|v| -v);
    }
    let eval = |x: f64| finite_or_err(f(x), x, a, b);

    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (eval(a)?, eval(m)?, eval(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);

    let mut stack = vec![Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol: cfg.abs_tol,
        depth: 0,
    }];
    let mut total = 0.0;
    let mut accepted = 0usize;

    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        let left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
        let right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
        let refined = left + right;
        let diff = refined - p.whole;

        let scale = left.abs() + right.abs();
        let floor = 64.0 * f64::EPSILON * scale;
        let width_exhausted = (p.b - p.a) <= 4.0 * f64::EPSILON * p.a.abs().max(p.b.abs()).max(1.0);

        if diff.abs() <= 15.0 * p.tol.max(floor) || width_exhausted {
            total += refined + diff / 15.0;
            accepted += 1;
            if accepted > cfg.max_subintervals {
                return Err(Error::QuadratureDivergence {
                    a,
                    b,
                    reason: format!("exceeded {} subintervals", cfg.max_subintervals),
                });
            }
            continue;
        }
        if p.depth >= MAX_DEPTH {
            return Err(Error::QuadratureDivergence {
                a,
                b,
                reason: format!("refinement depth {MAX_DEPTH} reached near t = {m}"),
            });
        }
        if stack.len() + accepted > cfg.max_subintervals {
            return Err(Error::QuadratureDivergence {
                a,
                b,
                reason: format!("exceeded {} subintervals", cfg.max_subintervals),
            });
        }
        let half = 0.5 * p.tol;
        stack.push(Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            tol: half,
            depth: p.depth + 1,
        });
        stack.push(Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            tol: half,
            depth: p.depth + 1,
        });
    }
    Ok(total)
}
