//! Coefficient profiles `(gamma, alpha, beta, p)`, problem data, and the
//! cached cumulative integrals and integrating factors built from them.

pub mod config;
pub mod expr;
pub mod table;

use std::fmt;
use std::sync::Arc;

pub use config::{load_config, load_profile, CertificateParams, Config};
pub use expr::{Expr, Interpolation, Table};
pub use table::{AntiderivativeTable, Exponential, Weight};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, SimpsonConfig};
use table::{build_grid, log_add_exp, log_column, log_scaled_segment, segment_of};

/// Largest exponent for which `exp` stays finite in f64.
pub const MAX_EXP: f64 = 709.0;

pub const DEFAULT_HORIZON: f64 = 100.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// The bound functions of the evolution equation:
/// `Re<u, A(t)u> <= gamma(t)|u|^2`, `|G(t,u)| <= alpha(t)|u|^p`, `|f(t)| <= beta(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProfile {
    pub gamma: Expr,
    pub alpha: Expr,
    pub beta: Expr,
    pub p: f64,
}

impl CoefficientProfile {
    pub fn new(gamma: Expr, alpha: Expr, beta: Expr, p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Validation(format!("exponent p must satisfy p > 1 (got {p})")));
        }
        Ok(CoefficientProfile {
            gamma,
            alpha,
            beta,
            p,
        })
    }

    /// Parses the three coefficient expressions.
    pub fn parse(gamma: &str, alpha: &str, beta: &str, p: f64) -> Result<Self> {
        Self::new(
            Expr::parse(gamma)?,
            Expr::parse(alpha)?,
            Expr::parse(beta)?,
            p,
        )
    }

    pub fn gamma(&self, t: f64) -> f64 {
        self.gamma.eval(t)
    }

    pub fn alpha(&self, t: f64) -> f64 {
        self.alpha.eval(t)
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta.eval(t)
    }

    pub fn beta_is_zero(&self) -> bool {
        self.beta.is_identically_zero()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.gamma.breakpoints();
        b.extend(self.alpha.breakpoints());
        b.extend(self.beta.breakpoints());
        b
    }

    /// Same profile with a different forcing bound.
    pub fn with_beta(&self, beta: Expr) -> Self {
        CoefficientProfile {
            beta,
            ..self.clone()
        }
    }
}

impl fmt::Display for CoefficientProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gamma = {}; alpha = {}; beta = {}; p = {}",
            self.gamma, self.alpha, self.beta, self.p
        )
    }
}

/// User declarations about behaviour beyond the finite horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TailFlags {
    pub alpha_integrable: bool,
    pub beta_integrable: bool,
    pub gamma_sup_attained: bool,
}

impl TailFlags {
    pub const NONE: TailFlags = TailFlags {
        alpha_integrable: false,
        beta_integrable: false,
        gamma_sup_attained: false,
    };

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let mut flags = TailFlags::NONE;
        for item in s.split(',').map(str::trim) {
            match item {
                "none" | "" => {}
                "alpha_integrable" => flags.alpha_integrable = true,
                "beta_integrable" => flags.beta_integrable = true,
                "gamma_sup_attained" => flags.gamma_sup_attained = true,
                other => return Err(format!("unknown tail assertion '{other}'")),
            }
        }
        Ok(flags)
    }
}

impl fmt::Display for TailFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names = Vec::new();
        if self.alpha_integrable {
            names.push("alpha_integrable");
        }
        if self.beta_integrable {
            names.push("beta_integrable");
        }
        if self.gamma_sup_attained {
            names.push("gamma_sup_attained");
        }
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub quad_tol: f64,
    pub grid_points: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            quad_tol: DEFAULT_QUAD_TOL,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// A profile plus initial norm, finite horizon and tail assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub profile: CoefficientProfile,
    pub g0: f64,
    pub horizon: f64,
    pub tail: TailFlags,
    pub numerics: Numerics,
}

impl ProblemSpec {
    /// Validates scalars and samples the coefficients on the analysis grid:
    /// every value must be finite and `alpha`, `beta` nonnegative.
    pub fn new(
        profile: CoefficientProfile,
        g0: f64,
        horizon: f64,
        tail: TailFlags,
        numerics: Numerics,
    ) -> Result<Self> {
        if !(g0 >= 0.0) || !g0.is_finite() {
            return Err(Error::Validation(format!("g0 must be finite and >= 0 (got {g0})")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Validation(format!("horizon must be finite and > 0 (got {horizon})")));
        }
        if !(numerics.quad_tol > 0.0) {
            return Err(Error::Validation("quad_tol must be > 0".into()));
        }
        if numerics.grid_points < 3 {
            return Err(Error::Validation("grid_points must be >= 3".into()));
        }
        let spec = ProblemSpec {
            profile,
            g0,
            horizon,
            tail,
            numerics,
        };
        for &t in &spec.grid() {
            let (g, a, b) = (spec.profile.gamma(t), spec.profile.alpha(t), spec.profile.beta(t));
            if !g.is_finite() || !a.is_finite() || !b.is_finite() {
                return Err(Error::Validation(format!(
                    "coefficients must be finite; singular value at t = {t}"
                )));
            }
            if a < 0.0 {
                return Err(Error::Validation(format!("alpha({t}) = {a} < 0")));
            }
            if b < 0.0 {
                return Err(Error::Validation(format!("beta({t}) = {b} < 0")));
            }
        }
        Ok(spec)
    }

    /// Default numerics, no tail assertions.
    pub fn simple(profile: CoefficientProfile, g0: f64, horizon: f64) -> Result<Self> {
        Self::new(profile, g0, horizon, TailFlags::NONE, Numerics::default())
    }

    pub fn with_tail(mut self, tail: TailFlags) -> Self {
        self.tail = tail;
        self
    }

    pub fn with_g0(&self, g0: f64) -> Result<Self> {
        Self::new(self.profile.clone(), g0, self.horizon, self.tail, self.numerics)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.profile.clone(), self.g0, horizon, self.tail, self.numerics)
    }

    pub fn grid(&self) -> Vec<f64> {
        build_grid(
            self.horizon,
            self.numerics.grid_points,
            &self.profile.breakpoints(),
        )
    }

    /// Builds the antiderivative table.
    pub fn prepare(self) -> Result<Problem> {
        let grid = self.grid();
        let table = AntiderivativeTable::build(&self.profile, grid, self.numerics.quad_tol)?;
        Ok(Problem {
            inner: Arc::new(Inner { spec: self, table }),
        })
    }
}

#[derive(Debug)]
struct Inner {
    spec: ProblemSpec,
    table: AntiderivativeTable,
}

/// A validated problem with its antiderivative table. Cheap to clone and
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct Problem {
    inner: Arc<Inner>,
}

/// Result of the sup search for `int_0^t gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupResult {
    pub value: f64,
    pub attained_at: f64,
    /// Set unless the user asserted the sup is attained within the horizon.
    pub tail_caveat: bool,
    /// The running maximum rose over the last half of the horizon at least
    /// as much as over the quarter before it.
    pub unbounded_suspected: bool,
}

/// A horizon-truncated improper integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImproperIntegral {
    pub value: f64,
    pub converged: bool,
    /// Contribution of `[T/2, T]`.
    pub tail: f64,
    pub asserted: bool,
}

/// Growth test shared by the sup and tail checks: `d1` is the increase over
/// `[T/2, T]`, `d0` over `[T/4, T/2]`.
pub(crate) fn keeps_growing(d1: f64, d0: f64, tol: f64) -> bool {
    d1 > tol && d1 >= d0
}

/// Cumulative `int_0^t beta * mu_eps` on the grid, in log space.
#[derive(Debug, Clone)]
pub struct BetaMuTable {
    pub eps: f64,
    /// `eps^(p-1)`
    pub coupling: f64,
    pub log_values: Vec<f64>,
}

impl Problem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.inner.spec
    }

    pub fn profile(&self) -> &CoefficientProfile {
        &self.inner.spec.profile
    }

    pub fn table(&self) -> &AntiderivativeTable {
        &self.inner.table
    }

    pub fn grid(&self) -> &[f64] {
        &self.inner.table.grid
    }

    pub fn horizon(&self) -> f64 {
        self.inner.spec.horizon
    }

    pub fn g0(&self) -> f64 {
        self.inner.spec.g0
    }

    pub fn p(&self) -> f64 {
        self.inner.spec.profile.p
    }

    pub fn quad_tol(&self) -> f64 {
        self.inner.spec.numerics.quad_tol
    }

    pub fn tail(&self) -> TailFlags {
        self.inner.spec.tail
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let h = self.horizon();
        if !(t >= 0.0) || t > h * (1.0 + 1e-12) {
            return Err(Error::TimeOutOfRange { t, horizon: h });
        }
        Ok(t.min(h))
    }

    fn local_tol(&self) -> SimpsonConfig {
        SimpsonConfig::with_tol(0.5 * self.quad_tol())
    }

    /// `int_0^t gamma`, from the nearest grid node plus a local quadrature.
    pub fn cumulative_gamma(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        let tab = self.table();
        let i = segment_of(&tab.grid, t);
        let a = tab.grid[i];
        Ok(tab.gamma[i] + integrate(|s| self.profile().gamma(s), a, t, self.local_tol())?)
    }

    /// `int_0^t alpha`.
    pub fn cumulative_alpha(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        let tab = self.table();
        let i = segment_of(&tab.grid, t);
        Ok(tab.alpha[i] + integrate(|s| self.profile().alpha(s), tab.grid[i], t, self.local_tol())?)
    }

    /// `int_0^t beta`.
    pub fn cumulative_beta(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        let tab = self.table();
        let i = segment_of(&tab.grid, t);
        Ok(tab.beta[i] + integrate(|s| self.profile().beta(s), tab.grid[i], t, self.local_tol())?)
    }

    /// `ln nu(t) = -int_0^t gamma`.
    pub fn log_nu(&self, t: f64) -> Result<f64> {
        Ok(-self.cumulative_gamma(t)?)
    }

    /// `nu(t) = exp(-int_0^t gamma)`.
    pub fn nu(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(1.0);
        }
        checked_exp(self.log_nu(t)?)
    }

    /// `ln mu(t) = -int_0^t (gamma + eps^(p-1) alpha)`.
    pub fn log_mu(&self, eps: f64, t: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Validation(format!("eps must be > 0 (got {eps})")));
        }
        let c = eps.powf(self.p() - 1.0);
        Ok(-self.cumulative_gamma(t)? - c * self.cumulative_alpha(t)?)
    }

    pub fn mu(&self, eps: f64, t: f64) -> Result<f64> {
        let l = self.log_mu(eps, t)?;
        if t == 0.0 {
            return Ok(1.0);
        }
        checked_exp(l)
    }

    fn log_column_at(&self, column: &[f64], kind: Exponential, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        let tab = self.table();
        let i = segment_of(&tab.grid, t);
        let a = tab.grid[i];
        if t == a {
            return Ok(column[i]);
        }
        let scale = kind.wg * tab.gamma[i] + kind.wa * tab.alpha[i];
        let seg = log_scaled_segment(self.profile(), kind, a, t, 0.5 * self.quad_tol())?;
        Ok(log_add_exp(column[i], scale + seg))
    }

    fn alpha_over_nu_kind(&self) -> Exponential {
        Exponential {
            weight: Weight::Alpha,
            wg: self.p() - 1.0,
            wa: 0.0,
        }
    }

    fn beta_nu_kind(&self) -> Exponential {
        Exponential {
            weight: Weight::Beta,
            wg: -1.0,
            wa: 0.0,
        }
    }

    /// `ln int_0^t alpha / nu^(p-1)`.
    pub fn log_int_alpha_over_nu(&self, t: f64) -> Result<f64> {
        let kind = self.alpha_over_nu_kind();
        self.log_column_at(&self.table().log_alpha_over_nu, kind, t)
    }

    pub fn int_alpha_over_nu(&self, t: f64) -> Result<f64> {
        Ok(self.log_int_alpha_over_nu(t)?.exp())
    }

    /// `ln int_0^t beta * nu`.
    pub fn log_int_beta_nu(&self, t: f64) -> Result<f64> {
        let kind = self.beta_nu_kind();
        self.log_column_at(&self.table().log_beta_nu, kind, t)
    }

    pub fn int_beta_nu(&self, t: f64) -> Result<f64> {
        Ok(self.log_int_beta_nu(t)?.exp())
    }

    /// Builds `ln int_0^t beta * mu_eps` on the grid.
    pub fn beta_mu_table(&self, eps: f64) -> Result<BetaMuTable> {
        if !(eps > 0.0) {
            return Err(Error::Validation(format!("eps must be > 0 (got {eps})")));
        }
        let coupling = eps.powf(self.p() - 1.0);
        let tab = self.table();
        let log_values = log_column(
            self.profile(),
            &tab.grid,
            &tab.gamma,
            &tab.alpha,
            self.beta_mu_kind(coupling),
            self.quad_tol(),
        )?;
        Ok(BetaMuTable {
            eps,
            coupling,
            log_values,
        })
    }

    fn beta_mu_kind(&self, coupling: f64) -> Exponential {
        Exponential {
            weight: Weight::Beta,
            wg: -1.0,
            wa: -coupling,
        }
    }

    /// `ln int_0^t beta * mu_eps` at an arbitrary time.
    pub fn log_int_beta_mu(&self, bm: &BetaMuTable, t: f64) -> Result<f64> {
        let kind = self.beta_mu_kind(bm.coupling);
        self.log_column_at(&bm.log_values, kind, t)
    }

    /// `sup_{0 <= t <= T} int_0^t gamma`: grid sweep, then golden-section
    /// refinement on the two segments around the best grid node.
    /// `sup_[0, t] sign * int_0^s gamma`: the grid maximum, refined by golden
    /// section between its neighbours so that windows of different length
    /// are compared without grid bias.
    pub(crate) fn window_sup_cumulative_gamma(&self, sign: f64, t: f64) -> f64 {
        let tab = self.table();
        let k = tab.grid.partition_point(|&g| g <= t).max(1);
        let (i, best) = tab.gamma[..k]
            .iter()
            .map(|g| sign * g)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let lo = tab.grid[i.saturating_sub(1)];
        let hi = tab.grid[(i + 1).min(tab.len() - 1)].min(t);
        if hi <= lo {
            return best;
        }
        let f = |s: f64| self.cumulative_gamma(s).map_or(f64::NEG_INFINITY, |g| sign * g);
        golden_section_max(f, lo, hi, 1e-12 * hi.max(1.0)).1.max(best)
    }

    pub fn sup_cumulative_gamma(&self) -> Result<SupResult> {
        let tab = self.table();
        let (k, &best) = tab
            .gamma
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let lo = tab.grid[k.saturating_sub(1)];
        let hi = tab.grid[(k + 1).min(tab.len() - 1)];
        let mut value = best;
        let mut attained_at = tab.grid[k];
        if hi > lo {
            let f = |t: f64| self.cumulative_gamma(t).unwrap_or(f64::NEG_INFINITY);
            let (t_star, v_star) = golden_section_max(f, lo, hi, 1e-12 * hi.max(1.0));
            if v_star > value {
                value = v_star;
                attained_at = t_star;
            }
        }
        let h = self.horizon();
        let growth_tol = (1e3 * self.quad_tol()).max(1e-6);
        let running = |t: f64| self.window_sup_cumulative_gamma(1.0, t);
        let unbounded_suspected = keeps_growing(
            running(h) - running(0.5 * h),
            running(0.5 * h) - running(0.25 * h),
            growth_tol,
        );
        Ok(SupResult {
            value,
            attained_at,
            tail_caveat: !self.tail().gamma_sup_attained,
            unbounded_suspected,
        })
    }

    /// Horizon-truncated improper integral of a nondecreasing cumulative
    /// function. Converged when the `[T/2, T]` contribution is below
    /// `quad_tol` or the user asserted integrability; divergence is suspected
    /// when that contribution does not shrink relative to `[T/4, T/2]`.
    pub fn improper<F>(&self, cumulative: F, asserted: bool) -> Result<ImproperIntegral>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let h = self.horizon();
        let value = cumulative(h)?;
        let half = cumulative(0.5 * h)?;
        let quarter = cumulative(0.25 * h)?;
        let tail = value - half;
        let previous_tail = half - quarter;
        let tol = self.quad_tol();
        if !value.is_finite() || keeps_growing(tail, previous_tail, tol) {
            return Err(Error::DivergenceSuspected {
                tail,
                previous_tail,
            });
        }
        Ok(ImproperIntegral {
            value,
            converged: tail < tol || asserted,
            tail,
            asserted,
        })
    }

    /// `int_0^T alpha / nu^(p-1)` with the tail check.
    pub fn improper_integral_alpha_over_nu(&self) -> Result<ImproperIntegral> {
        self.improper(|t| self.int_alpha_over_nu(t), self.tail().alpha_integrable)
    }

    /// `int_0^T alpha` with the tail check.
    pub fn improper_integral_alpha(&self) -> Result<ImproperIntegral> {
        self.improper(|t| self.cumulative_alpha(t), self.tail().alpha_integrable)
    }

    /// `int_0^T beta` with the tail check.
    pub fn improper_integral_beta(&self) -> Result<ImproperIntegral> {
        self.improper(|t| self.cumulative_beta(t), self.tail().beta_integrable)
    }
}

pub(crate) fn checked_exp(x: f64) -> Result<f64> {
    if x.abs() > MAX_EXP {
        Err(Error::OverflowGuard { log_value: x })
    } else {
        Ok(x.exp())
    }
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
pub(crate) fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let mut best = (c, fc);
    for x in [a, b, d] {
        let v = if x == d { fd } else { f(x) };
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn problem(gamma: &str, alpha: &str, beta: &str, p: f64, g0: f64, horizon: f64) -> Problem {
        let profile = CoefficientProfile::parse(gamma, alpha, beta, p).unwrap();
        ProblemSpec::simple(profile, g0, horizon).unwrap().prepare().unwrap()
    }

    /// Composite Simpson with Richardson extrapolation on a fixed fine step.
    fn simpson_oracle<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let simpson = |n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let coarse = simpson(n);
        let fine = simpson(2 * n);
        fine + (fine - coarse) / 15.0
    }

    #[test]
    fn cumulative_gamma_closed_forms() {
        let pr = problem("sin", "0", "0", 2.0, 1.0, 10.0);
        assert!((pr.cumulative_gamma(PI).unwrap() - 2.0).abs() < 1e-9);
        let pr = problem("0", "0", "0", 2.0, 1.0, 10.0);
        assert_eq!(pr.cumulative_gamma(7.3).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_gamma_matches_simpson_oracle() {
        let pr = problem("sin(t) / (1 + t)^0.5", "0", "0", 2.0, 1.0, 10.0);
        let oracle = simpson_oracle(|t| t.sin() / (1.0 + t).sqrt(), 0.0, 10.0, 20_000);
        assert!((pr.cumulative_gamma(10.0).unwrap() - oracle).abs() < 1e-9);
        let oracle = simpson_oracle(|t| t.sin() / (1.0 + t).sqrt(), 0.0, 3.3, 20_000);
        assert!((pr.cumulative_gamma(3.3).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn time_out_of_range() {
        let pr = problem("0", "0", "0", 2.0, 1.0, 5.0);
        assert!(matches!(pr.cumulative_gamma(5.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(pr.nu(-1.0), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn nu_closed_forms() {
        let pr = problem("const(-1)", "0", "0", 2.0, 1.0, 5.0);
        assert!((pr.nu(2.0).unwrap() - 2f64.exp()).abs() < 1e-8);
        assert_eq!(pr.nu(0.0).unwrap(), 1.0);
        let pr = problem("sin", "0", "0", 2.0, 1.0, 5.0);
        assert!((pr.nu(PI).unwrap() - (-2f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn nu_overflow_is_guarded() {
        let pr = problem("const(-1)", "0", "0", 2.0, 1.0, 1000.0);
        assert!(matches!(pr.nu(900.0), Err(Error::OverflowGuard { .. })));
        assert!((pr.log_nu(900.0).unwrap() - 900.0).abs() < 1e-6);
    }

    #[test]
    fn mu_closed_forms_and_oracle() {
        let pr = problem("0", "1", "0", 2.0, 1.0, 10.0);
        assert!((pr.mu(0.1, 10.0).unwrap() - (-1f64).exp()).abs() < 1e-10);

        let pr = problem("sin", "0", "0", 2.0, 1.0, 10.0);
        for &t in &[0.5, 3.0, 9.0] {
            assert!((pr.mu(0.1, t).unwrap() - pr.nu(t).unwrap()).abs() < 1e-15);
        }

        let pr = problem("sin", "power_decay(2)", "0", 2.0, 1.0, 10.0);
        let exponent = simpson_oracle(|t| t.sin() + 0.1 / (1.0 + t).powi(2), 0.0, 5.0, 20_000);
        assert!((pr.mu(0.1, 5.0).unwrap() - (-exponent).exp()).abs() < 1e-9);
    }

    #[test]
    fn sup_of_sine() {
        let pr = problem("sin", "0", "0", 2.0, 1.0, 100.0);
        let s = pr.sup_cumulative_gamma().unwrap();
        assert!((s.value - 2.0).abs() < 1e-9);
        let phase = s.attained_at.rem_euclid(2.0 * PI);
        assert!((phase - PI).abs() < 1e-4, "attained at {}", s.attained_at);
        assert!(s.tail_caveat);
        assert!(!s.unbounded_suspected);

        let spec = pr.spec().clone().with_tail(TailFlags::parse("gamma_sup_attained").unwrap());
        let s = spec.prepare().unwrap().sup_cumulative_gamma().unwrap();
        assert!(!s.tail_caveat);
    }

    #[test]
    fn sup_of_decreasing_antiderivative() {
        let pr = problem("const(-1)", "0", "0", 2.0, 1.0, 100.0);
        let s = pr.sup_cumulative_gamma().unwrap();
        assert!(s.value.abs() < 1e-12);
        assert!(s.attained_at < 1e-6);
    }

    #[test]
    fn sup_of_damped_sine_matches_dense_sweep() {
        let pr = problem("sin_damped(0.9)", "0", "0", 2.0, 1.0, 30.0);
        let s = pr.sup_cumulative_gamma().unwrap();
        // Dense sweep at step 1e-3, then a 1e-7 sweep around the best node.
        let f = |t: f64| t.sin() / (1.0 + t).powf(0.9);
        let h = 1e-3;
        let mut acc = 0.0f64;
        let mut best = (0.0f64, 0usize, 0.0f64);
        for i in 0..30_000 {
            let t = i as f64 * h;
            let before = acc;
            acc += simpson_oracle(f, t, t + h, 2);
            if acc > best.0 {
                best = (acc, i, before);
            }
        }
        let (_, i, mut acc) = best;
        let start = i.saturating_sub(1) as f64 * h;
        if i > 0 {
            acc -= simpson_oracle(f, start, start + h, 2);
        }
        let mut best = best.0;
        let fine = 1e-7;
        for k in 0..30_000 {
            let t = start + k as f64 * fine;
            acc += simpson_oracle(f, t, t + fine, 1);
            best = best.max(acc);
        }
        assert!((s.value - best).abs() < 1e-8, "{} vs {}", s.value, best);
        assert!(!s.unbounded_suspected);
    }

    #[test]
    fn unbounded_growth_is_flagged() {
        let pr = problem("const(1)", "0", "0", 2.0, 1.0, 100.0);
        assert!(pr.sup_cumulative_gamma().unwrap().unbounded_suspected);
        let pr = problem("power_decay(2)", "0", "0", 2.0, 1.0, 100.0);
        assert!(!pr.sup_cumulative_gamma().unwrap().unbounded_suspected);
        let pr = problem("power_decay(1)", "0", "0", 2.0, 1.0, 100.0);
        assert!(pr.sup_cumulative_gamma().unwrap().unbounded_suspected);
    }

    #[test]
    fn improper_integral_closed_forms() {
        let pr = problem("0", "exp_decay(1)", "0", 3.0, 1.0, 100.0);
        let i = pr.improper_integral_alpha_over_nu().unwrap();
        assert!((i.value - 1.0).abs() < 1e-9);
        assert!(i.converged);

        let pr = problem("const(-1)", "exp_decay(2)", "0", 2.0, 1.0, 100.0);
        let i = pr.improper_integral_alpha_over_nu().unwrap();
        assert!((i.value - 1.0 / 3.0).abs() < 1e-9);
        assert!(i.converged);

        let pr = problem("const(1)", "const(1)", "0", 2.0, 1.0, 100.0);
        assert!(matches!(
            pr.improper_integral_alpha_over_nu(),
            Err(Error::DivergenceSuspected { .. })
        ));
    }

    #[test]
    fn slow_tail_needs_an_assertion() {
        let pr = problem("0", "power_decay(2)", "0", 2.0, 1.0, 100.0);
        let i = pr.improper_integral_alpha().unwrap();
        assert!(!i.converged);
        assert!((i.value - (1.0 - 1.0 / 101.0)).abs() < 1e-9);
        let spec = pr.spec().clone().with_tail(TailFlags::parse("alpha_integrable").unwrap());
        let i = spec.prepare().unwrap().improper_integral_alpha().unwrap();
        assert!(i.converged && i.asserted);
    }

    #[test]
    fn log_space_columns_survive_huge_factors() {
        // nu = e^t grows to e^1000; int beta nu = e^1000 - 1.
        let pr = problem("const(-1)", "0", "const(1)", 2.0, 1.0, 1000.0);
        let l = pr.log_int_beta_nu(1000.0).unwrap();
        assert!((l - 1000.0).abs() < 1e-9, "{l}");
        let l = pr.log_int_beta_nu(500.5).unwrap();
        assert!((l - 500.5).abs() < 1e-9, "{l}");
    }

    #[test]
    fn interior_columns_match_closed_forms() {
        let pr = problem("const(-1)", "exp_decay(2)", "exp_decay(2)", 2.0, 1.0, 10.0);
        for &t in &[0.0f64, 0.013, 1.234, 9.99] {
            let aon = (1.0 - (-3.0 * t).exp()) / 3.0;
            assert!((pr.int_alpha_over_nu(t).unwrap() - aon).abs() < 1e-10);
            let bnu = 1.0 - (-t).exp();
            assert!((pr.int_beta_nu(t).unwrap() - bnu).abs() < 1e-10);
        }
    }

    #[test]
    fn table_refinement_is_stable() {
        let profile = CoefficientProfile::parse("sin_damped(0.5)", "power_decay(2)", "exp_decay(1)", 2.0).unwrap();
        let coarse = ProblemSpec::simple(profile.clone(), 1.0, 20.0).unwrap().prepare().unwrap();
        let numerics = Numerics {
            grid_points: 2 * DEFAULT_GRID_POINTS - 1,
            ..Numerics::default()
        };
        let fine = ProblemSpec::new(profile, 1.0, 20.0, TailFlags::NONE, numerics)
            .unwrap()
            .prepare()
            .unwrap();
        let tol = DEFAULT_QUAD_TOL;
        for &t in coarse.grid() {
            assert!((coarse.cumulative_gamma(t).unwrap() - fine.cumulative_gamma(t).unwrap()).abs() < tol);
            assert!((coarse.int_alpha_over_nu(t).unwrap() - fine.int_alpha_over_nu(t).unwrap()).abs() < tol);
            assert!((coarse.int_beta_nu(t).unwrap() - fine.int_beta_nu(t).unwrap()).abs() < tol);
        }
    }

    #[test]
    fn validation_rejects_bad_profiles() {
        let bad = |g: &str, a: &str, b: &str| {
            let profile = CoefficientProfile::parse(g, a, b, 2.0).unwrap();
            ProblemSpec::simple(profile, 1.0, 10.0)
        };
        assert!(matches!(bad("0", "const(-1)", "0"), Err(Error::Validation(_))));
        assert!(matches!(bad("0", "0", "sin"), Err(Error::Validation(_))));
        assert!(matches!(bad("1 / (t - 5)", "0", "0"), Err(Error::Validation(_))));
        assert!(matches!(
            CoefficientProfile::parse("0", "0", "0", 1.0),
            Err(Error::Validation(_))
        ));
        let ok = CoefficientProfile::parse("0", "0", "0", 2.0).unwrap();
        assert!(ProblemSpec::simple(ok.clone(), -0.1, 10.0).is_err());
        assert!(ProblemSpec::simple(ok, 0.1, 0.0).is_err());
    }
}
