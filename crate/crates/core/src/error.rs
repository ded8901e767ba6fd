use thiserror::Error;

/// Errors raised by profile loading, quadrature, certificates and integrators.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid problem: {0}")]
    Validation(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("adaptive quadrature on [{a}, {b}] did not converge: {reason}")]
    QuadratureDivergence { a: f64, b: f64, reason: String },

    #[error("exponent {log_value} exceeds the f64 range; use the log-space evaluator")]
    OverflowGuard { log_value: f64 },

    #[error("integral suspected divergent: tail over [T/2, T] = {tail}, over [T/4, T/2] = {previous_tail}")]
    DivergenceSuspected { tail: f64, previous_tail: f64 },

    #[error("initial norm g0 must be positive")]
    ZeroInitialNorm,

    #[error("the closed-form Bernoulli solution requires beta identically zero")]
    ProfileHasBeta,

    #[error("step size collapsed to {step} at t = {t} (near-singularity)")]
    StepUnderflow { t: f64, step: f64 },

    #[error("blow-up disagreement: integrator reports {integrator:?}, closed form reports {closed_form:?}")]
    BlowUpDisagreement {
        integrator: Option<f64>,
        closed_form: Option<f64>,
    },

    #[error("state dimension {0} is too small (need n >= 2)")]
    DimensionTooSmall(usize),

    #[error("gamma vanishes on {fraction:.1}% of the last-decade grid points; ratio test inapplicable")]
    GammaVanishes { fraction: f64 },

    #[error("worst-case nonlinearity requires p >= 2 (got p = {0})")]
    WorstCaseRequiresP2(f64),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
