//! Numerical stability analysis for evolution equations
//! `u' = A(t)u + G(t,u) + f(t)` whose operators are bounded by
//! `Re<u, A(t)u> <= gamma(t)|u|^2`, `|G(t,u)| <= alpha(t)|u|^p` and
//! `|f(t)| <= beta(t)`.
//!
//! * [`coefficients`]: profiles, configs, cumulative integrals and integrating factors.
//! * [`certificates`]: hypothesis checks, derived constants and envelopes.
//! * [`comparison`]: the scalar comparison ODE and its closed-form Bernoulli solution.
//! * [`systems`]: sharp finite-dimensional test systems.
//! * [`cli`]: the command-line driver.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod cli;
pub mod coefficients;
pub mod comparison;
pub mod error;
pub mod ode;
pub mod quadrature;
pub mod systems;

pub use coefficients::{CoefficientProfile, Problem, ProblemSpec, TailFlags};
pub use error::{Error, Result};
pub use ode::{BlowUpEvent, IntegratorConfig, IntegratorStats};
