//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Distribution or model parameters outside the admissible range.
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// A theorem hypothesis does not hold for the requested inputs
    /// (e.g. lattice retrial times under the constant policy).
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    /// Quadrature or root finding failed to reach the requested accuracy.
    #[error("numeric failure in {what}: achieved error {achieved:.3e}, required {required:.3e}")]
    NumericFailure {
        what: &'static str,
        achieved: f64,
        required: f64,
    },

    /// The orbit counter exceeded its documented bound.
    #[error("chain diverged at step {step}: orbit size reached the guard bound")]
    Diverged { step: usize },

    /// An event-driven run ended (time or event budget) with no service completion.
    #[error("no service completions occurred within the run limits")]
    NoCompletions,

    /// Bisection bracket endpoints did not classify to opposite verdicts.
    #[error("bad bracket: {0}")]
    BadBracket(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
