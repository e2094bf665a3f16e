//! Retrial policies and the shared experiment configuration.

use serde::{Deserialize, Serialize};

use crate::dist::RetrialSpec;
use crate::error::{Error, Result};
use crate::service::ServiceModel;

/// The three retrial disciplines.
///
/// Linear: every orbit customer retries independently. Constant: one
/// orbit-wide renewal clock runs regardless of server state. Control: a
/// single fresh retrial clock starts at each service completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Linear,
    Constant,
    Control,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Policy::Linear => "linear",
            Policy::Constant => "constant",
            Policy::Control => "control",
        };
        f.write_str(name)
    }
}

/// Full description of one retrial-queue setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Poisson arrival rate.
    pub lambda: f64,
    /// Retrial / orbit-time distribution.
    pub retrial: RetrialSpec,
    /// Service-time sequence generator.
    pub service: ServiceModel,
    /// Majorant cutoff, used by the linear-policy auxiliary chain only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u32>,
}

impl PolicyConfig {
    /// Checks parameter admissibility and the per-policy hypotheses.
    ///
    /// `lambda = 0` is admitted for degenerate no-arrival simulations;
    /// analytics and event-driven runs reject it separately.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameters(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        self.retrial.validate()?;
        self.service.validate()?;
        if self.policy == Policy::Constant && !self.retrial.is_nonlattice() {
            return Err(Error::HypothesisViolation(
                "constant policy requires a nonlattice retrial distribution".into(),
            ));
        }
        if let Some(c) = self.cutoff {
            if c < 1 {
                return Err(Error::InvalidParameters("cutoff must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn require_positive_lambda(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::HypothesisViolation(
                "this operation requires lambda > 0".into(),
            ));
        }
        Ok(())
    }
}
