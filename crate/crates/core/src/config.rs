//! Experiment configuration: file schema (TOML or JSON) and the compact
//! command-line shorthand for distributions.
//!
//! File layout:
//!
//! ```toml
//! [policy]
//! kind = "control"        # linear | constant | control
//! # cutoff = 4            # linear majorant only
//!
//! [arrival]
//! lambda = 1.0
//!
//! [retrial]
//! kind = "exponential"
//! params = { rate = 1.0 }
//!
//! [service]
//! kind = "iid"
//! params = { dist = { kind = "exponential", params = { rate = 2.5 } } }
//!
//! [run]
//! horizon = 100000
//! replications = 20
//! seed = 42
//! # out = "results/"
//! ```
//!
//! Shorthand grammar (CLI flags): `exp:RATE`, `hyper:P,THETA`,
//! `genhyper:W1,R1,W2,R2,...`, `erlang:SHAPE,RATE`, `det:VALUE`,
//! `lognormal:LOCATION,SCALE`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::RetrialSpec;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyConfig};
use crate::service::ServiceModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySection {
    pub kind: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrivalSection {
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn default_horizon() -> usize {
    100_000
}

fn default_replications() -> usize {
    20
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            replications: default_replications(),
            seed: 0,
            out: None,
        }
    }
}

/// Top-level experiment description as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub policy: PolicySection,
    pub arrival: ArrivalSection,
    pub retrial: RetrialSpec,
    pub service: ServiceModel,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn to_policy_config(&self) -> Result<PolicyConfig> {
        let config = PolicyConfig {
            policy: self.policy.kind,
            lambda: self.arrival.lambda,
            retrial: self.retrial.clone(),
            service: self.service.clone(),
            cutoff: self.policy.cutoff,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Load a config file; the format is chosen by extension (`.toml` /
/// `.json`), with a fallback that tries both.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let parsed: ExperimentConfig = match ext.as_str() {
        "toml" => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        "json" => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        _ => toml::from_str(&text)
            .map_err(|e| e.to_string())
            .or_else(|toml_err| {
                serde_json::from_str(&text)
                    .map_err(|json_err| format!("not TOML ({toml_err}) nor JSON ({json_err})"))
            })
            .map_err(Error::Config)?,
    };
    parsed.to_policy_config()?;
    Ok(parsed)
}

/// Parse the compact `kind:params` distribution shorthand.
pub fn parse_retrial_shorthand(text: &str) -> Result<RetrialSpec> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expected kind:params, got `{text}`")))?;
    let nums: Vec<f64> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number `{p}` in `{text}`")))
            })
            .collect::<Result<_>>()?
    };
    let want = |n: usize| -> Result<()> {
        if nums.len() != n {
            return Err(Error::Config(format!(
                "`{kind}` takes {n} parameter(s), got {}",
                nums.len()
            )));
        }
        Ok(())
    };
    match kind.trim().to_ascii_lowercase().as_str() {
        "exp" | "exponential" => {
            want(1)?;
            RetrialSpec::exponential(nums[0])
        }
        "hyper" | "hyperexponential" => {
            want(2)?;
            RetrialSpec::hyperexponential(nums[0], nums[1])
        }
        "genhyper" | "general_hyperexp" => {
            if nums.len() < 2 || nums.len() % 2 != 0 {
                return Err(Error::Config(
                    "`genhyper` takes weight,rate pairs: w1,r1,w2,r2,...".into(),
                ));
            }
            let weights = nums.iter().step_by(2).copied().collect();
            let rates = nums.iter().skip(1).step_by(2).copied().collect();
            RetrialSpec::general_hyperexp(weights, rates)
        }
        "erlang" => {
            want(2)?;
            if nums[0].fract() != 0.0 || nums[0] < 1.0 {
                return Err(Error::Config("erlang shape must be a positive integer".into()));
            }
            RetrialSpec::erlang(nums[0] as u32, nums[1])
        }
        "det" | "deterministic" => {
            want(1)?;
            RetrialSpec::deterministic(nums[0])
        }
        "lognormal" | "lognorm" => {
            want(2)?;
            RetrialSpec::lognormal(nums[0], nums[1])
        }
        other => Err(Error::Config(format!("unknown distribution kind `{other}`"))),
    }
}

/// Service shorthand: a distribution shorthand means i.i.d. service with
/// that law; Markov-modulated and moving-average models come from config
/// files.
pub fn parse_service_shorthand(text: &str) -> Result<ServiceModel> {
    ServiceModel::iid(parse_retrial_shorthand(text)?)
}
