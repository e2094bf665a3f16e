//! Monte Carlo stability classification.
//!
//! Runs independent replications of an embedded chain, fits the
//! least-squares slope of `Q_n` on `n` over the final half of each run,
//! bootstraps a confidence interval for the mean slope at the replication
//! level, and measures how often the chain sits in a low set `Q <= K0`.
//!
//! Verdict rule: Unstable when the slope CI lies strictly above a
//! negligible-slope tolerance; Stable when the CI intersects the
//! tolerance band around zero and the low-set frequency clears the floor;
//! Inconclusive otherwise. The tolerance (default `1 / horizon`, i.e. a
//! predicted rise of one customer over the whole run) absorbs the
//! hair-thin slope noise of stationary but autocorrelated paths, which a
//! literal contains-zero test trips over at realistic replication counts.
//! Zero-drift boundaries legitimately land in Inconclusive: a vanishing
//! drift does not by itself decide between a proper and an improper limit.
//!
//! Divergence-guard trips (orbit cap for the SRS, event budget for the
//! event-driven engine) count as unstable evidence, never as failures.

use serde::{Deserialize, Serialize};

use crate::des::{run_des, DesOptions};
use crate::error::Result;
use crate::policy::PolicyConfig;
use crate::rng::RngStream;
use crate::srs::{run_chain, tail_slope, ChainKind, SimOptions};

/// Which engine realizes the chain being classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// The policy's embedded stochastic recursion (linear policy: its
    /// majorant chain, which needs a cutoff).
    Srs,
    /// Embedded orbit sizes extracted from the event-driven simulation.
    Des,
    /// The no-retrial comparison queue.
    NoRetrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    Stable,
    Unstable,
    Inconclusive,
}

/// Classification outcome with its evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub class: VerdictClass,
    /// Mean of per-replication tail slopes (orbit customers per step).
    pub slope: f64,
    /// Bootstrap confidence interval for the slope at `ci_level`.
    pub slope_ci: (f64, f64),
    pub ci_level: f64,
    /// Pooled fraction of final-half steps with `Q <= low_set`.
    pub low_set_frequency: f64,
    pub replications: usize,
    /// Replications whose divergence guard tripped.
    pub diverged: usize,
}

/// Knobs for [`classify`]; the defaults match the documented protocol
/// (20 replications of 1e5 steps, K0 = 5, 1% floor, 99% bootstrap CI).
#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub engine: Engine,
    pub replications: usize,
    pub horizon: usize,
    pub low_set: u64,
    pub low_floor: f64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    /// First substream id; replication `i` uses `base_stream + i`.
    pub base_stream: u64,
    /// Event budget per replication for the event-driven engine.
    pub max_events: u64,
    /// Slopes within this band around zero count as "no growth";
    /// `None` defaults to `1 / horizon`.
    pub slope_tolerance: Option<f64>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Srs,
            replications: 20,
            horizon: 100_000,
            low_set: 5,
            low_floor: 0.01,
            bootstrap_resamples: 1000,
            ci_level: 0.99,
            base_stream: 0,
            max_events: 20_000_000,
            slope_tolerance: None,
        }
    }
}

impl ClassifyOptions {
    pub fn engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn replications(mut self, r: usize) -> Self {
        self.replications = r;
        self
    }

    pub fn horizon(mut self, n: usize) -> Self {
        self.horizon = n;
        self
    }
}

struct Replication {
    slope: f64,
    low_frequency: f64,
    diverged: bool,
}

fn run_replication(
    config: &PolicyConfig,
    opts: &ClassifyOptions,
    seed: u64,
    stream: u64,
) -> Result<Replication> {
    let states: Vec<u64>;
    let diverged;
    match opts.engine {
        Engine::Srs | Engine::NoRetrial => {
            let kind = match opts.engine {
                Engine::NoRetrial => ChainKind::NoRetrial,
                _ => ChainKind::for_policy(config.policy),
            };
            let sim = SimOptions::new(opts.horizon).stream(stream);
            let traj = run_chain(config, kind, seed, &sim)?;
            diverged = traj.diverged_at.is_some();
            states = traj.states;
        }
        Engine::Des => {
            config.require_positive_lambda()?;
            let des = DesOptions {
                max_events: opts.max_events,
                stream,
                ..Default::default()
            };
            let run = run_des(config, opts.horizon as u64, seed, &des)?;
            diverged = run.diverged;
            states = run.embedded;
        }
    }
    let slope = tail_slope(&states);
    let tail = &states[states.len() / 2..];
    let low = tail.iter().filter(|q| **q <= opts.low_set).count() as f64 / tail.len() as f64;
    Ok(Replication {
        slope,
        low_frequency: low,
        diverged,
    })
}

/// Classify a configuration as Stable / Unstable / Inconclusive.
pub fn classify(config: &PolicyConfig, opts: &ClassifyOptions, seed: u64) -> Result<Verdict> {
    assert!(opts.replications >= 2, "need at least two replications");
    config.validate()?;
    let mut reps = Vec::with_capacity(opts.replications);
    for i in 0..opts.replications {
        reps.push(run_replication(
            config,
            opts,
            seed,
            opts.base_stream + i as u64,
        )?);
    }
    let slopes: Vec<f64> = reps.iter().map(|r| r.slope).collect();
    let slope = mean(&slopes);
    let low_set_frequency = mean(&reps.iter().map(|r| r.low_frequency).collect::<Vec<_>>());
    let diverged = reps.iter().filter(|r| r.diverged).count();

    // Replication-level bootstrap for the mean slope. The resampling
    // stream is disjoint from the replication streams.
    let mut boot_rng = RngStream::new(seed, opts.base_stream ^ (0xB007_5EED_u64 << 24));
    let mut means = Vec::with_capacity(opts.bootstrap_resamples);
    for _ in 0..opts.bootstrap_resamples {
        let mut acc = 0.0;
        for _ in 0..slopes.len() {
            let idx = (boot_rng.uniform() * slopes.len() as f64) as usize;
            acc += slopes[idx.min(slopes.len() - 1)];
        }
        means.push(acc / slopes.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - opts.ci_level) / 2.0;
    let lo_idx = ((means.len() as f64 * alpha) as usize).min(means.len() - 1);
    let hi_idx = ((means.len() as f64 * (1.0 - alpha)) as usize).min(means.len() - 1);
    let slope_ci = (means[lo_idx], means[hi_idx]);

    // A majority of divergence-guard trips is unstable evidence on its own.
    let tol = opts
        .slope_tolerance
        .unwrap_or(1.0 / opts.horizon as f64)
        .abs();
    let class = if diverged * 2 >= opts.replications {
        VerdictClass::Unstable
    } else if slope_ci.0 > tol {
        VerdictClass::Unstable
    } else if slope_ci.0 <= tol && slope_ci.1 >= -tol && low_set_frequency >= opts.low_floor {
        VerdictClass::Stable
    } else {
        VerdictClass::Inconclusive
    };
    Ok(Verdict {
        class,
        slope,
        slope_ci,
        ci_level: opts.ci_level,
        low_set_frequency,
        replications: opts.replications,
        diverged,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RetrialSpec;
    use crate::policy::Policy;
    use crate::service::ServiceModel;

    fn control_config(mean_service: f64) -> PolicyConfig {
        PolicyConfig {
            policy: Policy::Control,
            lambda: 1.0,
            retrial: RetrialSpec::exponential(1.0).unwrap(),
            service: ServiceModel::iid(RetrialSpec::exponential(1.0 / mean_service).unwrap())
                .unwrap(),
            cutoff: None,
        }
    }

    #[test]
    fn stable_and_unstable_control_verdicts() {
        let opts = ClassifyOptions::default().replications(8).horizon(30_000);
        let stable = classify(&control_config(0.4), &opts, 500).unwrap();
        assert_eq!(stable.class, VerdictClass::Stable, "{stable:?}");
        let unstable = classify(&control_config(0.6), &opts, 500).unwrap();
        assert_eq!(unstable.class, VerdictClass::Unstable, "{unstable:?}");
        assert!((unstable.slope - 0.1).abs() < 0.03, "slope {}", unstable.slope);
    }

    #[test]
    fn verdicts_are_deterministic() {
        let opts = ClassifyOptions::default().replications(5).horizon(5_000);
        let a = classify(&control_config(0.45), &opts, 7).unwrap();
        let b = classify(&control_config(0.45), &opts, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn des_engine_classifies_stable_linear_policy() {
        let config = PolicyConfig {
            policy: Policy::Linear,
            lambda: 0.5,
            retrial: RetrialSpec::exponential(1.0).unwrap(),
            service: ServiceModel::iid(RetrialSpec::exponential(1.0).unwrap()).unwrap(),
            cutoff: None,
        };
        let opts = ClassifyOptions {
            engine: Engine::Des,
            replications: 5,
            horizon: 10_000,
            ..Default::default()
        };
        let verdict = classify(&config, &opts, 11).unwrap();
        assert_eq!(verdict.class, VerdictClass::Stable, "{verdict:?}");
    }

    #[test]
    fn noretrial_engine_matches_classical_boundary() {
        let opts = ClassifyOptions {
            engine: Engine::NoRetrial,
            replications: 6,
            horizon: 30_000,
            ..Default::default()
        };
        let stable = classify(&control_config(0.8), &opts, 13).unwrap();
        assert_eq!(stable.class, VerdictClass::Stable, "{stable:?}");
        let unstable = classify(&control_config(1.2), &opts, 13).unwrap();
        assert_eq!(unstable.class, VerdictClass::Unstable, "{unstable:?}");
    }
}
