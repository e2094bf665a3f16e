//! Stationary ergodic service-time sequences with known long-run means.
//!
//! The stability theorems only need strict-sense stationarity and
//! ergodicity of the service sequence, so alongside i.i.d. draws this
//! module ships two dependent examples: a Markov-modulated model whose
//! state chain starts from its stationary law, and an overlapping
//! moving-average model.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::dist::RetrialSpec;
use crate::error::{Error, Result};
use crate::rng::RngStream;

const STATIONARY_RESIDUAL: f64 = 1e-12;

/// Descriptor of a service-time sequence generator.
///
/// Serializes like [`RetrialSpec`]: `{"kind": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ServiceModel {
    /// Independent draws from a positive distribution.
    Iid { dist: RetrialSpec },
    /// Exponential service at a per-state rate, modulated by a discrete-time
    /// Markov chain stepped once per service. The chain starts from its
    /// stationary distribution, so the sequence is stationary from step 0.
    MarkovModulated {
        transition: Vec<Vec<f64>>,
        rates: Vec<f64>,
    },
    /// Average of the last `window` i.i.d. base draws (overlapping windows).
    MovingAverage { base: RetrialSpec, window: u32 },
}

impl ServiceModel {
    pub fn iid(dist: RetrialSpec) -> Result<Self> {
        let model = ServiceModel::Iid { dist };
        model.validate()?;
        Ok(model)
    }

    pub fn markov_modulated(transition: Vec<Vec<f64>>, rates: Vec<f64>) -> Result<Self> {
        let model = ServiceModel::MarkovModulated { transition, rates };
        model.validate()?;
        Ok(model)
    }

    pub fn moving_average(base: RetrialSpec, window: u32) -> Result<Self> {
        let model = ServiceModel::MovingAverage { base, window };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ServiceModel::Iid { dist } => dist.validate(),
            ServiceModel::MarkovModulated { transition, rates } => {
                let k = rates.len();
                if k == 0 {
                    return Err(Error::InvalidParameters(
                        "markov_modulated needs at least one state".into(),
                    ));
                }
                if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
                    return Err(Error::InvalidParameters(
                        "markov_modulated rates must be > 0".into(),
                    ));
                }
                if transition.len() != k {
                    return Err(Error::InvalidParameters(format!(
                        "transition matrix must be {k}x{k}"
                    )));
                }
                for row in transition {
                    if row.len() != k {
                        return Err(Error::InvalidParameters(format!(
                            "transition matrix must be {k}x{k}"
                        )));
                    }
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(Error::InvalidParameters(
                            "transition probabilities must be nonnegative".into(),
                        ));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidParameters(format!(
                            "transition rows must sum to 1, got {sum}"
                        )));
                    }
                }
                if !irreducible(transition) {
                    return Err(Error::InvalidParameters(
                        "transition matrix must be irreducible".into(),
                    ));
                }
                Ok(())
            }
            ServiceModel::MovingAverage { base, window } => {
                base.validate()?;
                if *window < 1 {
                    return Err(Error::InvalidParameters(
                        "moving_average window must be >= 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Exact long-run mean of the generated sequence.
    pub fn long_run_mean(&self) -> f64 {
        match self {
            ServiceModel::Iid { dist } => dist.mean(),
            ServiceModel::MarkovModulated { transition, rates } => {
                let pi = stationary_distribution(transition);
                pi.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            ServiceModel::MovingAverage { base, .. } => base.mean(),
        }
    }

    /// Stationary distribution of the modulating chain (states in order).
    pub fn stationary_distribution(&self) -> Option<Vec<f64>> {
        match self {
            ServiceModel::MarkovModulated { transition, .. } => {
                Some(stationary_distribution(transition))
            }
            _ => None,
        }
    }

    /// Same model with all service times multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<ServiceModel> {
        let model = match self {
            ServiceModel::Iid { dist } => ServiceModel::Iid {
                dist: dist.scaled(factor)?,
            },
            ServiceModel::MarkovModulated { transition, rates } => {
                if !(factor.is_finite() && factor > 0.0) {
                    return Err(Error::InvalidParameters(format!(
                        "scale factor must be > 0, got {factor}"
                    )));
                }
                ServiceModel::MarkovModulated {
                    transition: transition.clone(),
                    rates: rates.iter().map(|r| r / factor).collect(),
                }
            }
            ServiceModel::MovingAverage { base, window } => ServiceModel::MovingAverage {
                base: base.scaled(factor)?,
                window: *window,
            },
        };
        Ok(model)
    }

    /// Same model rescaled so the long-run mean equals `target`.
    pub fn with_mean(&self, target: f64) -> Result<ServiceModel> {
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "target mean must be > 0, got {target}"
            )));
        }
        self.scaled(target / self.long_run_mean())
    }

    /// Start a sequential generator; Markov state is drawn from the
    /// stationary law and moving-average windows are prefilled so the
    /// output is stationary from the first draw.
    pub fn start(&self, rng: &mut RngStream) -> ServiceProcess {
        let state = match self {
            ServiceModel::Iid { .. } => GenState::Iid,
            ServiceModel::MarkovModulated { transition, .. } => {
                let pi = stationary_distribution(transition);
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut state = pi.len() - 1;
                for (i, p) in pi.iter().enumerate() {
                    acc += p;
                    if u <= acc {
                        state = i;
                        break;
                    }
                }
                GenState::Markov { current: state }
            }
            ServiceModel::MovingAverage { base, window } => {
                let mut buf = VecDeque::with_capacity(*window as usize);
                for _ in 0..window.saturating_sub(1) {
                    buf.push_back(base.sample(rng));
                }
                GenState::Ma { buf }
            }
        };
        ServiceProcess {
            model: self.clone(),
            state,
        }
    }
}

#[derive(Debug, Clone)]
enum GenState {
    Iid,
    Markov { current: usize },
    Ma { buf: VecDeque<f64> },
}

/// Stateful generator of one service-time sequence.
#[derive(Debug, Clone)]
pub struct ServiceProcess {
    model: ServiceModel,
    state: GenState,
}

impl ServiceProcess {
    /// Next service duration; successive calls form the stationary sequence.
    pub fn next_service(&mut self, rng: &mut RngStream) -> f64 {
        match (&self.model, &mut self.state) {
            (ServiceModel::Iid { dist }, GenState::Iid) => dist.sample(rng),
            (ServiceModel::MarkovModulated { transition, rates }, GenState::Markov { current }) => {
                let duration = rng.exponential(rates[*current]);
                let u = rng.uniform();
                let row = &transition[*current];
                let mut acc = 0.0;
                let mut next = row.len() - 1;
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u <= acc {
                        next = j;
                        break;
                    }
                }
                *current = next;
                duration
            }
            (ServiceModel::MovingAverage { base, window }, GenState::Ma { buf }) => {
                buf.push_back(base.sample(rng));
                if buf.len() > *window as usize {
                    buf.pop_front();
                }
                buf.iter().sum::<f64>() / buf.len() as f64
            }
            _ => unreachable!("generator state matches its model"),
        }
    }
}

/// Stationary distribution of a row-stochastic irreducible matrix, by
/// direct solve of pi P = pi with the normalization row substituted in.
fn stationary_distribution(transition: &[Vec<f64>]) -> Vec<f64> {
    let k = transition.len();
    if k == 1 {
        return vec![1.0];
    }
    // Build A = P^T - I with the last equation replaced by sum(pi) = 1.
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[k - 1][j] = 1.0;
    }
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;

    // Gaussian elimination with partial pivoting.
    for col in 0..k {
        let mut pivot = col;
        for row in col + 1..k {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-14, "singular stationary system");
        for row in col + 1..k {
            let factor = a[row][col] / diag;
            for j in col..k {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut pi = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for j in row + 1..k {
            acc -= a[row][j] * pi[j];
        }
        pi[row] = acc / a[row][row];
    }
    // Residual check on the original equations.
    for j in 0..k {
        let lhs: f64 = (0..k).map(|i| pi[i] * transition[i][j]).sum();
        debug_assert!(
            (lhs - pi[j]).abs() <= STATIONARY_RESIDUAL * 10.0,
            "stationary residual too large"
        );
    }
    pi
}

fn irreducible(transition: &[Vec<f64>]) -> bool {
    let k = transition.len();
    // Reachability in both directions from state 0.
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..k {
                let edge = if forward {
                    transition[s][t] > 0.0
                } else {
                    transition[t][s] > 0.0
                };
                if edge && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    reach(true) && reach(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_two_state() -> ServiceModel {
        ServiceModel::markov_modulated(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn iid_deterministic_is_constant() {
        let model = ServiceModel::iid(RetrialSpec::deterministic(1.0).unwrap()).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut proc = model.start(&mut rng);
        for _ in 0..5 {
            assert_eq!(proc.next_service(&mut rng), 1.0);
        }
    }

    #[test]
    fn trivial_means() {
        let model = ServiceModel::iid(RetrialSpec::exponential(2.0).unwrap()).unwrap();
        assert_eq!(model.long_run_mean(), 0.5);
        let ma = ServiceModel::moving_average(RetrialSpec::exponential(2.0).unwrap(), 7).unwrap();
        assert_eq!(ma.long_run_mean(), 0.5);
    }

    #[test]
    fn markov_modulated_long_run_mean() {
        let model = symmetric_two_state();
        let expect = 0.5 * 1.0 + 0.5 * (1.0 / 3.0);
        assert!((model.long_run_mean() - expect).abs() < 1e-12);

        let mut rng = RngStream::new(11, 0);
        let mut proc = model.start(&mut rng);
        let n = 1_000_000;
        let avg = (0..n).map(|_| proc.next_service(&mut rng)).sum::<f64>() / n as f64;
        assert!((avg - expect).abs() < 0.01, "time average {avg}");
    }

    #[test]
    fn markov_modulated_asymmetric_stationary_law() {
        let model = ServiceModel::markov_modulated(
            vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            vec![2.0, 0.5],
        )
        .unwrap();
        let pi = model.stationary_distribution().unwrap();
        // pi = (0.75, 0.25) solves the balance equations.
        assert!((pi[0] - 0.75).abs() < 1e-12);
        assert!((pi[1] - 0.25).abs() < 1e-12);
        let expect = 0.75 / 2.0 + 0.25 / 0.5;
        assert!((model.long_run_mean() - expect).abs() < 1e-12);

        let mut rng = RngStream::new(12, 0);
        let mut proc = model.start(&mut rng);
        let n = 1_000_000;
        let avg = (0..n).map(|_| proc.next_service(&mut rng)).sum::<f64>() / n as f64;
        assert!((avg - expect).abs() < 3.0 * 0.003, "time average {avg}");
    }

    #[test]
    fn moving_average_lag_one_autocorrelation() {
        // Overlapping windows of width w give lag-1 autocorrelation (w-1)/w.
        let model =
            ServiceModel::moving_average(RetrialSpec::exponential(1.0).unwrap(), 4).unwrap();
        let mut rng = RngStream::new(21, 0);
        let mut proc = model.start(&mut rng);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| proc.next_service(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let cov = draws
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let rho = cov / var;
        assert!((rho - 0.75).abs() < 0.02, "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn ergodic_time_averages_match_long_run_mean() {
        let models = [
            ServiceModel::iid(RetrialSpec::erlang(2, 4.0).unwrap()).unwrap(),
            symmetric_two_state(),
            ServiceModel::moving_average(RetrialSpec::exponential(2.0).unwrap(), 3).unwrap(),
        ];
        for model in &models {
            let mut rng = RngStream::new(5, 1);
            let mut proc = model.start(&mut rng);
            let n = 1_000_000;
            let draws: Vec<f64> = (0..n).map(|_| proc.next_service(&mut rng)).collect();
            let avg = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / n as f64;
            // Generous dependence allowance: 3 standard errors times 3.
            let se = (var / n as f64).sqrt();
            assert!(
                (avg - model.long_run_mean()).abs() < 9.0 * se.max(1e-4),
                "{model:?}: avg {avg} vs {}",
                model.long_run_mean()
            );
        }
    }

    #[test]
    fn shifted_windows_are_distributionally_stable() {
        // Stationarity smoke test: means/variances of shifted windows agree.
        let models = [symmetric_two_state(),
            ServiceModel::moving_average(RetrialSpec::exponential(1.0).unwrap(), 5).unwrap()];
        for model in &models {
            let mut rng = RngStream::new(77, 0);
            let mut proc = model.start(&mut rng);
            let n = 400_000;
            let draws: Vec<f64> = (0..2 * n).map(|_| proc.next_service(&mut rng)).collect();
            let stats = |xs: &[f64]| {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
                (m, v)
            };
            let (m0, v0) = stats(&draws[0..n]);
            let (m1, v1) = stats(&draws[1..n + 1]);
            assert!((m0 - m1).abs() < 0.01, "{model:?} means {m0} {m1}");
            assert!((v0 - v1).abs() / v0 < 0.05, "{model:?} vars {v0} {v1}");
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(ServiceModel::markov_modulated(vec![vec![0.5, 0.4]], vec![1.0]).is_err());
        assert!(ServiceModel::markov_modulated(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 2.0]
        )
        .is_err());
        assert!(ServiceModel::markov_modulated(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, -1.0]
        )
        .is_err());
    }

    #[test]
    fn with_mean_rescales() {
        let model = symmetric_two_state();
        let scaled = model.with_mean(0.4).unwrap();
        assert!((scaled.long_run_mean() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let model = symmetric_two_state();
        let json = serde_json::to_string(&model).unwrap();
        let back: ServiceModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
