//! Empirical threshold localization by bisection.
//!
//! Sweeps one parameter axis (arrival rate or service mean), classifying
//! at each point, and narrows a stable/unstable bracket until it is finer
//! than the requested resolution. All points share the same substream
//! block (common random numbers), which keeps verdicts monotone along the
//! axis up to the near-critical band.

use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::classify::{classify, ClassifyOptions, Verdict, VerdictClass};
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Vary the arrival rate, holding the service model fixed.
    Lambda,
    /// Vary the service mean (the model is rescaled), holding lambda fixed.
    ServiceMean,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub axis: SweepAxis,
    pub bracket: (f64, f64),
    /// Stop when the bracket is at most this wide.
    pub resolution: f64,
    pub max_steps: usize,
    pub classify: ClassifyOptions,
}

impl SweepOptions {
    pub fn new(axis: SweepAxis, bracket: (f64, f64), resolution: f64) -> Self {
        Self {
            axis,
            bracket,
            resolution,
            max_steps: 12,
            classify: ClassifyOptions {
                replications: 10,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// Every classified point, in evaluation order (endpoints first).
    pub points: Vec<SweepPoint>,
    /// Midpoint of the final bracket.
    pub critical_estimate: f64,
    pub final_bracket: (f64, f64),
    /// The analytic critical value on this axis, for comparison.
    pub analytic_critical: Option<f64>,
}

/// The configuration at a given axis value.
pub fn configure_at(template: &PolicyConfig, axis: SweepAxis, value: f64) -> Result<PolicyConfig> {
    let mut config = template.clone();
    match axis {
        SweepAxis::Lambda => {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "swept lambda must be > 0, got {value}"
                )));
            }
            config.lambda = value;
        }
        SweepAxis::ServiceMean => {
            config.service = template.service.with_mean(value)?;
        }
    }
    Ok(config)
}

/// Where the theorems put the critical value along the swept axis.
pub fn analytic_critical(template: &PolicyConfig, axis: SweepAxis) -> Result<f64> {
    match axis {
        SweepAxis::ServiceMean => {
            let report = analytics::threshold(template.policy, template.lambda, &template.retrial)?;
            Ok(report.value / template.lambda)
        }
        SweepAxis::Lambda => {
            // Root of h(lambda) = lambda * E[sigma] - threshold(lambda),
            // which is increasing in lambda.
            let mean_service = template.service.long_run_mean();
            let h = |lambda: f64| -> Result<f64> {
                let t = analytics::threshold(template.policy, lambda, &template.retrial)?;
                Ok(lambda * mean_service - t.value)
            };
            let mut lo = 1e-9;
            if h(lo)? > 0.0 {
                return Err(Error::BadBracket(
                    "load exceeds threshold even at lambda ~ 0".into(),
                ));
            }
            let mut hi = 1.0;
            let mut guard = 0;
            while h(hi)? < 0.0 {
                hi *= 2.0;
                guard += 1;
                if guard > 200 {
                    return Err(Error::BadBracket(
                        "no finite critical lambda on this axis".into(),
                    ));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if h(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Effective side of a verdict for bisection: Inconclusive points fall back
/// to the sign of the slope point estimate.
fn unstable_side(verdict: &Verdict) -> bool {
    match verdict.class {
        VerdictClass::Unstable => true,
        VerdictClass::Stable => false,
        VerdictClass::Inconclusive => verdict.slope > 0.0,
    }
}

/// Bisect the stability boundary along the chosen axis.
///
/// The lower endpoint must classify stable-side and the upper unstable-side
/// (strict verdicts at the endpoints; a definite-verdict mismatch is a
/// bad-bracket error).
pub fn sweep(template: &PolicyConfig, opts: &SweepOptions, seed: u64) -> Result<SweepResult> {
    let (mut lo, mut hi) = opts.bracket;
    if !(lo < hi) {
        return Err(Error::BadBracket(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut points = Vec::new();
    let eval = |value: f64, points: &mut Vec<SweepPoint>| -> Result<bool> {
        let config = configure_at(template, opts.axis, value)?;
        let verdict = classify(&config, &opts.classify, seed)?;
        let side = unstable_side(&verdict);
        points.push(SweepPoint { value, verdict });
        Ok(side)
    };

    let lo_unstable = eval(lo, &mut points)?;
    let hi_unstable = eval(hi, &mut points)?;
    if lo_unstable == hi_unstable {
        return Err(Error::BadBracket(format!(
            "endpoints {lo} and {hi} classify to the same side"
        )));
    }

    let mut steps = 0;
    while hi - lo > opts.resolution && steps < opts.max_steps {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut points)? {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }

    Ok(SweepResult {
        axis: opts.axis,
        points,
        critical_estimate: 0.5 * (lo + hi),
        final_bracket: (lo, hi),
        analytic_critical: analytic_critical(template, opts.axis).ok(),
    })
}

/// Checks verdict monotonicity along the axis: no stable point above an
/// unstable one, Inconclusive exempt. Returns the offending pair if any.
pub fn monotonicity_violation(points: &[SweepPoint]) -> Option<(f64, f64)> {
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
    for (i, a) in sorted.iter().enumerate() {
        if a.verdict.class != VerdictClass::Unstable {
            continue;
        }
        for b in &sorted[i + 1..] {
            if b.verdict.class == VerdictClass::Stable {
                return Some((a.value, b.value));
            }
        }
    }
    None
}
