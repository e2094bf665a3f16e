//! Browser-facing wrappers around the stability laboratory.
//!
//! Three interactive operations, each returning a JSON string with an
//! `ok` flag so the page can surface errors inline:
//!
//! * [`threshold_curve`]: analytic threshold across an arrival-rate range
//!   plus the load line, for the stability-map panel;
//! * [`simulate_trajectory`]: one embedded-chain path (thinned for
//!   plotting);
//! * [`coupling_demo`]: two common-driver paths from offset starts and
//!   the step where they merge.
//!
//! Retrial distributions use the CLI shorthand (`exp:1`, `erlang:2,1`,
//! `hyper:0.3,2`, `det:1`, `lognormal:0,0.5`); service times are i.i.d.
//! exponential with the requested mean, which is all the panels need.

use wasm_bindgen::prelude::*;

use orbitq_core::analytics;
use orbitq_core::config::parse_retrial_shorthand;
use orbitq_core::dist::RetrialSpec;
use orbitq_core::policy::{Policy, PolicyConfig};
use orbitq_core::service::ServiceModel;
use orbitq_core::srs::{run_chain, ChainKind, DriverSource, SimOptions};

fn fail(message: impl std::fmt::Display) -> String {
    serde_json::json!({ "ok": false, "error": message.to_string() }).to_string()
}

fn parse_policy(name: &str) -> Result<Policy, String> {
    match name.to_ascii_lowercase().as_str() {
        "linear" => Ok(Policy::Linear),
        "constant" => Ok(Policy::Constant),
        "control" => Ok(Policy::Control),
        other => Err(format!("unknown policy `{other}`")),
    }
}

fn build_config(
    policy: Policy,
    retrial: RetrialSpec,
    lambda: f64,
    service_mean: f64,
    cutoff: u32,
) -> Result<PolicyConfig, String> {
    if !(service_mean.is_finite() && service_mean > 0.0) {
        return Err(format!("service mean must be > 0, got {service_mean}"));
    }
    let service = ServiceModel::iid(
        RetrialSpec::exponential(1.0 / service_mean).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let config = PolicyConfig {
        policy,
        lambda,
        retrial,
        service,
        cutoff: (cutoff > 0).then_some(cutoff),
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn thin(states: &[u64], max_points: usize) -> (Vec<u32>, Vec<u32>) {
    let stride = states.len().div_ceil(max_points.max(2)).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (n, q) in states.iter().enumerate().step_by(stride) {
        xs.push(n as u32);
        ys.push(*q as u32);
    }
    if (states.len() - 1) % stride != 0 {
        xs.push((states.len() - 1) as u32);
        ys.push(states[states.len() - 1] as u32);
    }
    (xs, ys)
}

/// Threshold curve over `[lambda_lo, lambda_hi]` with the load line
/// `lambda * service_mean`, plus drift and predicted verdict at `lambda`.
#[wasm_bindgen]
pub fn threshold_curve(
    policy: &str,
    retrial: &str,
    lambda_lo: f64,
    lambda_hi: f64,
    points: usize,
    lambda: f64,
    service_mean: f64,
    cutoff: u32,
) -> String {
    let policy = match parse_policy(policy) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let spec = match parse_retrial_shorthand(retrial) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if !(lambda_lo > 0.0 && lambda_hi > lambda_lo) || points < 2 {
        return fail("need 0 < lambda_lo < lambda_hi and at least 2 points");
    }
    let n = points.min(512);
    let mut lambdas = Vec::with_capacity(n);
    let mut thresholds = Vec::with_capacity(n);
    let mut loads = Vec::with_capacity(n);
    for i in 0..n {
        let l = lambda_lo + (lambda_hi - lambda_lo) * i as f64 / (n - 1) as f64;
        match analytics::threshold(policy, l, &spec) {
            Ok(report) => {
                lambdas.push(l);
                thresholds.push(report.value);
                loads.push(l * service_mean);
            }
            Err(e) => return fail(e),
        }
    }
    let report = match analytics::threshold(policy, lambda, &spec) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let drift = match policy {
        Policy::Linear => {
            let c = if cutoff > 0 { cutoff } else { 1 };
            analytics::drift(policy, lambda, service_mean, &spec, Some(c))
        }
        _ => analytics::drift(policy, lambda, service_mean, &spec, None),
    };
    let drift = match drift {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    serde_json::json!({
        "ok": true,
        "lambda": lambdas,
        "threshold": thresholds,
        "load": loads,
        "at": {
            "lambda": lambda,
            "threshold": report.value,
            "load": lambda * service_mean,
            "drift": drift,
            "predicted_stable": report.predicts_stable(lambda, service_mean),
        },
    })
    .to_string()
}

/// One embedded-chain trajectory, thinned to at most `max_points` samples.
#[wasm_bindgen]
pub fn simulate_trajectory(
    policy: &str,
    retrial: &str,
    lambda: f64,
    service_mean: f64,
    cutoff: u32,
    horizon: usize,
    seed: u64,
    q0: u32,
    max_points: usize,
) -> String {
    let policy = match parse_policy(policy) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let spec = match parse_retrial_shorthand(retrial) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let horizon = horizon.clamp(10, 2_000_000);
    let mut config = match build_config(policy, spec, lambda, service_mean, cutoff) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if policy == Policy::Linear && config.cutoff.is_none() {
        // Pick the least workable cutoff for the majorant automatically.
        match analytics::min_cutoff(lambda, service_mean, &config.retrial) {
            Ok(c) => config.cutoff = Some(c),
            Err(_) => config.cutoff = Some(1),
        }
    }
    let kind = ChainKind::for_policy(policy);
    let opts = SimOptions::new(horizon).q0(q0 as u64);
    let traj = match run_chain(&config, kind, seed, &opts) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let slope = traj.tail_slope();
    let (xs, ys) = thin(&traj.states, max_points.clamp(16, 20_000));
    serde_json::json!({
        "ok": true,
        "n": xs,
        "q": ys,
        "final_q": traj.final_state(),
        "tail_slope": slope,
        "diverged_at": traj.diverged_at,
        "cutoff": config.cutoff,
        "chain": traj.kind,
    })
    .to_string()
}

/// Two chains from 0 and `offset` driven by identical randomness;
/// reports both thinned paths and the first step where they coincide.
#[wasm_bindgen]
pub fn coupling_demo(
    policy: &str,
    retrial: &str,
    lambda: f64,
    service_mean: f64,
    cutoff: u32,
    offset: u32,
    horizon: usize,
    seed: u64,
    max_points: usize,
) -> String {
    let policy = match parse_policy(policy) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let spec = match parse_retrial_shorthand(retrial) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let horizon = horizon.clamp(10, 1_000_000);
    let mut config = match build_config(policy, spec, lambda, service_mean, cutoff) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if policy == Policy::Linear && config.cutoff.is_none() {
        match analytics::min_cutoff(lambda, service_mean, &config.retrial) {
            Ok(c) => config.cutoff = Some(c),
            Err(_) => config.cutoff = Some(1),
        }
    }
    let kind = ChainKind::for_policy(policy);
    let mut rng = orbitq_core::rng::RngStream::new(seed, 0);
    let mut source = match DriverSource::new(&config, kind, &mut rng) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let mut low = 0u64;
    let mut high = offset as u64;
    let mut lows = vec![low];
    let mut highs = vec![high];
    let mut coupled_at = if low == high { Some(0usize) } else { None };
    for step in 1..=horizon {
        let drivers = match source.next(&mut rng) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        low = source.apply(low, &drivers);
        high = source.apply(high, &drivers);
        lows.push(low);
        highs.push(high);
        if coupled_at.is_none() && low == high {
            coupled_at = Some(step);
        }
    }
    let (xs, a) = thin(&lows, max_points.clamp(16, 20_000));
    let (_, b) = thin(&highs, max_points.clamp(16, 20_000));
    serde_json::json!({
        "ok": true,
        "n": xs,
        "from_zero": a,
        "from_offset": b,
        "coupled_at": coupled_at,
        "cutoff": config.cutoff,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_curve_control_exponential() {
        let out = threshold_curve("control", "exp:1", 0.2, 2.0, 16, 1.0, 0.4, 0);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["ok"], true, "{out}");
        assert!((json["at"]["threshold"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(json["at"]["predicted_stable"], true);
        assert_eq!(json["lambda"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn bad_inputs_return_error_envelope() {
        let out = threshold_curve("warp", "exp:1", 0.2, 2.0, 16, 1.0, 0.4, 0);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["ok"], false);
        let out = simulate_trajectory("control", "exp:-1", 1.0, 0.4, 0, 100, 1, 0, 100);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["ok"], false);
    }

    #[test]
    fn trajectory_is_thinned_and_deterministic() {
        let a = simulate_trajectory("control", "exp:1", 1.0, 0.45, 0, 50_000, 7, 0, 500);
        let b = simulate_trajectory("control", "exp:1", 1.0, 0.45, 0, 50_000, 7, 0, 500);
        assert_eq!(a, b);
        let json: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(json["ok"], true);
        let n = json["n"].as_array().unwrap();
        assert!(n.len() <= 502, "thinned to {} points", n.len());
        assert_eq!(n.last().unwrap().as_u64().unwrap(), 50_000);
    }

    #[test]
    fn linear_policy_picks_a_cutoff_automatically() {
        let out = simulate_trajectory("linear", "exp:1", 1.0, 0.5, 0, 1_000, 3, 0, 100);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["ok"], true, "{out}");
        assert_eq!(json["cutoff"], 2);
    }

    #[test]
    fn coupling_merges_in_stable_regime() {
        let out = coupling_demo("control", "exp:1", 1.0, 0.4, 0, 40, 100_000, 11, 400);
        let json: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(json["ok"], true, "{out}");
        assert!(json["coupled_at"].as_u64().is_some());
        let a = json["from_zero"].as_array().unwrap();
        let b = json["from_offset"].as_array().unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.last().unwrap(), b.last().unwrap(), "paths merged");
    }
}
