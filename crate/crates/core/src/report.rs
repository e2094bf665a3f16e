//! Data emission: CSV layouts and JSON sidecars.
//!
//! All fields are numeric or fixed labels, so CSV needs no quoting, and
//! rerunning with the same config and seed reproduces the bytes exactly.

use crate::des::EventRecord;
use crate::policy::PolicyConfig;
use crate::srs::Trajectory;
use crate::sweep::SweepResult;

/// Trajectory CSV: `n,Q,N,I,sigma`. Rows `0..horizon` carry the state and
/// the drivers that produced the next state; the final row carries the
/// terminal state with empty driver columns. Driver columns are empty
/// throughout when the run was made without driver logging.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("n,Q,N,I,sigma\n");
    for (n, q) in traj.states.iter().enumerate() {
        let drivers = traj
            .drivers
            .as_ref()
            .and_then(|d| d.get(n));
        match drivers {
            Some(d) => out.push_str(&format!(
                "{n},{q},{},{},{}\n",
                d.arrivals, d.retrial_win as u8, d.service
            )),
            None => out.push_str(&format!("{n},{q},,,\n")),
        }
    }
    out
}

/// JSON sidecar tying a trajectory to the config and seed that made it.
pub fn trajectory_sidecar(config: &PolicyConfig, traj: &Trajectory) -> String {
    let body = serde_json::json!({
        "config": config,
        "chain": traj.kind,
        "seed": traj.seed,
        "stream": traj.stream,
        "q0": traj.states.first(),
        "horizon": traj.states.len() - 1,
        "diverged_at": traj.diverged_at,
    });
    serde_json::to_string_pretty(&body).expect("sidecar serialization")
}

/// Event-log CSV: `time,event,orbit,server`.
pub fn des_log_csv(log: &[EventRecord]) -> String {
    let mut out = String::from("time,event,orbit,server\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.time,
            r.kind.label(),
            r.orbit,
            r.server_busy as u8
        ));
    }
    out
}

/// Embedded-sequence CSV: `n,Q`.
pub fn embedded_csv(embedded: &[u64]) -> String {
    let mut out = String::from("n,Q\n");
    for (n, q) in embedded.iter().enumerate() {
        out.push_str(&format!("{n},{q}\n"));
    }
    out
}

/// Sweep points CSV: one classified point per row.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("value,class,slope,ci_lo,ci_hi,low_set_frequency,diverged\n");
    for p in &result.points {
        out.push_str(&format!(
            "{},{:?},{},{},{},{},{}\n",
            p.value,
            p.verdict.class,
            p.verdict.slope,
            p.verdict.slope_ci.0,
            p.verdict.slope_ci.1,
            p.verdict.low_set_frequency,
            p.verdict.diverged
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RetrialSpec;
    use crate::policy::Policy;
    use crate::service::ServiceModel;
    use crate::srs::{simulate_chain, SimOptions};

    #[test]
    fn trajectory_csv_shape_and_determinism() {
        let config = PolicyConfig {
            policy: Policy::Control,
            lambda: 1.0,
            retrial: RetrialSpec::exponential(1.0).unwrap(),
            service: ServiceModel::iid(RetrialSpec::exponential(2.0).unwrap()).unwrap(),
            cutoff: None,
        };
        let opts = SimOptions::new(50).log_drivers(true);
        let a = simulate_chain(&config, 5, &opts).unwrap();
        let b = simulate_chain(&config, 5, &opts).unwrap();
        let csv_a = trajectory_csv(&a);
        let csv_b = trajectory_csv(&b);
        assert_eq!(csv_a, csv_b, "byte-identical reruns");
        assert_eq!(csv_a.lines().count(), 52, "header + 51 states");
        assert!(csv_a.lines().last().unwrap().ends_with(",,,"));
        let sidecar = trajectory_sidecar(&config, &a);
        assert!(sidecar.contains("\"seed\": 5"));
    }
}
