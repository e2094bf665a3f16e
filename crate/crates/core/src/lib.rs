//! Simulation-and-analytics laboratory for single-server retrial queues.
//!
//! Covers three retrial policies (linear, constant, control) with general
//! retrial-time distributions and stationary ergodic service sequences:
//!
//! * [`dist`]: retrial/orbit-time distributions with moments, Laplace
//!   transforms, and equilibrium (forward-recurrence) laws;
//! * [`service`]: stationary ergodic service-time generators;
//! * [`srs`]: the embedded orbit-size recursions, the linear-policy
//!   majorant, the no-retrial comparison chain, and coupling experiments;
//! * [`des`]: the continuous-time event-driven oracle and embedded
//!   sequence extraction;
//! * [`analytics`]: analytic stability thresholds, drifts, and the
//!   majorant cutoff search;
//! * [`classify`] / [`sweep`]: Monte Carlo stability verdicts and
//!   empirical threshold localization;
//! * [`config`] / [`report`]: experiment files and data export.

pub mod analytics;
pub mod classify;
pub mod config;
pub mod des;
pub mod dist;
pub mod error;
pub mod policy;
pub mod quad;
pub mod report;
pub mod rng;
pub mod service;
pub mod srs;
pub mod sweep;

pub use analytics::{drift, drift_versatile, min_cutoff, threshold, ThresholdReport};
pub use classify::{classify, ClassifyOptions, Engine, Verdict, VerdictClass};
pub use config::{load_config, parse_retrial_shorthand, parse_service_shorthand, ExperimentConfig};
pub use des::{embedded_orbit_sequence, run_des, DesOptions, DesRun, EventKind, EventRecord};
pub use dist::{RetrialSpec, Route};
pub use error::{Error, Result};
pub use policy::{Policy, PolicyConfig};
pub use rng::RngStream;
pub use service::{ServiceModel, ServiceProcess};
pub use srs::{
    coupling_experiment, simulate_chain, ChainKind, CouplingReport, SimOptions, StepDrivers,
    Trajectory,
};
pub use sweep::{sweep, SweepAxis, SweepOptions, SweepResult};
