//! Embedded stochastic recursive sequences for the three retrial policies.
//!
//! All chains share the skeleton `Q_{n+1} = (Q_n + xi_n)^+` with policy
//! drivers `xi_n = N(lambda * sigma_n) - I_n`:
//!
//! * control: `I = 1{r < gamma}` for a fresh retrial draw `r`;
//! * constant: `I = 1{pi < gamma}` for an equilibrium residual `pi`
//!   (the steady-state driver used by the stability proof; transient
//!   residual dynamics live in the event-driven oracle);
//! * linear majorant: `I = 1{min(pi_1..pi_C) < gamma}` over `C`
//!   independent equilibrium residuals, with the recursion floored at the
//!   cutoff: `Q*_{n+1} = max(C, Q*_n + xi*_n)`;
//! * no-retrial comparison chain: `I = 1` identically.
//!
//! `gamma` is the residual external arrival time, exponential(lambda) by
//! memorylessness of Poisson arrivals.

use serde::{Deserialize, Serialize};

use crate::dist::RetrialSpec;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyConfig};
use crate::rng::RngStream;
use crate::service::ServiceProcess;

/// Orbit sizes are capped here; reaching the cap is a divergence signal,
/// never a silent wrap.
pub const DIVERGENCE_BOUND: u64 = i32::MAX as u64;

/// Which embedded recursion to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Control,
    Constant,
    /// Theorem-style auxiliary majorant for the linear policy.
    LinearMajorant,
    /// Single server queue without retrials (instability comparison).
    NoRetrial,
}

impl ChainKind {
    /// The SRS that models the given policy. The linear policy maps to its
    /// majorant; the physical linear chain is the event-driven oracle's job.
    pub fn for_policy(policy: Policy) -> ChainKind {
        match policy {
            Policy::Linear => ChainKind::LinearMajorant,
            Policy::Constant => ChainKind::Constant,
            Policy::Control => ChainKind::Control,
        }
    }
}

/// Realized randomness of one embedded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDrivers {
    /// Poisson arrival count over the service time.
    pub arrivals: u64,
    /// Whether the retrial indicator fired.
    pub retrial_win: bool,
    /// Service duration `sigma_n`.
    pub service: f64,
    /// Residual external arrival time `gamma_n`.
    pub residual_arrival: f64,
}

impl StepDrivers {
    /// The driver increment `xi = N - I`.
    pub fn increment(&self) -> i64 {
        self.arrivals as i64 - self.retrial_win as i64
    }
}

/// `(q + xi)^+` for the control/constant/no-retrial recursions.
pub fn apply_step(q: u64, drivers: &StepDrivers) -> u64 {
    (q as i64 + drivers.increment()).max(0) as u64
}

/// `max(C, q + xi)` for the linear-policy majorant.
pub fn apply_majorant_step(q: u64, cutoff: u32, drivers: &StepDrivers) -> u64 {
    (q as i64 + drivers.increment()).max(cutoff as i64) as u64
}

/// One realized orbit-size path with optional per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `Q_0 ..= Q_N` (shorter if the run diverged).
    pub states: Vec<u64>,
    /// Per-step drivers when logging was requested; `drivers[n]` produced
    /// the transition `states[n] -> states[n + 1]`.
    pub drivers: Option<Vec<StepDrivers>>,
    pub kind: ChainKind,
    pub seed: u64,
    pub stream: u64,
    /// Step index at which the divergence guard tripped, if it did.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> u64 {
        *self.states.last().expect("nonempty trajectory")
    }

    /// Least-squares slope of `Q_n` against `n` over the final half.
    pub fn tail_slope(&self) -> f64 {
        tail_slope(&self.states)
    }

    /// Fraction of final-half steps with `Q <= low_set`.
    pub fn tail_low_frequency(&self, low_set: u64) -> f64 {
        let tail = &self.states[self.states.len() / 2..];
        tail.iter().filter(|q| **q <= low_set).count() as f64 / tail.len() as f64
    }
}

pub(crate) fn tail_slope(states: &[u64]) -> f64 {
    let tail = &states[states.len() / 2..];
    let n = tail.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = tail.iter().map(|q| *q as f64).sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, q) in tail.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (*q as f64 - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Simulation run parameters.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub horizon: usize,
    pub q0: u64,
    pub stream: u64,
    pub log_drivers: bool,
}

impl SimOptions {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            q0: 0,
            stream: 0,
            log_drivers: false,
        }
    }

    pub fn q0(mut self, q0: u64) -> Self {
        self.q0 = q0;
        self
    }

    pub fn stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn log_drivers(mut self, log: bool) -> Self {
        self.log_drivers = log;
        self
    }
}

/// Sequential generator of policy drivers, threading the service process.
pub struct DriverSource<'a> {
    kind: ChainKind,
    lambda: f64,
    retrial: &'a RetrialSpec,
    cutoff: u32,
    service: ServiceProcess,
}

impl<'a> DriverSource<'a> {
    pub fn new(config: &'a PolicyConfig, kind: ChainKind, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let cutoff = match kind {
            ChainKind::LinearMajorant => config.cutoff.ok_or_else(|| {
                Error::InvalidParameters("linear majorant chain requires a cutoff".into())
            })?,
            _ => 0,
        };
        Ok(Self {
            kind,
            lambda: config.lambda,
            retrial: &config.retrial,
            cutoff,
            service: config.service.start(rng),
        })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// Draw the next step's drivers. Order of consumption: service
    /// duration, Poisson count, residual arrival, indicator draws.
    pub fn next(&mut self, rng: &mut RngStream) -> Result<StepDrivers> {
        let service = self.service.next_service(rng);
        let arrivals = rng.poisson(self.lambda * service);
        let residual_arrival = rng.exponential(self.lambda);
        let retrial_win = match self.kind {
            ChainKind::Control => self.retrial.sample(rng) < residual_arrival,
            ChainKind::Constant => {
                self.retrial.sample_equilibrium(rng)? < residual_arrival
            }
            ChainKind::LinearMajorant => {
                let mut min = f64::INFINITY;
                for _ in 0..self.cutoff {
                    min = min.min(self.retrial.sample_equilibrium(rng)?);
                }
                min < residual_arrival
            }
            ChainKind::NoRetrial => true,
        };
        Ok(StepDrivers {
            arrivals,
            retrial_win,
            service,
            residual_arrival,
        })
    }

    /// Apply the recursion for this chain kind.
    pub fn apply(&self, q: u64, drivers: &StepDrivers) -> u64 {
        match self.kind {
            ChainKind::LinearMajorant => apply_majorant_step(q, self.cutoff, drivers),
            _ => apply_step(q, drivers),
        }
    }
}

/// One control-policy step: fresh retrial draw races the residual arrival.
pub fn step_control(
    q: u64,
    lambda: f64,
    retrial: &RetrialSpec,
    service: &mut ServiceProcess,
    rng: &mut RngStream,
) -> Result<(u64, StepDrivers)> {
    let sigma = service.next_service(rng);
    let arrivals = rng.poisson(lambda * sigma);
    let gamma = rng.exponential(lambda);
    let drivers = StepDrivers {
        arrivals,
        retrial_win: retrial.sample(rng) < gamma,
        service: sigma,
        residual_arrival: gamma,
    };
    Ok((apply_step(q, &drivers), drivers))
}

/// One constant-policy step: equilibrium residual races the residual arrival.
pub fn step_constant(
    q: u64,
    lambda: f64,
    retrial: &RetrialSpec,
    service: &mut ServiceProcess,
    rng: &mut RngStream,
) -> Result<(u64, StepDrivers)> {
    let sigma = service.next_service(rng);
    let arrivals = rng.poisson(lambda * sigma);
    let gamma = rng.exponential(lambda);
    let drivers = StepDrivers {
        arrivals,
        retrial_win: retrial.sample_equilibrium(rng)? < gamma,
        service: sigma,
        residual_arrival: gamma,
    };
    Ok((apply_step(q, &drivers), drivers))
}

/// One majorant step: the minimum of `cutoff` equilibrium residuals races
/// the residual arrival and the state is floored at the cutoff.
pub fn step_linear_majorant(
    q: u64,
    lambda: f64,
    retrial: &RetrialSpec,
    cutoff: u32,
    service: &mut ServiceProcess,
    rng: &mut RngStream,
) -> Result<(u64, StepDrivers)> {
    let sigma = service.next_service(rng);
    let arrivals = rng.poisson(lambda * sigma);
    let gamma = rng.exponential(lambda);
    let mut min = f64::INFINITY;
    for _ in 0..cutoff {
        min = min.min(retrial.sample_equilibrium(rng)?);
    }
    let drivers = StepDrivers {
        arrivals,
        retrial_win: min < gamma,
        service: sigma,
        residual_arrival: gamma,
    };
    Ok((apply_majorant_step(q, cutoff, &drivers), drivers))
}

/// One step of the no-retrial comparison queue (indicator identically 1).
pub fn step_noretrial(
    q: u64,
    lambda: f64,
    service: &mut ServiceProcess,
    rng: &mut RngStream,
) -> (u64, StepDrivers) {
    let sigma = service.next_service(rng);
    let arrivals = rng.poisson(lambda * sigma);
    let gamma = rng.exponential(lambda);
    let drivers = StepDrivers {
        arrivals,
        retrial_win: true,
        service: sigma,
        residual_arrival: gamma,
    };
    (apply_step(q, &drivers), drivers)
}

/// Iterate a chain for `opts.horizon` steps, flagging divergence in the
/// returned trajectory instead of erroring.
pub fn run_chain(
    config: &PolicyConfig,
    kind: ChainKind,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let mut rng = RngStream::new(seed, opts.stream);
    let mut source = DriverSource::new(config, kind, &mut rng)?;
    let mut states = Vec::with_capacity(opts.horizon + 1);
    let mut drivers_log = opts.log_drivers.then(Vec::new);
    let mut q = opts.q0;
    states.push(q);
    let mut diverged_at = None;
    for step in 0..opts.horizon {
        let drivers = source.next(&mut rng)?;
        q = source.apply(q, &drivers);
        states.push(q);
        if let Some(log) = drivers_log.as_mut() {
            log.push(drivers);
        }
        if q >= DIVERGENCE_BOUND {
            diverged_at = Some(step);
            break;
        }
    }
    Ok(Trajectory {
        states,
        drivers: drivers_log,
        kind,
        seed,
        stream: opts.stream,
        diverged_at,
    })
}

/// Iterate the policy's embedded chain; divergence is an error carrying
/// the step index.
pub fn simulate_chain(config: &PolicyConfig, seed: u64, opts: &SimOptions) -> Result<Trajectory> {
    let kind = ChainKind::for_policy(config.policy);
    let trajectory = run_chain(config, kind, seed, opts)?;
    if let Some(step) = trajectory.diverged_at {
        return Err(Error::Diverged { step });
    }
    Ok(trajectory)
}

/// Result of one common-driver coupling run.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub offset: u64,
    pub horizon: usize,
    pub replications: usize,
    /// First step at which the two chains coincide, per replication;
    /// `None` when they never met within the horizon.
    pub times: Vec<Option<usize>>,
    pub fraction_coupled: f64,
}

/// Run two chains from `Q_0 = 0` and `Q_0 = offset` under the identical
/// driver stream and report the first step where they coincide.
///
/// The one-step maps are monotone in `Q`, so once equal the chains stay
/// equal and the lower chain never overtakes the upper one.
pub fn coupling_experiment(
    config: &PolicyConfig,
    kind: ChainKind,
    seed: u64,
    horizon: usize,
    offset: u64,
    replications: usize,
) -> Result<CouplingReport> {
    let mut times = Vec::with_capacity(replications);
    for rep in 0..replications {
        let mut rng = RngStream::new(seed, rep as u64);
        let mut source = DriverSource::new(config, kind, &mut rng)?;
        let mut low = 0u64;
        let mut high = offset;
        let mut met = if low == high { Some(0) } else { None };
        let mut step = 0usize;
        while met.is_none() && step < horizon {
            let drivers = source.next(&mut rng)?;
            low = source.apply(low, &drivers);
            high = source.apply(high, &drivers);
            debug_assert!(low <= high, "common-driver order must be preserved");
            step += 1;
            if low == high {
                met = Some(step);
            }
        }
        times.push(met);
    }
    let coupled = times.iter().filter(|t| t.is_some()).count();
    Ok(CouplingReport {
        offset,
        horizon,
        replications,
        times,
        fraction_coupled: coupled as f64 / replications.max(1) as f64,
    })
}
