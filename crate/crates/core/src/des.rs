//! Event-driven simulation of the physical retrial queue.
//!
//! This is the continuous-time ground truth from which embedded orbit
//! sequences at service completions are extracted. Policy semantics:
//!
//! * linear: every orbit customer carries its own retrial clock and
//!   redraws a fresh retrial time after each failed attempt (server busy
//!   at the fire instant);
//! * constant: a single renewal orbit clock with i.i.d. cycles runs
//!   regardless of server state; a fire with an idle server and nonempty
//!   orbit moves the head-of-line customer into service;
//! * control: a single fresh retrial clock starts at each service
//!   completion; if it fires before the next external arrival the head
//!   orbit customer (if any) enters service; an arrival that finds the
//!   server idle enters service immediately and cancels the clock.
//!
//! Simultaneous events are processed in the fixed priority order
//! service-end, retrial-fire, orbit-clock-fire, arrival (ties can occur
//! only with deterministic specs), then by schedule order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyConfig};
use crate::rng::RngStream;

/// Event kinds in tie-breaking priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ServiceEnd,
    RetrialFire,
    OrbitClockFire,
    Arrival,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::ServiceEnd => "service_end",
            EventKind::RetrialFire => "retrial_fire",
            EventKind::OrbitClockFire => "orbit_clock_fire",
            EventKind::Arrival => "arrival",
        }
    }
}

/// One processed event as it appears in the exported log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    /// Orbit size just after the event was processed.
    pub orbit: u64,
    /// Whether the server is busy just after the event was processed.
    pub server_busy: bool,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    /// Customer id (linear retrial fires) or clock token (control fires).
    id: u64,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first.
        other
            .time
            .partial_cmp(&self.time)
            .expect("event times are never NaN")
            .then_with(|| other.kind.cmp(&self.kind))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Run limits and logging switches.
#[derive(Debug, Clone)]
pub struct DesOptions {
    /// Hard cap on processed events; hitting it is a divergence signal.
    pub max_events: u64,
    /// Stop once the next event lies beyond this time.
    pub max_time: f64,
    /// Keep the full event log (always cheap statistics otherwise).
    pub record_log: bool,
    /// Customers already in orbit at time zero.
    pub initial_orbit: u64,
    pub stream: u64,
}

impl Default for DesOptions {
    fn default() -> Self {
        Self {
            max_events: 20_000_000,
            max_time: f64::INFINITY,
            record_log: false,
            initial_orbit: 0,
            stream: 0,
        }
    }
}

/// Output of one event-driven run.
#[derive(Debug, Clone)]
pub struct DesRun {
    /// Embedded orbit sizes `Q(s_n+)` immediately after each completion.
    pub embedded: Vec<u64>,
    pub log: Option<Vec<EventRecord>>,
    pub completions: u64,
    pub arrivals: u64,
    /// True when the run stopped on an event/time budget before reaching
    /// the requested number of completions.
    pub diverged: bool,
    pub final_time: f64,
}

struct Sim<'a> {
    config: &'a PolicyConfig,
    rng: RngStream,
    service: crate::service::ServiceProcess,
    heap: BinaryHeap<Event>,
    seq: u64,
    time: f64,
    server_busy: bool,
    /// FIFO orbit for constant/control; linear tracks a bare count because
    /// customers leave only through their own retrial clock.
    orbit_fifo: VecDeque<u64>,
    orbit_count: u64,
    control_token: u64,
    arrivals: u64,
    initial: u64,
    completions: u64,
    next_customer: u64,
    embedded: Vec<u64>,
    log: Option<Vec<EventRecord>>,
}

impl<'a> Sim<'a> {
    fn orbit_size(&self) -> u64 {
        match self.config.policy {
            Policy::Linear => self.orbit_count,
            _ => self.orbit_fifo.len() as u64,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind, id: u64) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event {
            time,
            kind,
            id,
            seq,
        });
    }

    fn record(&mut self, kind: EventKind) {
        if self.log.is_none() {
            return;
        }
        let record = EventRecord {
            time: self.time,
            kind,
            orbit: self.orbit_size(),
            server_busy: self.server_busy,
        };
        if let Some(log) = self.log.as_mut() {
            log.push(record);
        }
    }

    fn schedule_arrival(&mut self) {
        let gap = self.rng.exponential(self.config.lambda);
        self.push(self.time + gap, EventKind::Arrival, 0);
    }

    fn start_service(&mut self) {
        debug_assert!(!self.server_busy);
        self.server_busy = true;
        // Cancel any pending control clock: the server is taken.
        self.control_token += 1;
        let sigma = self.service.next_service(&mut self.rng);
        self.push(self.time + sigma, EventKind::ServiceEnd, 0);
    }

    fn add_to_orbit(&mut self) {
        let id = self.next_customer;
        self.next_customer += 1;
        match self.config.policy {
            Policy::Linear => {
                self.orbit_count += 1;
                let r = self.config.retrial.sample(&mut self.rng);
                self.push(self.time + r, EventKind::RetrialFire, id);
            }
            Policy::Constant | Policy::Control => self.orbit_fifo.push_back(id),
        }
    }

    fn conservation_holds(&self) -> bool {
        self.initial + self.arrivals
            == self.completions + self.server_busy as u64 + self.orbit_size()
    }
}

/// Simulate until `horizon` service completions (or a run limit trips).
///
/// Errors with [`Error::NoCompletions`] if the limits end the run before
/// any service completes.
pub fn run_des(
    config: &PolicyConfig,
    horizon: u64,
    seed: u64,
    opts: &DesOptions,
) -> Result<DesRun> {
    config.validate()?;
    if horizon < 1 {
        return Err(Error::InvalidParameters("horizon must be >= 1".into()));
    }
    let mut rng = RngStream::new(seed, opts.stream);
    let service = config.service.start(&mut rng);
    let mut sim = Sim {
        config,
        rng,
        service,
        heap: BinaryHeap::new(),
        seq: 0,
        time: 0.0,
        server_busy: false,
        orbit_fifo: VecDeque::new(),
        orbit_count: 0,
        control_token: 0,
        arrivals: 0,
        initial: opts.initial_orbit,
        completions: 0,
        next_customer: 0,
        embedded: Vec::new(),
        log: opts.record_log.then(Vec::new),
    };

    for _ in 0..opts.initial_orbit {
        sim.add_to_orbit();
    }
    if config.policy == Policy::Constant {
        // The orbit renewal clock runs from time zero.
        let first = config.retrial.sample(&mut sim.rng);
        sim.push(first, EventKind::OrbitClockFire, 0);
    }
    sim.schedule_arrival();

    let mut processed = 0u64;
    let mut diverged = false;
    while sim.completions < horizon {
        let Some(ev) = sim.heap.pop() else {
            break;
        };
        if ev.time > opts.max_time || !ev.time.is_finite() {
            break;
        }
        if processed >= opts.max_events {
            diverged = true;
            break;
        }
        processed += 1;
        sim.time = ev.time;
        match ev.kind {
            EventKind::Arrival => {
                sim.arrivals += 1;
                if sim.server_busy {
                    sim.add_to_orbit();
                } else {
                    sim.start_service();
                }
                sim.schedule_arrival();
            }
            EventKind::ServiceEnd => {
                sim.server_busy = false;
                sim.completions += 1;
                sim.embedded.push(sim.orbit_size());
                if config.policy == Policy::Control {
                    let r = config.retrial.sample(&mut sim.rng);
                    sim.push(sim.time + r, EventKind::RetrialFire, sim.control_token);
                }
            }
            EventKind::RetrialFire => match config.policy {
                Policy::Linear => {
                    if sim.server_busy {
                        let r = config.retrial.sample(&mut sim.rng);
                        sim.push(sim.time + r, EventKind::RetrialFire, ev.id);
                    } else {
                        sim.orbit_count -= 1;
                        sim.start_service();
                    }
                }
                Policy::Control => {
                    if ev.id == sim.control_token {
                        debug_assert!(!sim.server_busy, "valid control fire implies idle server");
                        if sim.orbit_fifo.pop_front().is_some() {
                            sim.start_service();
                        } else {
                            // Fire with empty orbit is a no-op; the clock dies.
                            sim.control_token += 1;
                        }
                    }
                }
                Policy::Constant => unreachable!("constant policy uses the orbit clock"),
            },
            EventKind::OrbitClockFire => {
                debug_assert_eq!(config.policy, Policy::Constant);
                if !sim.server_busy {
                    if sim.orbit_fifo.pop_front().is_some() {
                        sim.start_service();
                    }
                }
                // The renewal clock runs regardless of what just happened.
                let r = config.retrial.sample(&mut sim.rng);
                sim.push(sim.time + r, EventKind::OrbitClockFire, 0);
            }
        }
        sim.record(ev.kind);
        debug_assert!(sim.conservation_holds(), "customer conservation violated");
    }

    if sim.completions == 0 {
        return Err(Error::NoCompletions);
    }
    Ok(DesRun {
        embedded: sim.embedded,
        log: sim.log,
        completions: sim.completions,
        arrivals: sim.arrivals,
        diverged: diverged || sim.completions < horizon,
        final_time: sim.time,
    })
}

/// Orbit sizes sampled immediately after each service-end event in a log.
pub fn embedded_orbit_sequence(log: &[EventRecord]) -> Result<Vec<u64>> {
    let seq: Vec<u64> = log
        .iter()
        .filter(|r| r.kind == EventKind::ServiceEnd)
        .map(|r| r.orbit)
        .collect();
    if seq.is_empty() {
        return Err(Error::NoCompletions);
    }
    Ok(seq)
}
