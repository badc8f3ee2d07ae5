//! Event-driven simulation of the document process under a rate allocation
//! policy. Rates are constant between events and recomputed after each one.

mod export;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{Allocation, AllocationError, AllocationPolicy};
use crate::model::{check_feasible, MarkovState, NetworkTopology, TrafficSpec};
use crate::rng::Streams;

pub use export::{fmt_float, trajectory_csv, trajectory_json, TRAJECTORY_SCHEMA_VERSION};

/// Residuals within this (relative) distance of zero count as departed.
pub const ABSORB_TOLERANCE: f64 = 1e-12;
/// Tolerance of the capacity check run after every event.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("route {route}: residual {value} is not positive")]
    NonpositiveResidual { route: usize, value: f64 },
    #[error("route {route}: residual interarrival {value} is not positive")]
    NonpositiveInterarrival { route: usize, value: f64 },
    #[error("expected {expected} routes, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no pending event")]
    NoEvent,
    #[error("advancing by {dt} skips an event on route {route}")]
    EventSkipped { route: usize, dt: f64 },
    #[error("{kind:?} is not due at time {time}")]
    NoDueEvent { kind: EventKind, time: f64 },
    #[error("allocation infeasible after the event at time {time}")]
    InfeasibleAllocation { time: f64 },
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "lowercase")]
pub enum Origin {
    Original,
    Arrived { time: f64 },
}

/// A document as seen from outside the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub route: usize,
    pub residual_service: f64,
    pub origin: Origin,
    pub initial_service: f64,
}

/// Internal storage: `mark = Δ_r(entry) + initial_service`, so that the
/// residual is `mark − Δ_r` and every document on a route ages at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Stored {
    mark: f64,
    initial_service: f64,
    origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RouteState {
    /// Ascending by `mark`; the head is the next to depart.
    docs: Vec<Stored>,
    /// Δ_r, cumulative per-document service.
    delta: f64,
    /// Absolute time of the next arrival (`+∞` when arrivals are off).
    next_arrival: f64,
    /// Per-document rate in force during the last advance.
    rate: f64,
    arrivals: u64,
    departures: u64,
    initial_count: u64,
}

/// Full simulator state `X(t)` plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub time: f64,
    routes: Vec<RouteState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Arrival { route: usize, service: f64 },
    Departure { route: usize },
}

impl EventKind {
    pub fn route(&self) -> usize {
        match *self {
            EventKind::Arrival { route, .. } | EventKind::Departure { route } => route,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Arrival { .. } => "arrival",
            EventKind::Departure { .. } => "departure",
        }
    }
}

/// An event that is pending; the service of an arrival is drawn only when
/// it is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PendingEvent {
    Arrival(usize),
    Departure(usize),
}

fn absorb_scale(x: f64) -> f64 {
    ABSORB_TOLERANCE * x.abs().max(1.0)
}

/// Absorbing threshold for residuals on a route: event epochs are absolute
/// times, so rounding grows with `rate · time` as well as with Δ.
fn residual_slack(delta: f64, rate: f64, time: f64) -> f64 {
    ABSORB_TOLERANCE * delta.abs().max(rate * time).max(1.0)
}

/// Initial state at time 0: the given residuals become `Original`
/// documents, and each `None` interarrival residual is drawn from the
/// route's interarrival law.
pub fn init_state<R: Rng + ?Sized>(
    traffic: &TrafficSpec,
    residuals: &[Vec<f64>],
    interarrival: &[Option<f64>],
    rng: &mut R,
) -> Result<NetworkState, EngineError> {
    let routes = traffic.num_routes();
    for len in [residuals.len(), interarrival.len()] {
        if len != routes {
            return Err(EngineError::DimensionMismatch { expected: routes, actual: len });
        }
    }
    let mut out = Vec::with_capacity(routes);
    for (r, (res, u)) in residuals.iter().zip(interarrival).enumerate() {
        if let Some(&bad) = res.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(EngineError::NonpositiveResidual { route: r, value: bad });
        }
        let u = match *u {
            Some(u) if u > 0.0 => u,
            Some(u) => return Err(EngineError::NonpositiveInterarrival { route: r, value: u }),
            None => traffic.routes[r].interarrival.sample(rng),
        };
        let mut docs: Vec<Stored> = res
            .iter()
            .map(|&s| Stored {
                mark: s,
                initial_service: s,
                origin: Origin::Original,
            })
            .collect();
        docs.sort_by(|a, b| a.mark.total_cmp(&b.mark));
        out.push(RouteState {
            initial_count: docs.len() as u64,
            docs,
            delta: 0.0,
            next_arrival: u,
            rate: 0.0,
            arrivals: 0,
            departures: 0,
        });
    }
    Ok(NetworkState { time: 0.0, routes: out })
}

impl NetworkState {
    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.routes.iter().map(|r| r.docs.len() as u64).collect()
    }

    pub fn total_count(&self) -> u64 {
        self.routes.iter().map(|r| r.docs.len() as u64).sum()
    }

    /// Δ_r.
    pub fn delta(&self, route: usize) -> f64 {
        self.routes[route].delta
    }

    /// u_r; `+∞` when arrivals are disabled.
    pub fn residual_interarrival(&self, route: usize) -> f64 {
        self.routes[route].next_arrival - self.time
    }

    pub fn arrivals(&self, route: usize) -> u64 {
        self.routes[route].arrivals
    }

    pub fn departures(&self, route: usize) -> u64 {
        self.routes[route].departures
    }

    pub fn initial_count(&self, route: usize) -> u64 {
        self.routes[route].initial_count
    }

    /// Documents on a route, by ascending residual.
    pub fn documents(&self, route: usize) -> impl Iterator<Item = Document> + '_ {
        let rs = &self.routes[route];
        rs.docs.iter().map(move |d| Document {
            route,
            residual_service: d.mark - rs.delta,
            origin: d.origin,
            initial_service: d.initial_service,
        })
    }

    pub fn residuals(&self, route: usize) -> Vec<f64> {
        self.documents(route).map(|d| d.residual_service).collect()
    }

    fn markov_filtered(&self, keep: impl Fn(&Origin) -> bool) -> MarkovState {
        let residuals = (0..self.routes.len())
            .map(|r| {
                self.documents(r)
                    .filter(|d| keep(&d.origin))
                    .map(|d| d.residual_service.max(0.0))
                    .collect()
            })
            .collect();
        let u = (0..self.routes.len()).map(|r| self.residual_interarrival(r)).collect();
        MarkovState::new(residuals, u)
    }

    /// The Markov descriptor `(z, u)`.
    pub fn markov(&self) -> MarkovState {
        self.markov_filtered(|_| true)
    }

    /// Switches off arrivals on every route.
    pub fn disable_arrivals(&mut self) {
        for r in self.routes.iter_mut() {
            r.next_arrival = f64::INFINITY;
        }
    }
}

/// Checks per-route conservation (`count = initial + arrivals − departures`)
/// and that every original document has received exactly Δ_r of service.
pub fn verify_invariants(state: &NetworkState, tolerance: f64) -> Result<(), String> {
    for (r, rs) in state.routes.iter().enumerate() {
        if rs.docs.len() as u64 + rs.departures != rs.initial_count + rs.arrivals {
            return Err(format!(
                "route {r}: {} documents but {} initial + {} arrivals - {} departures",
                rs.docs.len(),
                rs.initial_count,
                rs.arrivals,
                rs.departures
            ));
        }
        for d in state.documents(r) {
            if d.origin == Origin::Original && (d.residual_service - (d.initial_service - rs.delta)).abs() > tolerance {
                return Err(format!("route {r}: original residual {} != {} - {}", d.residual_service, d.initial_service, rs.delta));
            }
            if d.residual_service < -tolerance {
                return Err(format!("route {r}: negative residual {}", d.residual_service));
            }
        }
    }
    Ok(())
}

/// Splits a state into its original documents and those that arrived later.
/// Both parts carry the state's interarrival residuals.
pub fn decompose(state: &NetworkState) -> (MarkovState, MarkovState) {
    (
        state.markov_filtered(|o| matches!(o, Origin::Original)),
        state.markov_filtered(|o| matches!(o, Origin::Arrived { .. })),
    )
}

/// Time to the next event and its kind. Ties go to departures, then to the
/// lowest route.
pub fn next_event(state: &NetworkState, allocation: &Allocation) -> Result<(f64, PendingEvent), EngineError> {
    let mut best: Option<(f64, u8, usize)> = None;
    let mut consider = |dt: f64, class: u8, route: usize| {
        let better = match best {
            None => true,
            Some(current) => (dt, class, route) < current,
        };
        if better {
            best = Some((dt, class, route));
        }
    };
    for (r, rs) in state.routes.iter().enumerate() {
        let rate = allocation.per_document_rate[r];
        if let Some(head) = rs.docs.first() {
            if rate > 0.0 {
                let residual = head.mark - rs.delta;
                let dt = if residual <= residual_slack(rs.delta, rate, state.time) {
                    0.0
                } else {
                    residual / rate
                };
                consider(dt, 0, r);
            }
        }
    }
    for (r, rs) in state.routes.iter().enumerate() {
        if rs.next_arrival.is_finite() {
            consider((rs.next_arrival - state.time).max(0.0), 1, r);
        }
    }
    match best {
        Some((dt, 0, r)) => Ok((dt, PendingEvent::Departure(r))),
        Some((dt, _, r)) => Ok((dt, PendingEvent::Arrival(r))),
        None => Err(EngineError::NoEvent),
    }
}

/// Lets `dt` time units pass at constant rates.
pub fn advance(state: &mut NetworkState, dt: f64, allocation: &Allocation) -> Result<(), EngineError> {
    let new_time = state.time + dt;
    for (r, rs) in state.routes.iter().enumerate() {
        if rs.next_arrival - new_time < -absorb_scale(new_time) {
            return Err(EngineError::EventSkipped { route: r, dt });
        }
        if let Some(head) = rs.docs.first() {
            let rate = allocation.per_document_rate[r];
            let delta = rs.delta + rate * dt;
            if head.mark - delta < -residual_slack(delta, rate, new_time) {
                return Err(EngineError::EventSkipped { route: r, dt });
            }
        }
    }
    for (r, rs) in state.routes.iter_mut().enumerate() {
        rs.rate = allocation.per_document_rate[r];
        rs.delta += rs.rate * dt;
    }
    state.time = new_time;
    Ok(())
}

/// Executes a due event. Arrivals draw their service and the next
/// interarrival time from the route's streams.
pub fn apply_event(
    state: &mut NetworkState,
    event: PendingEvent,
    traffic: &TrafficSpec,
    streams: &mut Streams,
) -> Result<EventKind, EngineError> {
    let time = state.time;
    match event {
        PendingEvent::Departure(r) => {
            let rs = &mut state.routes[r];
            let due = rs
                .docs
                .first()
                .is_some_and(|h| h.mark - rs.delta <= residual_slack(rs.delta, rs.rate, time));
            if !due {
                return Err(EngineError::NoDueEvent {
                    kind: EventKind::Departure { route: r },
                    time,
                });
            }
            rs.docs.remove(0);
            rs.departures += 1;
            Ok(EventKind::Departure { route: r })
        }
        PendingEvent::Arrival(r) => {
            let rs = &mut state.routes[r];
            if rs.next_arrival - time > absorb_scale(time) {
                return Err(EngineError::NoDueEvent {
                    kind: EventKind::Arrival { route: r, service: f64::NAN },
                    time,
                });
            }
            let law = &traffic.routes[r];
            let service = law.service.sample(&mut streams.service[r]);
            let doc = Stored {
                mark: rs.delta + service,
                initial_service: service,
                origin: Origin::Arrived { time },
            };
            let at = rs.docs.partition_point(|d| d.mark <= doc.mark);
            rs.docs.insert(at, doc);
            rs.arrivals += 1;
            // keep arrival epochs on the absolute clock to avoid drift
            rs.next_arrival = rs.next_arrival.max(time) + law.interarrival.sample(&mut streams.interarrival[r]);
            Ok(EventKind::Arrival { route: r, service })
        }
    }
}

/// One logged event with the allocation in force right after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    pub per_document_rate: Vec<f64>,
    pub lambda_w: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub counts: Vec<u64>,
    /// Full state, when [`RunOptions::sample_states`] is set.
    pub state: Option<NetworkState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: f64,
    pub events: Vec<EventRecord>,
    /// Post-event states, when [`RunOptions::record_states`] is set.
    pub states: Vec<MarkovState>,
    pub samples: Vec<Sample>,
    /// `∫_0^horizon Z_r(t) dt` per route.
    pub count_integral: Vec<f64>,
    pub event_count: u64,
    /// Events after which a nonempty route received rate 0.
    pub stalled_events: u64,
}

impl Trajectory {
    /// Time-average number of documents over `[0, horizon]`.
    pub fn mean_count(&self) -> f64 {
        self.count_integral.iter().sum::<f64>() / self.horizon
    }

    /// Service requirements of arrivals on `route` up to time `t`.
    pub fn arrival_services(&self, route: usize, t: f64) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.time <= t).filter_map(move |e| match e.kind {
            EventKind::Arrival { route: r, service } if r == route => Some(service),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub horizon: f64,
    /// Epochs at which to sample, ascending; an event at a sample epoch is
    /// applied before sampling.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub sample_states: bool,
    #[serde(default = "yes")]
    pub record_events: bool,
    #[serde(default)]
    pub record_states: bool,
    #[serde(default = "yes")]
    pub arrivals_enabled: bool,
    /// Run the capacity check after every event.
    #[serde(default = "yes")]
    pub check_feasibility: bool,
}

fn yes() -> bool {
    true
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        RunOptions {
            horizon,
            sample_times: Vec::new(),
            sample_states: false,
            record_events: true,
            record_states: false,
            arrivals_enabled: true,
            check_feasibility: true,
        }
    }

    /// Evenly spaced sample epochs `horizon·k/count`, `k = 1..=count`.
    pub fn with_samples(mut self, count: usize) -> Self {
        // the last epoch is the horizon itself, not its rounded reconstruction
        self.sample_times = (1..=count)
            .map(|k| if k == count { self.horizon } else { (self.horizon * k as f64 / count as f64).min(self.horizon) })
            .collect();
        self
    }
}

/// Hooks called by [`run`].
pub trait Observer {
    fn on_event(&mut self, _state: &NetworkState, _record: &EventRecord, _allocation: &Allocation) {}
    fn on_sample(&mut self, _state: &NetworkState) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub state: NetworkState,
}

/// Simulates from `state` up to `options.horizon`.
pub fn run(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    policy: &dyn AllocationPolicy,
    mut state: NetworkState,
    options: &RunOptions,
    streams: &mut Streams,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput, EngineError> {
    let routes = topology.num_routes();
    if state.num_routes() != routes || traffic.num_routes() != routes {
        return Err(EngineError::DimensionMismatch {
            expected: routes,
            actual: state.num_routes().min(traffic.num_routes()),
        });
    }
    if !options.arrivals_enabled {
        state.disable_arrivals();
    }
    let horizon = options.horizon;
    let mut traj = Trajectory {
        horizon,
        events: Vec::new(),
        states: Vec::new(),
        samples: Vec::new(),
        count_integral: vec![0.0; routes],
        event_count: 0,
        stalled_events: 0,
    };
    let mut samples = options.sample_times.iter().copied().filter(|&t| t <= horizon).peekable();
    let mut allocation = policy.allocate(topology, &state.counts())?;

    let go_to = |state: &mut NetworkState, traj: &mut Trajectory, target: f64, alloc: &Allocation| {
        let dt = (target - state.time).max(0.0);
        for (acc, n) in traj.count_integral.iter_mut().zip(&state.routes) {
            *acc += n.docs.len() as f64 * dt;
        }
        advance(state, dt, alloc)?;
        state.time = target;
        Ok::<_, EngineError>(())
    };

    loop {
        let next = match next_event(&state, &allocation) {
            Ok((dt, ev)) => Some((state.time + dt, ev)),
            Err(EngineError::NoEvent) => None,
            Err(e) => return Err(e),
        };
        let event_time = next.map_or(f64::INFINITY, |n| n.0);
        while let Some(&t) = samples.peek() {
            if t >= event_time {
                break;
            }
            go_to(&mut state, &mut traj, t, &allocation)?;
            traj.samples.push(Sample {
                time: t,
                counts: state.counts(),
                state: options.sample_states.then(|| state.clone()),
            });
            for o in observers.iter_mut() {
                o.on_sample(&state);
            }
            samples.next();
        }
        let Some((event_time, event)) = next.filter(|n| n.0 <= horizon) else {
            go_to(&mut state, &mut traj, horizon, &allocation)?;
            break;
        };
        go_to(&mut state, &mut traj, event_time, &allocation)?;
        let kind = apply_event(&mut state, event, traffic, streams)?;
        let counts = state.counts();
        allocation = policy.allocate(topology, &counts)?;
        traj.event_count += 1;
        if options.check_feasibility && !check_feasible(topology, &allocation.route_total, FEASIBILITY_TOLERANCE).unwrap_or(false) {
            return Err(EngineError::InfeasibleAllocation { time: state.time });
        }
        if counts.iter().zip(&allocation.per_document_rate).any(|(&z, &l)| z > 0 && l <= 0.0) {
            traj.stalled_events += 1;
        }
        let record = EventRecord {
            time: state.time,
            kind,
            per_document_rate: allocation.per_document_rate.clone(),
            lambda_w: allocation.min_weighted_rate,
            counts,
        };
        for o in observers.iter_mut() {
            o.on_event(&state, &record, &allocation);
        }
        if options.record_states {
            traj.states.push(state.markov());
        }
        if options.record_events {
            traj.events.push(record);
        }
    }
    Ok(RunOutput { trajectory: traj, state })
}

#[cfg(test)]
mod tests;
