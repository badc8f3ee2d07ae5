//! Monte-Carlo experiments on top of the engine and the norms: drift of the
//! norm over a fixed horizon, event-set frequencies, the service-rate bound,
//! stability contrasts and processor-sharing benchmarks.

mod drift;
mod eventset;
mod experiments;
pub mod stats;

use rayon::prelude::*;
use thiserror::Error;

use crate::distributions::DistributionSpec;
use crate::engine::{self, EngineError, NetworkState};
use crate::lyapunov::LyapunovError;
use crate::model::{check_subcritical, MarkovState, ModelError, NetworkTopology, TrafficSpec};
use crate::rng::{stream, Purpose};

pub use drift::{drift_with_ids, estimate_drift, DriftEntry, DriftReport};
pub use eventset::{
    estimate_eventset_prob, event_set_indicator, EventSetConfig, EventSetOutcome, EventSetPoint, EventSetReport,
    Violation,
};
pub use experiments::{
    check_rate_bound, ps_benchmark, stability_experiment, PsReport, RateBoundReport, StabilityReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("configuration is not subcritical (per-link slack {0:?})")]
    SupercriticalConfig(Vec<f64>),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("trajectory does not cover time {0} or lacks its event log")]
    IncompleteLog(f64),
    #[error("replication {replication}: {message}")]
    InvariantViolation { replication: u64, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tolerance for the per-trajectory invariant checks.
pub const INVARIANT_TOLERANCE: f64 = 1e-9;

/// Runs `f` for every id in parallel and returns results in id order.
pub fn replicate<T, F>(ids: &[u64], f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, HarnessError> + Sync + Send,
{
    ids.par_iter().map(|&id| f(id)).collect()
}

pub(crate) fn require_subcritical(topology: &NetworkTopology, traffic: &TrafficSpec) -> Result<(), HarnessError> {
    let report = check_subcritical(topology, &traffic.traffic_intensity())?;
    if report.subcritical {
        Ok(())
    } else {
        Err(HarnessError::SupercriticalConfig(report.slack))
    }
}

pub(crate) fn checked(state: &NetworkState, replication: u64) -> Result<(), HarnessError> {
    engine::verify_invariants(state, INVARIANT_TOLERANCE)
        .map_err(|message| HarnessError::InvariantViolation { replication, message })
}

/// A state with `counts[r]` original documents per route whose residuals are
/// i.i.d. draws from the route's service law, and interarrival residuals
/// drawn from the interarrival laws. `index` selects independent states.
pub fn sample_initial_state(traffic: &TrafficSpec, counts: &[usize], seed: u64, index: u64) -> MarkovState {
    let residuals = traffic
        .routes
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(r, (t, &k))| {
            let mut rng = stream(seed, index, r as u64, Purpose::InitialState);
            (0..k).map(|_| t.service.sample(&mut rng)).collect()
        })
        .collect();
    let u = traffic
        .routes
        .iter()
        .enumerate()
        .map(|(r, t)| t.interarrival.sample(&mut stream(seed, index, r as u64, Purpose::InitialInterarrival)))
        .collect();
    MarkovState::new(residuals, u)
}

/// Engine state from a Markov descriptor; nonpositive interarrival
/// residuals are redrawn from the replication's stream.
pub(crate) fn engine_state(traffic: &TrafficSpec, x: &MarkovState, seed: u64, replication: u64) -> Result<NetworkState, HarnessError> {
    let u: Vec<Option<f64>> = x.interarrival.iter().map(|&u| (u > 0.0).then_some(u)).collect();
    let mut rng = stream(seed, replication, 0, Purpose::InitialInterarrival);
    Ok(engine::init_state(traffic, &x.residuals, &u, &mut rng)?)
}

/// Single link of capacity 1 with one Poisson route at intensity `rho`.
pub fn single_link_poisson(rho: f64, service: DistributionSpec) -> (NetworkTopology, TrafficSpec) {
    let m = service.mean();
    (
        NetworkTopology::single_link(1.0, 1),
        TrafficSpec::new(vec![TrafficSpec::poisson(rho / m, service)]),
    )
}
