//! Expected change of the total norm over `N³` time units.

use serde::Serialize;

use super::stats::{summarize, Summary};
use super::{checked, engine_state, replicate, require_subcritical, HarnessError};
use crate::allocation::WeightedMaxMin;
use crate::engine::{run, RunOptions};
use crate::lyapunov::{LyapunovParams, NormContext};
use crate::model::{MarkovState, NetworkTopology, TrafficSpec};
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEntry {
    pub initial_count: usize,
    /// ‖x‖.
    pub initial_norm: f64,
    /// Mean of ‖X(N³)‖.
    pub final_norm: f64,
    /// Estimated `E_x‖X(N³)‖ − ‖x‖` with its interval.
    pub drift: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub schema_version: u32,
    pub seed: u64,
    pub n: u32,
    pub horizon: f64,
    pub replications: usize,
    pub params: LyapunovParams,
    pub entries: Vec<DriftEntry>,
}

/// Runs `replications` independent paths from each initial state up to
/// `N³` and summarizes `‖X(N³)‖ − ‖x‖`.
pub fn estimate_drift(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    ctx: &NormContext,
    initial_states: &[MarkovState],
    replications: usize,
    seed: u64,
) -> Result<DriftReport, HarnessError> {
    let ids: Vec<Vec<u64>> = (0..initial_states.len())
        .map(|i| (0..replications as u64).map(|k| (i * replications) as u64 + k).collect())
        .collect();
    drift_with_ids(topology, traffic, ctx, initial_states, &ids, seed)
}

/// [`estimate_drift`] with explicit replication ids per initial state.
pub fn drift_with_ids(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    ctx: &NormContext,
    initial_states: &[MarkovState],
    ids: &[Vec<u64>],
    seed: u64,
) -> Result<DriftReport, HarnessError> {
    require_subcritical(topology, traffic)?;
    let replications = ids.first().map_or(0, Vec::len);
    if replications < 2 || ids.iter().any(|v| v.len() != replications) {
        return Err(HarnessError::Invalid("drift needs at least 2 replications per state".into()));
    }
    let n = ctx.params.n;
    let horizon = f64::from(n).powi(3);
    let mut options = RunOptions::new(horizon);
    options.record_events = false;
    let mut entries = Vec::with_capacity(initial_states.len());
    for (x, ids) in initial_states.iter().zip(ids) {
        let initial_norm = ctx.norm_all(x)?.total;
        let finals = replicate(ids, |rep| {
            let state = engine_state(traffic, x, seed, rep)?;
            let mut streams = Streams::new(seed, rep, traffic.num_routes());
            let out = run(topology, traffic, &WeightedMaxMin, state, &options, &mut streams, &mut [])?;
            checked(&out.state, rep)?;
            Ok(ctx.norm_all(&out.state.markov())?.total)
        })?;
        let diffs: Vec<f64> = finals.iter().map(|f| f - initial_norm).collect();
        entries.push(DriftEntry {
            initial_count: x.count(),
            initial_norm,
            final_norm: super::stats::mean(&finals),
            drift: summarize(&diffs),
        });
    }
    Ok(DriftReport {
        schema_version: 1,
        seed,
        n,
        horizon,
        replications,
        params: ctx.params,
        entries,
    })
}
