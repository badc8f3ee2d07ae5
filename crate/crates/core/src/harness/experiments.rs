//! Service-rate bound, stability contrast and processor-sharing benchmarks.

use serde::Serialize;

use super::stats::{mean, slope, summarize, Summary};
use super::{checked, engine_state, replicate, single_link_poisson, HarnessError};
use crate::allocation::WeightedMaxMin;
use crate::distributions::DistributionSpec;
use crate::engine::{run, RunOptions, Trajectory};
use crate::lyapunov::{gamma_report, NormContext};
use crate::model::{check_subcritical, MarkovState, NetworkTopology, TrafficSpec};
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundReport {
    /// Why the check did not run, if it did not.
    pub skipped: Option<String>,
    /// The Γ checks failed, so violations are informational only.
    pub report_only: bool,
    pub bound: f64,
    pub epochs_checked: usize,
    /// `min λ^w(t) |X(t)|_S` over nonempty event epochs.
    pub min_product: f64,
    /// `(time, product)` where the product falls below `1 + ε₇`.
    pub violations: Vec<(f64, f64)>,
}

/// Evaluates `λ^w(t) |X(t)|_S` after every event of a trajectory recorded
/// with post-event states.
pub fn check_rate_bound(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    trajectory: &Trajectory,
    ctx: &NormContext,
) -> Result<RateBoundReport, HarnessError> {
    let bound = 1.0 + ctx.params.epsilon7;
    let mut report = RateBoundReport {
        skipped: None,
        report_only: false,
        bound,
        epochs_checked: 0,
        min_product: f64::INFINITY,
        violations: Vec::new(),
    };
    if !check_subcritical(topology, &traffic.traffic_intensity())?.subcritical {
        report.skipped = Some("supercritical configuration".into());
        return Ok(report);
    }
    if trajectory.states.len() != trajectory.events.len() {
        return Err(HarnessError::IncompleteLog(trajectory.horizon));
    }
    report.report_only = !ctx
        .routes
        .iter()
        .enumerate()
        .all(|(r, c)| gamma_report(&ctx.params, c, r, ctx.mean_service[r]).passed());
    for (event, state) in trajectory.events.iter().zip(&trajectory.states) {
        if state.count() == 0 {
            continue;
        }
        let product = event.lambda_w * ctx.norm_all(state)?.norm_s;
        report.epochs_checked += 1;
        report.min_product = report.min_product.min(product);
        if product < bound * (1.0 - 1e-9) {
            report.violations.push((event.time, product));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub seed: u64,
    pub horizon: f64,
    pub replications: usize,
    pub times: Vec<f64>,
    /// `E|X(t)|` across replications at each sample time.
    pub mean_counts: Vec<f64>,
    /// Per-replication mean count over the second half of the horizon.
    pub tail_mean: Summary,
    /// Per-replication least-squares slope of `|X(t)|` over the second half.
    pub slope: Summary,
}

/// Samples `|X(t)|` at `samples` even epochs from `initial` (empty when
/// `None`) and fits the growth rate over the second half of the horizon.
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    initial: Option<&MarkovState>,
    horizon: f64,
    samples: usize,
    replications: usize,
    seed: u64,
) -> Result<StabilityReport, HarnessError> {
    if replications < 2 || samples < 4 {
        return Err(HarnessError::Invalid("stability needs 2+ replications and 4+ samples".into()));
    }
    let routes = traffic.num_routes();
    let empty = MarkovState::empty(routes, vec![0.0; routes]);
    let initial = initial.unwrap_or(&empty);
    let mut options = RunOptions::new(horizon).with_samples(samples);
    options.record_events = false;
    let ids: Vec<u64> = (0..replications as u64).collect();
    let series = replicate(&ids, |rep| {
        let state = engine_state(traffic, initial, seed, rep)?;
        let out = run(topology, traffic, &WeightedMaxMin, state, &options, &mut Streams::new(seed, rep, routes), &mut [])?;
        checked(&out.state, rep)?;
        Ok(out
            .trajectory
            .samples
            .iter()
            .map(|s| s.counts.iter().sum::<u64>() as f64)
            .collect::<Vec<f64>>())
    })?;
    let times = options.sample_times.clone();
    let half = times.len() / 2;
    let mean_counts = (0..times.len())
        .map(|i| mean(&series.iter().map(|s| s[i]).collect::<Vec<_>>()))
        .collect();
    let tails: Vec<f64> = series.iter().map(|s| mean(&s[half..])).collect();
    let slopes: Vec<f64> = series.iter().map(|s| slope(&times[half..], &s[half..])).collect();
    Ok(StabilityReport {
        schema_version: 1,
        seed,
        horizon,
        replications,
        times,
        mean_counts,
        tail_mean: summarize(&tails),
        slope: summarize(&slopes),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub service: String,
    pub rho: f64,
    pub horizon: f64,
    /// `ρ/(1−ρ)`.
    pub expected: f64,
    /// Time-average number of documents, one value per replication.
    pub mean_count: Summary,
    /// Signed: `(observed − expected) / expected`.
    pub relative_error: f64,
}

/// Single link of unit capacity, Poisson arrivals at `ρ/m`: the mean number
/// in system should be `ρ/(1−ρ)` whatever the service law.
pub fn ps_benchmark(
    service: &DistributionSpec,
    rho: f64,
    horizon: f64,
    replications: usize,
    seed: u64,
) -> Result<PsReport, HarnessError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(HarnessError::SupercriticalConfig(vec![1.0 - rho]));
    }
    let (topology, traffic) = single_link_poisson(rho, service.clone());
    let mut options = RunOptions::new(horizon);
    options.record_events = false;
    let ids: Vec<u64> = (0..replications as u64).collect();
    let empty = MarkovState::empty(1, vec![0.0]);
    let averages = replicate(&ids, |rep| {
        let state = engine_state(&traffic, &empty, seed, rep)?;
        let out = run(&topology, &traffic, &WeightedMaxMin, state, &options, &mut Streams::new(seed, rep, 1), &mut [])?;
        checked(&out.state, rep)?;
        Ok(out.trajectory.mean_count())
    })?;
    let expected = rho / (1.0 - rho);
    let mean_count = summarize(&averages);
    Ok(PsReport {
        schema_version: 1,
        seed,
        service: service.family().into(),
        rho,
        horizon,
        expected,
        relative_error: (mean_count.mean - expected) / expected,
        mean_count,
    })
}
