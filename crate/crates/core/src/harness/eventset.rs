//! Regularity events for the weighted arrival sums along the `1/b³` grid.
//!
//! For every route `r` and grid point `v_j`, with `S_k` the service
//! requirements of the arrivals up to time `t`, the first event asks
//! `Σ_k Φ̄(v_j − S_k) ≤ 2ν_r (H̄*_r(v_j) t ∨ t^η)` and the second
//! `Σ_k φ(v_j − S_k) ≤ (1+ε₅) ν_r (h*_r(v_j) t ∨ t^η)`.

use serde::{Deserialize, Serialize};

use super::stats::{wilson, Proportion};
use super::{replicate, HarnessError};
use crate::allocation::WeightedMaxMin;
use crate::engine::{init_state, run, RunOptions, Trajectory};
use crate::lyapunov::{phi, phi_ccdf, NormContext};
use crate::model::{NetworkTopology, TrafficSpec};
use crate::rng::{stream, Purpose, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSetConfig {
    /// Exponent of the small-t floor `t^η`, in `(0, 1/12]`.
    pub eta: f64,
    /// Slack of the second event, in `(0, ε₇/4]`.
    pub epsilon5: f64,
}

impl EventSetConfig {
    pub fn validate(&self, epsilon7: f64) -> Result<(), HarnessError> {
        if !(self.eta > 0.0 && self.eta <= 1.0 / 12.0) {
            return Err(HarnessError::Invalid(format!("eta = {} must lie in (0, 1/12]", self.eta)));
        }
        if !(self.epsilon5 > 0.0 && self.epsilon5 <= epsilon7 / 4.0) {
            return Err(HarnessError::Invalid(format!(
                "epsilon5 = {} must lie in (0, epsilon7/4 = {}]",
                self.epsilon5,
                epsilon7 / 4.0
            )));
        }
        Ok(())
    }

    /// Number of grid steps, `J = b³ (N+1)`.
    pub fn steps(b: u32, n: u32) -> u64 {
        u64::from(b).pow(3) * (u64::from(n) + 1)
    }

    /// `v_j = j / b³` for `j = 0..=J`, so `v_J = N + 1`.
    pub fn grid(b: u32, n: u32) -> Vec<f64> {
        let cube = f64::from(b).powi(3);
        (0..=Self::steps(b, n)).map(|j| j as f64 / cube).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1 or 2.
    pub set: u8,
    pub route: usize,
    pub j: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSetOutcome {
    pub in_a1: bool,
    pub in_a2: bool,
    pub violations: Vec<Violation>,
}

impl EventSetOutcome {
    pub fn in_both(&self) -> bool {
        self.in_a1 && self.in_a2
    }
}

/// Evaluates both events from the arrival services logged up to `t`.
pub fn event_set_indicator(
    trajectory: &Trajectory,
    ctx: &NormContext,
    config: &EventSetConfig,
    t: f64,
) -> Result<EventSetOutcome, HarnessError> {
    if trajectory.horizon < t || (trajectory.event_count > 0 && trajectory.events.is_empty()) {
        return Err(HarnessError::IncompleteLog(t));
    }
    let b = ctx.params.b;
    let grid = EventSetConfig::grid(b, ctx.params.n);
    let floor = t.powf(config.eta);
    let mut violations = Vec::new();
    for (r, conv) in ctx.routes.iter().enumerate() {
        let services: Vec<f64> = trajectory.arrival_services(r, t).collect();
        let nu = ctx.arrival_rate[r];
        for (j, &v) in grid.iter().enumerate() {
            let tail_sum: f64 = services.iter().map(|&s| phi_ccdf(b, v - s)).sum();
            if tail_sum > 2.0 * nu * (conv.tail_at(v) * t).max(floor) {
                violations.push(Violation { set: 1, route: r, j: j as u64 });
            }
            let density_sum: f64 = services.iter().map(|&s| phi(b, v - s)).sum();
            if density_sum > (1.0 + config.epsilon5) * nu * (conv.density_at(v) * t).max(floor) {
                violations.push(Violation { set: 2, route: r, j: j as u64 });
            }
        }
    }
    Ok(EventSetOutcome {
        in_a1: !violations.iter().any(|v| v.set == 1),
        in_a2: !violations.iter().any(|v| v.set == 2),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSetPoint {
    pub t: f64,
    /// Frequency of leaving either event.
    pub complement: Proportion,
    pub a1_complements: u64,
    pub a2_complements: u64,
    /// `N e^{−t^η}`: the shape of the predicted decay with its unknown
    /// rate constant set to 1. For plotting only.
    pub decay_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSetReport {
    pub schema_version: u32,
    pub seed: u64,
    pub replications: usize,
    pub config: EventSetConfig,
    pub points: Vec<EventSetPoint>,
}

/// Empirical probability of the complement of the events at each `t`,
/// starting from the empty network.
pub fn estimate_eventset_prob(
    topology: &NetworkTopology,
    traffic: &TrafficSpec,
    ctx: &NormContext,
    config: &EventSetConfig,
    t_values: &[f64],
    replications: usize,
    seed: u64,
) -> Result<EventSetReport, HarnessError> {
    config.validate(ctx.params.epsilon7)?;
    if t_values.is_empty() || t_values.windows(2).any(|w| w[1] <= w[0]) || t_values[0] <= 0.0 {
        return Err(HarnessError::Invalid("t values must be positive and increasing".into()));
    }
    let horizon = *t_values.last().expect("nonempty");
    let mut options = RunOptions::new(horizon);
    options.record_events = true;
    let routes = traffic.num_routes();
    let ids: Vec<u64> = (0..replications as u64).collect();
    let outcomes = replicate(&ids, |rep| {
        let mut rng = stream(seed, rep, 0, Purpose::InitialInterarrival);
        let state = init_state(traffic, &vec![Vec::new(); routes], &vec![None; routes], &mut rng)?;
        let out = run(topology, traffic, &WeightedMaxMin, state, &options, &mut Streams::new(seed, rep, routes), &mut [])?;
        super::checked(&out.state, rep)?;
        t_values
            .iter()
            .map(|&t| event_set_indicator(&out.trajectory, ctx, config, t))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let n = f64::from(ctx.params.n);
    let points = t_values
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let column = outcomes.iter().map(|o| &o[i]);
            let misses = column.clone().filter(|o| !o.in_both()).count() as u64;
            EventSetPoint {
                t,
                complement: wilson(misses, replications as u64),
                a1_complements: column.clone().filter(|o| !o.in_a1).count() as u64,
                a2_complements: column.filter(|o| !o.in_a2).count() as u64,
                decay_shape: n * (-t.powf(config.eta)).exp(),
            }
        })
        .collect();
    Ok(EventSetReport {
        schema_version: 1,
        seed,
        replications,
        config: *config,
        points,
    })
}
