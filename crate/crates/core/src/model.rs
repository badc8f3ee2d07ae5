//! Static network description: links, routes, the incidence matrix, and
//! per-route traffic laws.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::DistributionSpec;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum TopologyViolation {
    #[error("link {0} has nonpositive capacity")]
    ZeroCapacity(usize),
    #[error("route {0} has nonpositive weight")]
    ZeroWeight(usize),
    #[error("incidence entry A[{0}][{1}] is negative")]
    NegativeIncidence(usize, usize),
    #[error("route {0} crosses no link")]
    DisconnectedRoute(usize),
    #[error("incidence matrix shape does not match {links} links x {routes} routes")]
    Shape { links: usize, routes: usize },
    #[error("non-finite value in topology")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid topology: {0:?}")]
    InvalidTopology(Vec<TopologyViolation>),
    #[error("invalid traffic for route {route}: {reason}")]
    InvalidTraffic { route: usize, reason: String },
}

/// Links, routes and the linear capacity constraint `A Λ ≤ c`.
///
/// `incidence[l][r]` is the nonnegative coefficient coupling route `r`'s
/// total rate to link `l`. Entries above 1 are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkTopology {
    pub incidence: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub weight: Vec<f64>,
}

impl NetworkTopology {
    pub fn new(incidence: Vec<Vec<f64>>, capacity: Vec<f64>, weight: Vec<f64>) -> Self {
        NetworkTopology {
            incidence,
            capacity,
            weight,
        }
    }

    /// Unit-weight single link shared by `routes` routes.
    pub fn single_link(capacity: f64, routes: usize) -> Self {
        NetworkTopology::new(vec![vec![1.0; routes]], vec![capacity], vec![1.0; routes])
    }

    pub fn num_links(&self) -> usize {
        self.capacity.len()
    }

    pub fn num_routes(&self) -> usize {
        self.weight.len()
    }

    pub fn entry(&self, link: usize, route: usize) -> f64 {
        self.incidence[link][route]
    }

    /// Every structural violation, in link-then-route order.
    pub fn violations(&self) -> Vec<TopologyViolation> {
        let (links, routes) = (self.num_links(), self.num_routes());
        let mut out = Vec::new();
        if self.incidence.len() != links || self.incidence.iter().any(|row| row.len() != routes) {
            out.push(TopologyViolation::Shape { links, routes });
            return out;
        }
        let all_values = self
            .capacity
            .iter()
            .chain(self.weight.iter())
            .chain(self.incidence.iter().flatten());
        if all_values.clone().any(|v| !v.is_finite()) {
            out.push(TopologyViolation::NonFinite);
            return out;
        }
        for (l, &c) in self.capacity.iter().enumerate() {
            if c <= 0.0 {
                out.push(TopologyViolation::ZeroCapacity(l));
            }
        }
        for (r, &w) in self.weight.iter().enumerate() {
            if w <= 0.0 {
                out.push(TopologyViolation::ZeroWeight(r));
            }
        }
        for (l, row) in self.incidence.iter().enumerate() {
            for (r, &a) in row.iter().enumerate() {
                if a < 0.0 {
                    out.push(TopologyViolation::NegativeIncidence(l, r));
                }
            }
        }
        for r in 0..routes {
            if !(0..links).any(|l| self.incidence[l][r] > 0.0) {
                out.push(TopologyViolation::DisconnectedRoute(r));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// Returns the topology unchanged when every invariant holds.
    pub fn validate(self) -> Result<Self, Vec<TopologyViolation>> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(violations)
        }
    }

    /// `Σ_r A[l][r] x[r]` for every link.
    pub fn link_loads(&self, per_route: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len(self.num_routes(), per_route.len())?;
        Ok(self
            .incidence
            .iter()
            .map(|row| row.iter().zip(per_route).map(|(a, x)| a * x).sum())
            .collect())
    }
}

/// Interarrival and service laws of one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteTraffic {
    pub interarrival: DistributionSpec,
    pub service: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrafficSpec {
    pub routes: Vec<RouteTraffic>,
}

impl TrafficSpec {
    pub fn new(routes: Vec<RouteTraffic>) -> Self {
        TrafficSpec { routes }
    }

    /// Poisson arrivals at `arrival_rate` with the given service law.
    pub fn poisson(arrival_rate: f64, service: DistributionSpec) -> RouteTraffic {
        RouteTraffic {
            interarrival: DistributionSpec::Exponential {
                mean: 1.0 / arrival_rate,
            },
            service,
        }
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    /// ν_r, the reciprocal mean interarrival time.
    pub fn arrival_rates(&self) -> Vec<f64> {
        self.routes.iter().map(|t| 1.0 / t.interarrival.mean()).collect()
    }

    /// m_r, the mean service requirement.
    pub fn mean_services(&self) -> Vec<f64> {
        self.routes.iter().map(|t| t.service.mean()).collect()
    }

    pub fn traffic_intensity(&self) -> Vec<f64> {
        traffic_intensity(&self.arrival_rates(), &self.mean_services())
    }

    pub fn validate(&self, routes: usize) -> Result<(), ModelError> {
        check_len(routes, self.routes.len())?;
        for (r, t) in self.routes.iter().enumerate() {
            let invalid = |reason: String| ModelError::InvalidTraffic { route: r, reason };
            t.interarrival
                .validate()
                .map_err(|e| invalid(format!("interarrival: {e}")))?;
            t.service
                .validate()
                .map_err(|e| invalid(format!("service: {e}")))?;
            let nu = 1.0 / t.interarrival.mean();
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(invalid(format!("arrival rate {nu} is not positive and finite")));
            }
            let m = t.service.mean();
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid(format!("mean service {m} is not positive and finite")));
            }
        }
        Ok(())
    }
}

/// ρ_r = ν_r m_r.
pub fn traffic_intensity(arrival_rate: &[f64], mean_service: &[f64]) -> Vec<f64> {
    arrival_rate
        .iter()
        .zip(mean_service)
        .map(|(nu, m)| nu * m)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubcriticalReport {
    /// c_l − Σ_r A[l][r] ρ_r per link.
    pub slack: Vec<f64>,
    pub subcritical: bool,
}

pub fn check_subcritical(
    topology: &NetworkTopology,
    rho: &[f64],
) -> Result<SubcriticalReport, ModelError> {
    let load = topology.link_loads(rho)?;
    let slack: Vec<f64> = topology
        .capacity
        .iter()
        .zip(&load)
        .map(|(c, x)| c - x)
        .collect();
    let subcritical = slack.iter().all(|&s| s > 0.0);
    Ok(SubcriticalReport { slack, subcritical })
}

/// Capacity constraint on route totals: `Σ_r A[l][r] Λ_r ≤ c_l + tolerance`.
pub fn check_feasible(
    topology: &NetworkTopology,
    route_total: &[f64],
    tolerance: f64,
) -> Result<bool, ModelError> {
    let load = topology.link_loads(route_total)?;
    Ok(load
        .iter()
        .zip(&topology.capacity)
        .all(|(x, c)| *x <= c + tolerance))
}

fn check_len(expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, actual })
    }
}

/// The Markov state descriptor `x = (z(·), u)`: residual service times per
/// route (ascending) and residual interarrival times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovState {
    pub residuals: Vec<Vec<f64>>,
    pub interarrival: Vec<f64>,
}

impl MarkovState {
    pub fn new(mut residuals: Vec<Vec<f64>>, interarrival: Vec<f64>) -> Self {
        for r in residuals.iter_mut() {
            r.sort_by(f64::total_cmp);
        }
        MarkovState {
            residuals,
            interarrival,
        }
    }

    pub fn empty(routes: usize, interarrival: Vec<f64>) -> Self {
        MarkovState::new(vec![Vec::new(); routes], interarrival)
    }

    pub fn num_routes(&self) -> usize {
        self.residuals.len()
    }

    /// |x|, the total number of documents.
    pub fn count(&self) -> usize {
        self.residuals.iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.residuals.iter().map(Vec::len).collect()
    }

    /// Superposition of two states' documents; keeps `self`'s interarrival times.
    pub fn merged(&self, other: &MarkovState) -> MarkovState {
        let residuals = self
            .residuals
            .iter()
            .zip(&other.residuals)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        MarkovState::new(residuals, self.interarrival.clone())
    }

    /// Distance `d(x, x')` on the state space: documents are ordered by
    /// residual (ties by route) and compared pairwise, missing slots count as
    /// `(0, 0)`, each pair's contribution is capped at 1, and interarrival
    /// residuals add their absolute differences.
    pub fn distance(&self, other: &MarkovState) -> f64 {
        let ordered = |x: &MarkovState| {
            let mut docs: Vec<(f64, usize)> = x
                .residuals
                .iter()
                .enumerate()
                .flat_map(|(r, res)| res.iter().map(move |&s| (s, r + 1)))
                .collect();
            docs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            docs
        };
        let (mine, theirs) = (ordered(self), ordered(other));
        let slots = mine.len().max(theirs.len());
        let at = |v: &[(f64, usize)], i: usize| v.get(i).copied().unwrap_or((0.0, 0));
        let docs: f64 = (0..slots)
            .map(|i| {
                let (s, r) = at(&mine, i);
                let (s2, r2) = at(&theirs, i);
                ((r as f64 - r2 as f64).abs() + (s - s2).abs()).min(1.0)
            })
            .sum();
        let arrivals: f64 = self
            .interarrival
            .iter()
            .zip(&other.interarrival)
            .map(|(u, v)| (u - v).abs())
            .sum();
        docs + arrivals
    }
}
