//! Weighted max–min fair allocation by progressive filling, a bisection
//! oracle for cross-checking, and a bottleneck certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_feasible, NetworkTopology, TopologyViolation};

/// Relative tolerance under which two links are considered to saturate at
/// the same level.
pub const SATURATION_TIE: f64 = 1e-12;

const ORACLE_MAX_LINKS: usize = 6;
const ORACLE_MAX_ROUTES: usize = 8;
const ORACLE_ITERATIONS: usize = 200;
const ORACLE_BUMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("dimension mismatch: expected {expected} routes, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid topology: {0:?}")]
    InvalidTopology(Vec<TopologyViolation>),
    #[error("instance too large for the oracle ({links} links, {routes} routes)")]
    InstanceTooLarge { links: usize, routes: usize },
}

/// Service rates for a document-count vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// λ_r, the rate each document on route r receives (0 on empty routes).
    pub per_document_rate: Vec<f64>,
    /// Λ_r = λ_r z_r.
    pub route_total: Vec<f64>,
    /// λ^w = min over nonempty routes of λ_r / w_r; `+∞` for the empty system.
    pub min_weighted_rate: f64,
    /// Water level at which each nonempty route was frozen (0 on empty routes).
    pub frozen_level: Vec<f64>,
    pub saturated_links: Vec<usize>,
}

impl Allocation {
    pub fn zero(routes: usize) -> Self {
        Allocation {
            per_document_rate: vec![0.0; routes],
            route_total: vec![0.0; routes],
            min_weighted_rate: f64::INFINITY,
            frozen_level: vec![0.0; routes],
            saturated_links: Vec::new(),
        }
    }

    fn from_levels(
        topology: &NetworkTopology,
        z: &[u64],
        level: Vec<f64>,
        saturated_links: Vec<usize>,
    ) -> Self {
        let per_document_rate: Vec<f64> = level
            .iter()
            .zip(&topology.weight)
            .zip(z)
            .map(|((t, w), &n)| if n > 0 { w * t } else { 0.0 })
            .collect();
        let route_total = per_document_rate
            .iter()
            .zip(z)
            .map(|(l, &n)| l * n as f64)
            .collect();
        let min_weighted_rate = per_document_rate
            .iter()
            .zip(&topology.weight)
            .zip(z)
            .filter(|(_, &n)| n > 0)
            .map(|((l, w), _)| l / w)
            .fold(f64::INFINITY, f64::min);
        Allocation {
            per_document_rate,
            route_total,
            min_weighted_rate,
            frozen_level: level,
            saturated_links,
        }
    }
}

/// A rule mapping document counts to service rates.
pub trait AllocationPolicy: Send + Sync {
    fn allocate(&self, topology: &NetworkTopology, z: &[u64]) -> Result<Allocation, AllocationError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedMaxMin;

impl AllocationPolicy for WeightedMaxMin {
    fn allocate(&self, topology: &NetworkTopology, z: &[u64]) -> Result<Allocation, AllocationError> {
        wmmf_allocate(topology, z)
    }
}

fn precheck(topology: &NetworkTopology, z: &[u64]) -> Result<(), AllocationError> {
    let violations = topology.violations();
    if !violations.is_empty() {
        return Err(AllocationError::InvalidTopology(violations));
    }
    if z.len() != topology.num_routes() {
        return Err(AllocationError::DimensionMismatch {
            expected: topology.num_routes(),
            actual: z.len(),
        });
    }
    Ok(())
}

/// Progressive filling.
///
/// All unfrozen nonempty routes share a common level `t` with `λ_r = w_r t`.
/// The level rises until some link's capacity is exhausted; every unfrozen
/// route through such a link is frozen at that level. Links saturating within
/// [`SATURATION_TIE`] of the minimum are handled in the same round.
pub fn wmmf_allocate(topology: &NetworkTopology, z: &[u64]) -> Result<Allocation, AllocationError> {
    precheck(topology, z)?;
    let (links, routes) = (topology.num_links(), topology.num_routes());
    let mut level = vec![0.0; routes];
    let mut active: Vec<bool> = z.iter().map(|&n| n > 0).collect();
    let mut saturated = vec![false; links];
    // capacity consumed by frozen routes
    let mut used = vec![0.0; links];

    while active.iter().any(|&a| a) {
        let mut best = f64::INFINITY;
        let mut candidate = vec![f64::INFINITY; links];
        for l in 0..links {
            if saturated[l] {
                continue;
            }
            let demand: f64 = (0..routes)
                .filter(|&r| active[r])
                .map(|r| topology.incidence[l][r] * topology.weight[r] * z[r] as f64)
                .sum();
            if demand > 0.0 {
                let remaining = (topology.capacity[l] - used[l]).max(0.0);
                candidate[l] = remaining / demand;
                best = best.min(candidate[l]);
            }
        }
        // unreachable for a validated topology: every active route crosses a link
        debug_assert!(best.is_finite());
        let mut newly_saturated = Vec::new();
        for l in 0..links {
            if candidate[l].is_finite() && candidate[l] <= best * (1.0 + SATURATION_TIE) {
                saturated[l] = true;
                newly_saturated.push(l);
            }
        }
        for r in 0..routes {
            if active[r] && newly_saturated.iter().any(|&l| topology.incidence[l][r] > 0.0) {
                active[r] = false;
                level[r] = best;
                let total = topology.weight[r] * best * z[r] as f64;
                for (l, u) in used.iter_mut().enumerate() {
                    *u += topology.incidence[l][r] * total;
                }
            }
        }
    }
    let saturated_links = (0..links).filter(|&l| saturated[l]).collect();
    Ok(Allocation::from_levels(topology, z, level, saturated_links))
}

/// Reference allocation by a hierarchy of max-min problems.
///
/// Each round bisects for the largest common level `t` such that giving
/// every unfixed nonempty route `w_r t` (and fixed routes their rates) is
/// feasible. Routes that cannot be pushed above `w_r t` are then fixed, and
/// the remaining routes are solved again. Restricted to small instances.
pub fn oracle_allocate(topology: &NetworkTopology, z: &[u64]) -> Result<Allocation, AllocationError> {
    precheck(topology, z)?;
    let (links, routes) = (topology.num_links(), topology.num_routes());
    if links > ORACLE_MAX_LINKS || routes > ORACLE_MAX_ROUTES {
        return Err(AllocationError::InstanceTooLarge { links, routes });
    }
    let min_aw = (0..links)
        .flat_map(|l| (0..routes).map(move |r| (l, r)))
        .map(|(l, r)| topology.incidence[l][r] * topology.weight[r])
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let max_c = topology.capacity.iter().copied().fold(0.0, f64::max);
    let upper = max_c / min_aw;

    let mut fixed: Vec<Option<f64>> = z.iter().map(|&n| if n > 0 { None } else { Some(0.0) }).collect();

    // Σ_r A[l][r] Λ_r ≤ c_l with every unfixed route at w_r t, one route
    // optionally scaled by `bump`
    let feasible = |fixed: &[Option<f64>], t: f64, bumped: Option<usize>| -> bool {
        (0..links).all(|l| {
            let load: f64 = (0..routes)
                .map(|r| {
                    let lvl = match fixed[r] {
                        Some(v) => v,
                        None if Some(r) == bumped => t * (1.0 + ORACLE_BUMP),
                        None => t,
                    };
                    topology.incidence[l][r] * topology.weight[r] * lvl * z[r] as f64
                })
                .sum();
            load <= topology.capacity[l]
        })
    };

    while fixed.iter().any(Option::is_none) {
        let (mut lo, mut hi) = (0.0_f64, upper);
        for _ in 0..ORACLE_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if feasible(&fixed, mid, None) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let binding: Vec<usize> = (0..routes)
            .filter(|&r| fixed[r].is_none() && !feasible(&fixed, lo, Some(r)))
            .collect();
        let binding = if binding.is_empty() {
            // precision exhausted: everything left is at its ceiling
            (0..routes).filter(|&r| fixed[r].is_none()).collect()
        } else {
            binding
        };
        for r in binding {
            fixed[r] = Some(lo);
        }
    }
    let level: Vec<f64> = fixed.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let totals: Vec<f64> = (0..routes)
        .map(|r| topology.weight[r] * level[r] * z[r] as f64)
        .collect();
    let loads = topology.link_loads(&totals).expect("dimensions checked");
    let saturated = (0..links)
        .filter(|&l| loads[l] >= topology.capacity[l] * (1.0 - ORACLE_BUMP))
        .collect();
    Ok(Allocation::from_levels(topology, z, level, saturated))
}

/// Necessary condition for max–min optimality of the minimum level: the
/// allocation is feasible and every nonempty route achieving λ^w crosses a
/// saturated link. Saturation is recomputed from the link loads.
pub fn bottleneck_certificate(topology: &NetworkTopology, z: &[u64], allocation: &Allocation) -> bool {
    const TOL: f64 = 1e-9;
    if z.iter().all(|&n| n == 0) {
        return true;
    }
    match check_feasible(topology, &allocation.route_total, TOL) {
        Ok(true) => {}
        _ => return false,
    }
    let loads = match topology.link_loads(&allocation.route_total) {
        Ok(l) => l,
        Err(_) => return false,
    };
    let saturated: Vec<bool> = loads
        .iter()
        .zip(&topology.capacity)
        .map(|(x, c)| *x >= c - TOL * c.max(1.0))
        .collect();
    let floor = allocation.min_weighted_rate;
    (0..topology.num_routes())
        .filter(|&r| z[r] > 0)
        .filter(|&r| {
            let lw = allocation.per_document_rate[r] / topology.weight[r];
            (lw - floor).abs() <= TOL * floor.abs().max(1.0)
        })
        .all(|r| (0..topology.num_links()).any(|l| topology.incidence[l][r] > 0.0 && saturated[l]))
}
