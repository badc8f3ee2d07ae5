//! Fixtures shared by the criterion benchmarks of the allocation and
//! simulation hot paths.

use rand::Rng;

use wmmf::model::{NetworkTopology, TrafficSpec};
use wmmf::rng::{stream, Purpose};
use wmmf::DistributionSpec;

/// Random 0/1 incidence over `links × routes` with capacities in `[1, 3)`
/// and weights in `[1, 2)`; every route crosses at least one link.
pub fn random_topology(links: usize, routes: usize, seed: u64) -> NetworkTopology {
    let mut rng = stream(seed, 0, 0, Purpose::Test);
    let mut incidence = vec![vec![0.0; routes]; links];
    for r in 0..routes {
        incidence[rng.random_range(0..links)][r] = 1.0;
        for row in incidence.iter_mut() {
            if rng.random_bool(0.3) {
                row[r] = 1.0;
            }
        }
    }
    let capacity = (0..links).map(|_| rng.random_range(1.0..3.0)).collect();
    let weight = (0..routes).map(|_| rng.random_range(1.0..2.0)).collect();
    NetworkTopology::new(incidence, capacity, weight)
}

/// Document counts in `0..=max` per route.
pub fn random_counts(routes: usize, max: u64, seed: u64) -> Vec<u64> {
    let mut rng = stream(seed, 1, 0, Purpose::Test);
    (0..routes).map(|_| rng.random_range(0..=max)).collect()
}

/// Linear network: one long route over every link plus one short route
/// per link, all with unit capacity and weight.
pub fn linear_network(links: usize, load: f64) -> (NetworkTopology, TrafficSpec) {
    let routes = links + 1;
    let incidence = (0..links)
        .map(|l| (0..routes).map(|r| if r == 0 || r == l + 1 { 1.0 } else { 0.0 }).collect())
        .collect();
    let topology = NetworkTopology::new(incidence, vec![1.0; links], vec![1.0; routes]);
    // each link carries the long route and its own short route
    let per_route = load / 2.0;
    let traffic = TrafficSpec::new(
        (0..routes)
            .map(|_| TrafficSpec::poisson(per_route, DistributionSpec::Exponential { mean: 1.0 }))
            .collect(),
    );
    (topology, traffic)
}
