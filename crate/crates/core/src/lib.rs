//! Simulation and analysis of bandwidth-sharing networks under weighted
//! max-min fair allocation.

// `!(x > 0.0)` is how validation rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod distributions;
pub mod engine;
pub mod harness;
pub mod lyapunov;
pub mod model;
pub mod quad;
pub mod rng;

pub use allocation::{wmmf_allocate, Allocation, AllocationError, AllocationPolicy, WeightedMaxMin};
pub use distributions::{DistributionError, DistributionSpec};
pub use model::{MarkovState, ModelError, NetworkTopology, RouteTraffic, TopologyViolation, TrafficSpec};
