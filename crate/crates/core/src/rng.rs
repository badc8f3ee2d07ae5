//! Deterministic random streams keyed by (seed, replication, route, purpose).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Interarrival = 1,
    Service = 2,
    InitialState = 3,
    InitialInterarrival = 4,
    Test = 15,
}

/// Independent ChaCha stream for one (replication, route, purpose) triple.
///
/// The global seed keys the cipher; the other three components select the
/// 64-bit stream id, so streams never overlap and do not depend on the order
/// in which they are created.
pub fn stream(seed: u64, replication: u64, route: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = (replication << 24) ^ ((route & 0xF_FFFF) << 4) ^ purpose as u64;
    rng.set_stream(id);
    rng
}

/// Per-route interarrival and service streams of one replication.
#[derive(Debug, Clone)]
pub struct Streams {
    pub interarrival: Vec<StreamRng>,
    pub service: Vec<StreamRng>,
}

impl Streams {
    pub fn new(seed: u64, replication: u64, routes: usize) -> Self {
        Streams {
            interarrival: (0..routes as u64)
                .map(|r| stream(seed, replication, r, Purpose::Interarrival))
                .collect(),
            service: (0..routes as u64)
                .map(|r| stream(seed, replication, r, Purpose::Service))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let draw = |rep, route, p| stream(42, rep, route, p).random::<u64>();
        assert_eq!(draw(0, 0, Purpose::Service), draw(0, 0, Purpose::Service));
        assert_ne!(draw(0, 0, Purpose::Service), draw(0, 0, Purpose::Interarrival));
        assert_ne!(draw(0, 0, Purpose::Service), draw(1, 0, Purpose::Service));
        assert_ne!(draw(0, 0, Purpose::Service), draw(0, 1, Purpose::Service));
    }
}
