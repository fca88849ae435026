//! Deterministic, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a [`StreamKey`] derived
//! from the master seed by a fixed path of child indices (trial, sample,
//! batch, ...). A key expands into a ChaCha8 seed, and the final component
//! selects one of ChaCha's 2^64 independent streams. Results therefore depend
//! only on the path, never on which thread did the work or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the tree of random streams rooted at a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        StreamKey(splitmix64(master_seed ^ 0x05ee_d0f5_u64.rotate_left(17)))
    }

    /// Derives the child key at `index`. Distinct indices give unrelated keys.
    pub fn child(self, index: u64) -> Self {
        StreamKey(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c908)),
        ))
    }

    /// Opens stream `stream` of the generator keyed by this node.
    pub fn rng(self, stream: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(key: StreamKey, stream: u64) -> Vec<u64> {
        let mut rng = key.rng(stream);
        (0..4).map(|_| rng.random()).collect()
    }

    #[test]
    fn same_path_same_stream() {
        let key = StreamKey::root(7).child(3);
        assert_eq!(draws(key, 2), draws(StreamKey::root(7).child(3), 2));
    }

    #[test]
    fn siblings_and_streams_differ() {
        let key = StreamKey::root(7);
        assert_ne!(key.child(0), key.child(1));
        assert_ne!(key.child(0).child(1), key.child(1).child(0));
        assert_ne!(draws(key, 0), draws(key, 1));
        assert_ne!(draws(StreamKey::root(7), 0), draws(StreamKey::root(8), 0));
    }
}
