//! Splittable, counter-keyed random streams.
//!
//! An [`RngState`] is a 128-bit key. Splitting derives child keys by hashing
//! `(key, child index)`, so the stream a consumer sees depends only on where it
//! sits in the split tree, never on scheduling. Sampling expands a key into a
//! ChaCha8 stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    key: [u64; 2],
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(key: [u64; 2], tag: u64, data: u64) -> [u64; 2] {
    let a = splitmix(key[0] ^ splitmix(tag ^ 0x5851_f42d_4c95_7f2d));
    let b = splitmix(key[1] ^ splitmix(data.wrapping_add(a)));
    [splitmix(a ^ b.rotate_left(17)), splitmix(b ^ a.rotate_left(41) ^ data)]
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        Self { key: mix([0x6a09_e667_f3bc_c908, 0xbb67_ae85_84ca_a73b], 0, seed) }
    }

    pub fn from_key(key: [u64; 2]) -> Self {
        Self { key }
    }

    pub fn key(&self) -> [u64; 2] {
        self.key
    }

    /// `n` independent children. The parent is a value and is left untouched.
    pub fn split(&self, n: usize) -> Vec<RngState> {
        (0..n as u64).map(|i| Self { key: mix(self.key, 1, i) }).collect()
    }

    /// Child keyed by arbitrary data (e.g. a step index).
    pub fn fold_in(&self, data: u64) -> RngState {
        Self { key: mix(self.key, 2, data) }
    }

    /// Deterministic sampling stream for this key.
    pub fn stream(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let k0 = splitmix(self.key[0] ^ 0x243f_6a88_85a3_08d3);
        let k1 = splitmix(self.key[1] ^ 0x1319_8a2e_0370_7344);
        let words = [self.key[0], self.key[1], k0, k1];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Free-function form of [`RngState::split`].
pub fn rng_split(state: &RngState, n: usize) -> Vec<RngState> {
    assert!(n >= 1, "rng_split needs n >= 1");
    state.split(n)
}
