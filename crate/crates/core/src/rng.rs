//! Counter-addressed random streams.
//!
//! Every random number is a pure function of `(seed, purpose, stream, block, offset)`:
//! the ChaCha8 key is derived from `(seed, purpose)`, the ChaCha stream id is the
//! path index and the word position encodes `(block, offset)`. Results therefore do
//! not depend on evaluation order or on the number of workers.

use crate::numeric::norm_quantile_fast;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent families of random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 1,
    BridgeMax = 2,
    BetaRefine = 3,
    Fill = 4,
    InnerBridge = 5,
    Endpoint = 6,
    BridgeNoise = 7,
    Probe = 8,
    Shuffle = 9,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number of addressable blocks per stream.
pub const MAX_BLOCKS: u64 = 1 << 24;

/// Key of one random family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self { seed, purpose }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut st = self.seed ^ (self.purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut out = [0u8; 32];
        for chunk in out.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut st).to_le_bytes());
        }
        out
    }

    /// Positions a generator at `(stream, block, offset)`; each draw consumes one
    /// offset unit (two 32-bit words). The 64-bit ChaCha block counter is split
    /// into `block` (high 24 bits) and the position inside it (low 40 bits),
    /// so a block holds `2^43` draws.
    pub fn cursor(&self, stream: u64, block: u64, offset: u64) -> Cursor {
        assert!(block < MAX_BLOCKS, "random block index {block} out of range");
        assert!(offset < 1 << 43, "random offset {offset} out of range");
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(stream);
        rng.set_word_pos(((block as u128) << 44) | ((offset as u128) << 1));
        Cursor { rng }
    }
}

/// Sequential reader positioned by [`StreamKey::cursor`].
#[derive(Clone)]
pub struct Cursor {
    rng: ChaCha8Rng,
}

impl Cursor {
    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inverse transform.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        norm_quantile_fast(self.uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cursor_is_addressable() {
        let key = StreamKey::new(7, Purpose::Brownian);
        let mut a = key.cursor(3, 2, 0);
        let seq: Vec<f64> = (0..10).map(|_| a.normal()).collect();
        let mut b = key.cursor(3, 2, 4);
        assert_eq!(b.normal(), seq[4]);
        let mut c = key.cursor(4, 2, 0);
        assert_ne!(c.normal(), seq[0]);
        let other = StreamKey::new(7, Purpose::Fill);
        assert_ne!(other.cursor(3, 2, 0).normal(), seq[0]);
    }

    #[test]
    fn distant_blocks_differ() {
        let key = StreamKey::new(7, Purpose::Brownian);
        let first: Vec<u64> = (0..40).map(|b| key.cursor(0, b, 0).next_u64()).collect();
        for i in 0..first.len() {
            for j in 0..i {
                assert_ne!(first[i], first[j], "blocks {i} and {j} collide");
            }
        }
        let mut a = key.cursor(0, 3, 0);
        for _ in 0..1000 {
            a.next_u64();
        }
        assert_eq!(a.next_u64(), key.cursor(0, 3, 1000).next_u64());
        assert_ne!(key.cursor(0, 4, 0).next_u64(), key.cursor(0, 3, 1 << 20).next_u64());
    }

    #[test]
    fn uniforms_in_open_interval() {
        let mut c = StreamKey::new(1, Purpose::Probe).cursor(0, 0, 0);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            let u = c.uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        assert!((sum / 100_000.0 - 0.5).abs() < 0.005);
    }
}
