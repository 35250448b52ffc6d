//! Hierarchically derived random streams.
//!
//! Every stochastic stage of scene generation draws from its own stream keyed
//! by `(master_seed, scene_index, stage_label)`. Streams never share state, so
//! scene `i` comes out identical whichever worker builds it and in whatever
//! order the batch completes.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// FNV-1a, 64-bit. Stable across platforms and releases, unlike `std`'s hasher.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Where a stream came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub master_seed: u64,
    pub scene_index: u64,
    pub stage_label: String,
}

/// A deterministic, value-like random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    lineage: Lineage,
}

/// Derives the stream for one stage of one scene.
///
/// The three key components are mixed through SplitMix64 into a 256-bit
/// ChaCha key, so neighbouring indices and labels give unrelated sequences.
pub fn derive_stream(master_seed: u64, scene_index: u64, stage_label: &str) -> RngStream {
    assert!(!stage_label.is_empty(), "stage label must be nonempty");
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    state ^= scene_index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let b = splitmix64(&mut state);
    state ^= stable_hash(stage_label.as_bytes());
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);

    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip([a, b, c, d]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    RngStream {
        rng: ChaCha8Rng::from_seed(seed),
        lineage: Lineage {
            master_seed,
            scene_index,
            stage_label: stage_label.to_owned(),
        },
    }
}

impl RngStream {
    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    /// A child stream, keyed by this stream's lineage plus `label`.
    pub fn child(&self, label: &str) -> RngStream {
        let full = format!("{}/{}", self.lineage.stage_label, label);
        derive_stream(self.lineage.master_seed, self.lineage.scene_index, &full)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform real in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidRange(format!("[{lo}, {hi}]")));
        }
        if lo == hi {
            return Ok(lo);
        }
        Ok((lo + (hi - lo) * self.unit()).clamp(lo, hi))
    }

    /// Uniform integer in `[lo, hi]`, both ends inclusive.
    pub fn int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::InvalidRange(format!("[{lo}, {hi}]")));
        }
        Ok(self.rng.random_range(lo..=hi))
    }

    /// Infallible variant for call sites whose ranges were validated upstream.
    pub(crate) fn range(&mut self, range: [f64; 2]) -> f64 {
        self.uniform(range[0], range[1]).expect("validated range")
    }

    /// Index in `0..len`. Panics on `len == 0`.
    pub fn index(&mut self, len: usize) -> usize {
        self.rng.random_range(0..len)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Index drawn with the given (not necessarily normalized) weights.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    }

    /// Rotation drawn uniformly from SO(3) (Shoemake's method).
    pub fn rotation(&mut self) -> glam::DQuat {
        let u1 = self.unit();
        let u2 = self.unit() * std::f64::consts::TAU;
        let u3 = self.unit() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        glam::DQuat::from_xyzw(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()).normalize()
    }
}

/// Stream-free helpers taking an explicit stream, mirroring the operation names.
pub fn sample_uniform(stream: &mut RngStream, lo: f64, hi: f64) -> Result<f64> {
    stream.uniform(lo, hi)
}

pub fn sample_int(stream: &mut RngStream, lo: i64, hi: i64) -> Result<i64> {
    stream.int(lo, hi)
}
