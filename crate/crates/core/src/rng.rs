//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream addressed by a run seed,
//! a role tag and a short tuple of indices (sample, step, round, ...). Streams
//! are independent of evaluation order, so results do not depend on how work
//! is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Data = 1,
    BatchIndex = 2,
    BatchOffset = 3,
    EncoderNoise = 4,
    PriorDraw = 5,
    MeasurementNoise = 6,
    ProposalDraw = 7,
    Reconstruction = 8,
    Init = 9,
    Study = 10,
    TrainNoise = 11,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a key tuple into a 256-bit ChaCha seed.
fn derive_seed(seed: u64, role: Role, indices: &[u64]) -> [u8; 32] {
    let mut h = splitmix64(seed ^ 0x4253_4931);
    h = splitmix64(h ^ role as u64);
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i));
    }
    h = splitmix64(h ^ indices.len() as u64);
    let mut out = [0u8; 32];
    let mut state = h;
    for chunk in out.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// A deterministic generator for one `(seed, role, indices)` address.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, role: Role, indices: &[u64]) -> Self {
        Self {
            inner: ChaCha8Rng::from_seed(derive_seed(seed, role, indices)),
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}

/// Source of standard-normal noise vectors. Tests substitute fixed noise
/// (for example all zeros) through this trait.
pub trait NoiseSource {
    fn standard_normal(&mut self, n: usize) -> Vec<f64>;
    fn uniform01(&mut self) -> f64;
}

impl NoiseSource for Stream {
    fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        self.normal_vec(n)
    }

    fn uniform01(&mut self) -> f64 {
        self.uniform()
    }
}

/// Noise source that always returns zeros (and 0 for uniforms).
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        vec![0.0; n]
    }

    fn uniform01(&mut self) -> f64 {
        0.0
    }
}

/// Stable 64-bit content hash used to key per-sample streams by sample value.
pub fn hash_u32s(values: &[u32]) -> u64 {
    let mut h = splitmix64(values.len() as u64);
    for &v in values {
        h = splitmix64(h ^ v as u64);
    }
    h
}
