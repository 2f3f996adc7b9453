//! Seeded random streams.
//!
//! Every random draw in the crate comes from a stream keyed by a base seed and
//! a short path of tags (iteration, instance index, purpose). The same key
//! always yields the same stream, regardless of evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `(seed, tags…)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Tag values that keep streams for different purposes apart.
pub mod tag {
    pub const DATA: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const LEVEL: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const NEGATIVE: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SOLVE: u64 = 7;
    pub const REVERSE: u64 = 8;
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn normal_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), normal_vec(rng, n)).expect("length matches shape")
}
