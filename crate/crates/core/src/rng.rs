//! Deterministic randomness.
//!
//! All stochastic operations in this crate draw from ChaCha streams keyed by
//! an explicit `(seed, stream)` pair, so a run is reproducible from its master
//! seed alone and independent sub-tasks never share a stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Stream ids for the named sub-tasks of an optimization run. Values are part
/// of the reproducibility contract: changing them changes every trace.
pub mod streams {
    pub const INITIAL_DESIGN: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const MAP_INIT: u64 = 3;
    pub const UNLABELED: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const ACQUISITION: u64 = 6;
    pub const TRAINING: u64 = 7;
    pub const POSTERIOR: u64 = 8;
    pub const BENCH_AXES: u64 = 9;
}

/// RNG for one named stream of a seeded task.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for sub-task `tag` at position `index`, e.g. the noise seed of
/// the i-th objective evaluation. Collision-free in practice and stable across
/// platforms.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ tag) ^ index)
}

/// Uniform draw in `[lo, hi)`. Consumes the same number of stream words for
/// every scalar type, so f32 and f64 runs stay aligned.
pub fn uniform<T: Real, R: Rng>(rng: &mut R, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::of(u)
}

pub fn standard_normal<T: Real, R: Rng>(rng: &mut R) -> T {
    let v: f64 = rng.sample(rand_distr::StandardNormal);
    T::of(v)
}
