//! Seeded substreams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by the run
//! seed plus a key path such as `(tag, cell, replicate)`. Streams never
//! depend on evaluation order, so results are identical whatever the thread
//! count or the set of cells being run.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `seed` at `key`. Distinct keys give distinct stream ids.
pub fn substream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let stream = key
        .iter()
        .fold(0x5155_545F_5354_524D_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A derived `u64` seed, for APIs that take a plain seed.
pub fn substream_seed(seed: u64, key: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, key).next_u64()
}

pub fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.sample(StandardNormal))
}

pub fn normal_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, p), || rng.sample(StandardNormal))
}

/// Seed-deterministic permutation of `0..n`.
pub fn permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Stream-separating tags.
pub mod tag {
    pub const NULL_DRAW: u64 = 1;
    pub const DESIGN: u64 = 2;
    pub const SIGNAL: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const RCV: u64 = 7;
    pub const QUT: u64 = 8;
}
