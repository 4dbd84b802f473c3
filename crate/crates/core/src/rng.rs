//! Seeded randomness.
//!
//! Every random draw in the crate comes from `ChaCha8Rng` seeded with
//! `seed_from_u64`; its output stream is value-stable across platforms and
//! releases of `rand_chacha`. Independent consumers inside one run use separate
//! ChaCha streams of the same seed so that, for example, turning inexactness on
//! never changes the sampled component indices. Gaussian draws use
//! `rand_distr::StandardNormal` (ziggurat method).

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const STREAM_SAMPLER: u64 = 0;
pub(crate) const STREAM_GRADIENT_ERROR: u64 = 1;
pub(crate) const STREAM_PROX_ERROR: u64 = 2;

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| StandardNormal.sample(rng))
}

/// Uniform direction on the unit sphere of `ℝ^dim`.
pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v = standard_normal_vector(rng, dim);
        let n = v.dot(&v).sqrt();
        if n > 0.0 {
            return v / n;
        }
    }
}
