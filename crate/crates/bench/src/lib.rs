//! Shared fixtures for the benchmark targets: representative inputs built
//! once so the measured loops exercise the library code, not setup.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uavsim_core::attention::{AttentionParams, FeatureMatrix};
use uavsim_core::channel::ChannelParams;
use uavsim_core::SimConfig;

/// Fixed-seed generator so every benchmark run measures the same inputs.
pub fn bench_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(1_000)
}

pub fn channel_params() -> ChannelParams {
    ChannelParams::default()
}

/// A feature matrix at the largest sensor count the scoring path is rated
/// for in the acceptance checks.
pub fn feature_matrix(n_sensors: usize) -> FeatureMatrix {
    let mut rng = bench_rng();
    let values = Array2::from_shape_fn((n_sensors, 3), |(_, col)| match col {
        0 => rng.gen_range(0.0..40.0),
        1 => rng.gen_range(0.0..50.0),
        _ => rng.gen_range(-140.0..-60.0),
    });
    FeatureMatrix::new(values).expect("finite 3-column features")
}

pub fn attention_params(d_prime: usize) -> AttentionParams {
    AttentionParams::init(3, d_prime, &mut bench_rng())
}

/// The reference world: 10 sensors, 3 UAVs, 30 steps.
pub fn episode_config() -> SimConfig {
    SimConfig::default()
}
