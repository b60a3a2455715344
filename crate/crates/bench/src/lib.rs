//! Synthetic inputs shared by the benchmarks.

use lexiscope::anchors::NounPool;
use lexiscope::embedding::StaticVectors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn word(i: usize) -> String {
    format!("w{i:06}")
}

/// `size` words with uniform random vectors of dimension `dim`.
pub fn random_vectors(size: usize, dim: usize, seed: u64) -> StaticVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(String, Vec<f64>)> = (0..size)
        .map(|i| (word(i), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    StaticVectors::from_pairs("synthetic", pairs).expect("synthetic vectors")
}

pub fn pool(size: usize) -> NounPool {
    NounPool {
        nouns: (0..size).map(word).collect(),
        source: "synthetic".into(),
        provider: "synthetic".into(),
        seed: 0,
    }
}

/// A response column plus `k` predictors, each with `n` observations.
pub fn regression(n: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let y = (0..n)
        .map(|i| x.iter().map(|c| c[i]).sum::<f64>() + rng.gen_range(-0.5..0.5))
        .collect();
    (y, x)
}
