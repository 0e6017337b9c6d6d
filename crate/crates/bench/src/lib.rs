//! Shared fixture builders for the benchmark targets.

use avh_core::geometry::ClassifierWeights;
use avh_core::synthdata::{self, LabeledDataset, MixtureParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random embeddings plus a classifier of the same width.
pub fn embeddings_and_weights(
    n: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, ClassifierWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let embeddings = (0..n).map(|_| draw(dim)).collect();
    let rows = (0..classes).map(|_| draw(dim)).collect();
    (embeddings, ClassifierWeights::new(rows).expect("non-degenerate rows"))
}

/// Paired score vectors with heavy ties, the worst case for rank statistics.
pub fn tied_pairs(n: usize, levels: u32, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0..levels) as f64).collect()
    };
    (draw(), draw())
}

/// The desk-scale mixture the dynamics and self-training commands run on.
pub fn desk_mixture(n: usize, seed: u64) -> LabeledDataset {
    let params = MixtureParams {
        num_classes: 4,
        dim: 8,
        separation: 1.3,
        sigma: 0.55,
        n,
        seed,
    };
    synthdata::gen_mixture(&params).expect("valid mixture")
}

/// Row-stochastic score matrix for the pseudo-label solvers.
pub fn prob_rows(n: usize, classes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect()
}
