//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use pushsum_core::graph::{generate_sequence, GeneratorKind, GraphSequence};
use pushsum_core::weights::{build_weights, WeightMatrix, WeightRule};

pub const SEED: u64 = 2024;

pub fn random_walkable() -> GeneratorKind {
    GeneratorKind::RandomWalkable {
        arc_probability: 0.2,
        inject_every: 5,
    }
}

/// A seeded random-walkable sequence with uniform out-degree weights.
pub fn fixture(n: usize, horizon: usize) -> (GraphSequence, Vec<WeightMatrix>) {
    let seq = generate_sequence(&random_walkable(), n, horizon, SEED).expect("valid generator");
    let ws = seq
        .graphs()
        .iter()
        .map(|g| build_weights(g, &WeightRule::UniformOutDegree).expect("uniform weights"))
        .collect();
    (seq, ws)
}

/// `x_i(0) = i + 1` in every coordinate.
pub fn ramp(n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |i, _| (i + 1) as f64)
}
