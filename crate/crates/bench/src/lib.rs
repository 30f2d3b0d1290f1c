//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use nocollapse_core::dataset::{build_adjacency, split_per_user};
use nocollapse_core::synthetic::{planted_blocks, BlockSpec};
use nocollapse_core::{NormalizedAdjacency, SplitDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Column-normalized positive `K × n` matrix divided by `n`, the shape of the
/// classifier posteriors fed to the transport solver.
pub fn posteriors(k: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut p = gaussian(k, n, seed).mapv(f64::exp);
    for mut col in p.columns_mut() {
        let s = col.sum();
        col /= s * n as f64;
    }
    p
}

/// Planted-block split of the given size and its training graph.
pub fn block_graph(users: usize, items: usize, seed: u64) -> (SplitDataset, NormalizedAdjacency) {
    let spec = BlockSpec {
        users,
        items,
        ..BlockSpec::default()
    };
    let split = split_per_user(&planted_blocks(&spec, seed), (0.8, 0.1, 0.1), seed).expect("split");
    let adj = build_adjacency(&split.train).expect("adjacency");
    (split, adj)
}
