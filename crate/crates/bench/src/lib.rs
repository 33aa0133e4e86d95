//! Fixtures shared by the benchmarks.

use drf_core::data::{make_subsets, Dataset};
use drf_core::forest::{train_forest, Forest, ForestConfig};
use drf_core::seed;
use rand::Rng;

/// Smooth nonlinear target over `dim` uniform features.
pub fn synthetic(rows: usize, dim: usize, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value, &[]);
    let x: Vec<Vec<f64>> = (0..rows).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
    let y = x
        .iter()
        .map(|r| 2.0 * r[0] - r[1 % dim] + (6.0 * r[2 % dim]).sin() + 0.05 * rng.gen::<f64>())
        .collect();
    Dataset::new("synthetic", x, y).expect("finite synthetic data")
}

pub fn forest(data: &Dataset, trees: usize, depth: usize) -> Forest {
    let plan = make_subsets(data, trees, 1.0, data.len(), 1).expect("subsets");
    let cfg = ForestConfig {
        tree_count: trees,
        max_depth: depth,
        ..ForestConfig::default()
    };
    train_forest(data, &plan, &cfg).expect("forest")
}
