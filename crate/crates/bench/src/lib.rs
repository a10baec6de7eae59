//! Seeded fixtures shared by the benchmarks.

use fairnorm::nalgebra::DMatrix;
use fairnorm::ProtectedAttr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

pub fn uniform_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `k` categories assigned round-robin.
pub fn round_robin_attr(n: usize, k: usize) -> ProtectedAttr {
    let categories = (0..k).map(|c| format!("c{c}")).collect();
    ProtectedAttr::new("attr", categories, (0..n).map(|i| i % k).collect()).expect("valid attribute")
}
