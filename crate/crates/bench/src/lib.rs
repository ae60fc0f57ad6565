//! Shared fixtures for the criterion benchmarks in `benches/`.

use mrfa::benchfuncs::{eval_function, generate_design};
use mrfa::data::DataMatrix;

/// `n` uniform rows of the ten-input additive function, already in the unit box.
pub fn additive_data(n: usize, seed: u64) -> (DataMatrix, Vec<f64>) {
    let x = generate_design(n, &[(0.0, 1.0); 10], seed);
    let y = x
        .rows()
        .map(|r| eval_function("additive10", r).expect("ten inputs"))
        .collect();
    (x, y)
}
