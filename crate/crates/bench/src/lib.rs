//! Deterministic inputs for the benchmarks.

use ctgraph::{GraphOperators, GraphSpec, Matrix, WeightFn};

/// Banded inverse-distance graph at 1.5 mm spacing.
pub fn graph(n_nodes: usize, q: usize) -> GraphOperators {
    GraphOperators::build(&GraphSpec::from_mm(n_nodes, q, 1.5, WeightFn::InverseDm).expect("valid spec"))
        .expect("graph with edges")
}

/// Smooth, non-trivial values in [-1, 1].
pub fn features(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin())
}
