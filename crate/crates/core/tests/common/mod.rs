#![allow(dead_code)]

use ctgraph::{AdjacencyMatrix, Matrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Banded graph with `1 <= |i - j| <= q` and weights drawn from `[0.1, 2)`.
pub fn random_banded(rng: &mut impl Rng, n: usize, q: usize) -> AdjacencyMatrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n.min(i + q + 1) {
            let w = rng.gen_range(0.1..2.0);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    AdjacencyMatrix::from_matrix(a).unwrap()
}

pub fn random_perm(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}
