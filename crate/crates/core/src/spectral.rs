//! Graph Laplacian, its rescaling onto `[-1, 1]`, and Chebyshev polynomial
//! filtering.
//!
//! [`cheb_apply`] evaluates `Σ_k T_k(L̂)·X·θ_k` with the three-term recurrence
//! and never forms an eigenbasis. [`spectral_filter_oracle`] computes the same
//! quantity by diagonalizing `L` and is only meant for checking.

use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{CoreError, Result};
use crate::graph::{degree_vector, AdjacencyMatrix};
use crate::matrix::Matrix;

/// Largest eigenvalues below this are treated as an edgeless graph.
pub const MIN_LAMBDA_MAX: f64 = 1e-12;

/// Largest graph the oracle is meant for.
pub const ORACLE_MAX_NODES: usize = 64;

/// Combinatorial Laplacian `L = D − A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(Matrix);

impl Laplacian {
    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.rows()
    }
}

/// `L̂ = (2 / λ_max)·L − I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLaplacian {
    values: Matrix,
    lambda_max_used: f64,
}

impl ScaledLaplacian {
    /// Wraps a symmetric operator directly, e.g. a permuted copy of another
    /// scaled Laplacian.
    pub fn from_parts(values: Matrix, lambda_max_used: f64) -> Result<Self> {
        if !values.is_symmetric() {
            return Err(CoreError::InvalidConfig("scaled Laplacian must be symmetric".into()));
        }
        Ok(Self {
            values,
            lambda_max_used,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn lambda_max_used(&self) -> f64 {
        self.lambda_max_used
    }

    pub fn n_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            values: self.values.permute_symmetric(perm),
            lambda_max_used: self.lambda_max_used,
        }
    }
}

/// Chebyshev filter coefficients `θ_0 … θ_{K−1}`, each `d_in × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebWeights {
    thetas: Vec<Matrix>,
}

impl ChebWeights {
    pub fn new(thetas: Vec<Matrix>) -> Result<Self> {
        let first = thetas
            .first()
            .ok_or_else(|| CoreError::InvalidConfig("Chebyshev order K must be >= 1".into()))?;
        let shape = first.shape();
        if thetas.iter().any(|t| t.shape() != shape) {
            return Err(CoreError::Shape("all θ_k must share dimensions".into()));
        }
        Ok(Self { thetas })
    }

    pub fn order(&self) -> usize {
        self.thetas.len()
    }

    pub fn d_in(&self) -> usize {
        self.thetas[0].rows()
    }

    pub fn d_out(&self) -> usize {
        self.thetas[0].cols()
    }

    pub fn thetas(&self) -> &[Matrix] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [Matrix] {
        &mut self.thetas
    }

    /// Each `θ_k` transposed; filtering with these is the adjoint of filtering
    /// with `self` (the polynomials of a symmetric `L̂` are symmetric).
    pub fn transposed(&self) -> Self {
        Self {
            thetas: self.thetas.iter().map(Matrix::transpose).collect(),
        }
    }
}

pub fn laplacian(a: &AdjacencyMatrix) -> Laplacian {
    let degrees = degree_vector(a).0;
    let mut l = a.values().scale(-1.0);
    for (i, d) in degrees.into_iter().enumerate() {
        l[(i, i)] = d;
    }
    Laplacian(l)
}

/// Largest eigenvalue of `L`, via the Jacobi solver.
pub fn lambda_max(l: &Laplacian) -> Result<f64> {
    let eig = symmetric_eigen(&l.0)?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    if top < MIN_LAMBDA_MAX {
        return Err(CoreError::DegenerateSpectrum(top));
    }
    Ok(top)
}

pub fn scale_laplacian(l: &Laplacian, lmax: f64) -> Result<ScaledLaplacian> {
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(CoreError::InvalidConfig(format!(
            "λ_max must be positive and finite, got {lmax}"
        )));
    }
    let mut values = l.0.scale(2.0 / lmax);
    for i in 0..values.rows() {
        values[(i, i)] -= 1.0;
    }
    Ok(ScaledLaplacian {
        values,
        lambda_max_used: lmax,
    })
}

/// Adjacency → Laplacian → exact `λ_max` → `L̂`.
pub fn scaled_laplacian_of(a: &AdjacencyMatrix) -> Result<ScaledLaplacian> {
    let l = laplacian(a);
    let lmax = lambda_max(&l)?;
    scale_laplacian(&l, lmax)
}

/// The terms `T_k(L̂)·X` for `k = 0..order`.
pub fn chebyshev_basis(lhat: &ScaledLaplacian, x: &Matrix, order: usize) -> Result<Vec<Matrix>> {
    if x.rows() != lhat.n_nodes() {
        return Err(CoreError::Shape(format!(
            "features have {} rows but the graph has {} nodes",
            x.rows(),
            lhat.n_nodes()
        )));
    }
    let mut basis: Vec<Matrix> = Vec::with_capacity(order);
    for k in 0..order {
        let term = match k {
            0 => x.clone(),
            1 => lhat.values.matmul(x)?,
            _ => {
                let mut t = lhat.values.matmul(&basis[k - 1])?.scale(2.0);
                t.axpy(-1.0, &basis[k - 2])?;
                t
            }
        };
        basis.push(term);
    }
    Ok(basis)
}

/// `Σ_{k<K} T_k(L̂)·X·θ_k`.
pub fn cheb_apply(lhat: &ScaledLaplacian, x: &Matrix, w: &ChebWeights) -> Result<Matrix> {
    if x.cols() != w.d_in() {
        return Err(CoreError::Shape(format!(
            "features have width {} but θ expects {}",
            x.cols(),
            w.d_in()
        )));
    }
    let basis = chebyshev_basis(lhat, x, w.order())?;
    combine_basis(&basis, w)
}

pub(crate) fn combine_basis(basis: &[Matrix], w: &ChebWeights) -> Result<Matrix> {
    let mut out = Matrix::zeros(basis[0].rows(), w.d_out());
    for (tx, theta) in basis.iter().zip(&w.thetas) {
        out.add_assign(&tx.matmul(theta)?)?;
    }
    Ok(out)
}

/// Scalar Chebyshev polynomial `T_k(x)`.
pub fn chebyshev_scalar(k: usize, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (k as f64 * x.acos()).cos()
    } else {
        let (mut prev, mut cur) = (1.0, x);
        if k == 0 {
            return prev;
        }
        for _ in 1..k {
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}

/// Reference filter through the eigenbasis: `Σ_k U·T_k(Λ̂)·Uᵀ·X·θ_k`.
pub fn spectral_filter_oracle(l: &Laplacian, x: &Matrix, w: &ChebWeights) -> Result<Matrix> {
    let n = l.n_nodes();
    if n > ORACLE_MAX_NODES {
        return Err(CoreError::InvalidConfig(format!(
            "oracle limited to {ORACLE_MAX_NODES} nodes, got {n}"
        )));
    }
    if x.rows() != n || x.cols() != w.d_in() {
        return Err(CoreError::Shape(format!(
            "features {}x{} incompatible with {n} nodes and θ width {}",
            x.rows(),
            x.cols(),
            w.d_in()
        )));
    }
    let eig = symmetric_eigen(&l.0)?;
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    if lmax < MIN_LAMBDA_MAX {
        return Err(CoreError::DegenerateSpectrum(lmax));
    }
    let u = &eig.vectors;
    let projected = u.t_matmul(x)?;
    let mut out = Matrix::zeros(n, w.d_out());
    for (k, theta) in w.thetas.iter().enumerate() {
        let mut filtered = projected.clone();
        for (i, &lambda) in eig.values.iter().enumerate() {
            let gain = chebyshev_scalar(k, 2.0 * lambda / lmax - 1.0);
            for v in filtered.row_mut(i) {
                *v *= gain;
            }
        }
        out.add_assign(&u.matmul(&filtered)?.matmul(theta)?)?;
    }
    Ok(out)
}
