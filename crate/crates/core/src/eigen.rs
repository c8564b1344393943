//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// Sweeps stop once the off-diagonal Frobenius norm drops below this
/// fraction of the input's Frobenius norm.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with matching eigenvectors stored as the
/// columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    let n = m.rows();
    if n != m.cols() {
        return Err(CoreError::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric() {
        return Err(CoreError::InvalidConfig("matrix is not symmetric".into()));
    }

    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let target = OFF_DIAGONAL_TOLERANCE * m.frobenius_norm();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) > target {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Rotation zeroing a[p][q].
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}
