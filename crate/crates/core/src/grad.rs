//! Exact gradients of the BCE objective by hand-written reverse-mode
//! differentiation, plus a central-difference oracle for checking them.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::model::{bce_loss, forward_trace, sigmoid, GnnLayers, GraphOperators, LayerTraces, ModelParams};
use crate::spectral::cheb_apply;

/// One tensor per parameter tensor of a [`ModelParams`], same shapes and order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(ModelParams);

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.0.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.0.tensors_mut()
    }

    /// Gradients laid out as model parameters.
    pub fn as_params(&self) -> &ModelParams {
        &self.0
    }

    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        for (a, b) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.0.tensors_mut() {
            for v in t.as_mut_slice() {
                *v *= alpha;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .map(|t| t.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.tensors().iter().all(|t| t.all_finite())
    }
}

fn relu_mask(grad: &Matrix, pre: &Matrix) -> Matrix {
    Matrix::from_fn(grad.rows(), grad.cols(), |i, j| {
        if pre[(i, j)] > 0.0 {
            grad[(i, j)]
        } else {
            0.0
        }
    })
}

/// Loss and exact gradient for one sample.
pub fn backward(graph: &GraphOperators, h: &Matrix, labels: &[u8], params: &ModelParams) -> Result<(f64, GradientSet)> {
    let trace = forward_trace(graph, h, params)?;
    let loss = bce_loss(&trace.logits, labels)?;
    let mut grads = GradientSet::zeros_like(params);
    let n_labels = labels.len() as f64;

    // d(mean BCE)/dx = (σ(x) − y) / L
    let d_logits = Matrix::row_vector(
        &trace
            .logits
            .iter()
            .zip(labels)
            .map(|(&x, &y)| (sigmoid(x) - f64::from(y)) / n_labels)
            .collect::<Vec<_>>(),
    );

    let head = &params.head;
    let g = &mut grads.0;
    g.head.b2 = d_logits.clone();
    g.head.w2 = trace.head_hidden.t_matmul(&d_logits)?;
    let d_hidden = d_logits.matmul_t(&head.w2)?;
    let d_head_pre = relu_mask(&d_hidden, &trace.head_pre);
    g.head.b1 = d_head_pre.clone();
    g.head.w1 = trace.pooled.t_matmul(&d_head_pre)?;
    let d_pooled = d_head_pre.matmul_t(&head.w1)?;

    // Sum pooling hands the same gradient to every node.
    let n = graph.n_nodes();
    let mut d_out = Matrix::from_fn(n, d_pooled.cols(), |_, j| d_pooled[(0, j)]);

    match (&params.layers, &trace.layers, &mut g.layers) {
        (GnnLayers::Cheb(ps), LayerTraces::Cheb(ts), GnnLayers::Cheb(gs)) => {
            for idx in (0..ps.len()).rev() {
                let (p, t) = (&ps[idx], &ts[idx]);
                let d_pre = relu_mask(&d_out, &t.pre);
                let gl = &mut gs[idx];
                gl.ff_bias = d_pre.column_sums();
                gl.ff_weight = t.filtered.t_matmul(&d_pre)?;
                let d_filtered = d_pre.matmul_t(&p.ff_weight)?;
                for (g_theta, basis) in gl.cheb.thetas_mut().iter_mut().zip(&t.basis) {
                    *g_theta = basis.t_matmul(&d_filtered)?;
                }
                if idx > 0 {
                    d_out = cheb_apply(&graph.lhat, &d_filtered, &p.cheb.transposed())?;
                }
            }
        }
        (GnnLayers::GraphConv(ps), LayerTraces::GraphConv(ts), GnnLayers::GraphConv(gs)) => {
            for idx in (0..ps.len()).rev() {
                let (p, t) = (&ps[idx], &ts[idx]);
                let d_pre = relu_mask(&d_out, &t.pre);
                let gl = &mut gs[idx];
                gl.bias = d_pre.column_sums();
                gl.self_weight = t.input.t_matmul(&d_pre)?;
                gl.neighbor_weight = t.neighbor_sum.t_matmul(&d_pre)?;
                if idx > 0 {
                    let mut d_in = d_pre.matmul_t(&p.self_weight)?;
                    // A is symmetric, so Aᵀ·(...) = A·(...).
                    d_in.add_assign(&graph.adjacency.values().matmul(&d_pre.matmul_t(&p.neighbor_weight)?)?)?;
                    d_out = d_in;
                }
            }
        }
        _ => unreachable!("trace and gradient layouts follow the params variant"),
    }
    Ok((loss, grads))
}

/// Forward-only loss.
pub fn loss(graph: &GraphOperators, h: &Matrix, labels: &[u8], params: &ModelParams) -> Result<f64> {
    bce_loss(&forward_trace(graph, h, params)?.logits, labels)
}

/// `(loss(p + ε) − loss(p − ε)) / 2ε` for every scalar parameter.
pub fn finite_diff_grad(
    graph: &GraphOperators,
    h: &Matrix,
    labels: &[u8],
    params: &ModelParams,
    epsilon: f64,
) -> Result<GradientSet> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut probe = params.clone();
    let mut grads = GradientSet::zeros_like(params);
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].as_slice().len();
        for i in 0..len {
            let original = params.tensors()[t].as_slice()[i];
            probe.tensors_mut()[t].as_mut_slice()[i] = original + epsilon;
            let plus = loss(graph, h, labels, &probe)?;
            probe.tensors_mut()[t].as_mut_slice()[i] = original - epsilon;
            let minus = loss(graph, h, labels, &probe)?;
            probe.tensors_mut()[t].as_mut_slice()[i] = original;
            grads.tensors_mut()[t].as_mut_slice()[i] = (plus - minus) / (2.0 * epsilon);
        }
    }
    Ok(grads)
}

/// Largest per-scalar relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &GradientSet, numeric: &GradientSet, floor: f64) -> f64 {
    analytic
        .tensors()
        .iter()
        .zip(numeric.tensors())
        .flat_map(|(a, b)| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(&x, &y)| (x, y))
                .collect::<Vec<_>>()
        })
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
