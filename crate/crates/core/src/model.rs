//! The slice-graph classifier: three graph layers, sum pooling over nodes and
//! a two-layer MLP head producing one logit per label.
//!
//! Two layer families are supported. `Cheb` layers apply a Chebyshev filter on
//! the scaled Laplacian followed by a linear+ReLU block; `GraphConv` layers
//! combine a self transform with a weighted neighbour sum.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::{build_adjacency, AdjacencyMatrix, GraphSpec};
use crate::matrix::Matrix;
use crate::spectral::{chebyshev_basis, combine_basis, scaled_laplacian_of, ChebWeights, ScaledLaplacian};

pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_CHEB_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cheb,
    GraphConv,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Cheb, Variant::GraphConv];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cheb => "cheb",
            Variant::GraphConv => "graphconv",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cheb" | "chebconv" => Ok(Variant::Cheb),
            "graphconv" | "graph-conv" => Ok(Variant::GraphConv),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown variant {other:?} (expected cheb or graphconv)"
            ))),
        }
    }
}

/// Operators a forward pass needs for one sample's graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub adjacency: AdjacencyMatrix,
    pub lhat: ScaledLaplacian,
}

impl GraphOperators {
    pub fn build(spec: &GraphSpec) -> Result<Self> {
        Self::from_adjacency(build_adjacency(spec))
    }

    pub fn from_adjacency(adjacency: AdjacencyMatrix) -> Result<Self> {
        let lhat = scaled_laplacian_of(&adjacency)?;
        Ok(Self { adjacency, lhat })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    /// Node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            adjacency: self.adjacency.permuted(perm),
            lhat: self.lhat.permuted(perm),
        }
    }
}

/// Shape of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d: usize,
    pub n_labels: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_order")]
    pub cheb_order: usize,
    /// Hidden width of the head; `None` means `d / 2` (at least 1).
    #[serde(default)]
    pub head_hidden: Option<usize>,
}

fn default_layers() -> usize {
    DEFAULT_LAYERS
}

fn default_order() -> usize {
    DEFAULT_CHEB_ORDER
}

impl ModelConfig {
    pub fn new(variant: Variant, d: usize, n_labels: usize) -> Self {
        Self {
            variant,
            d,
            n_labels,
            n_layers: DEFAULT_LAYERS,
            cheb_order: DEFAULT_CHEB_ORDER,
            head_hidden: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.head_hidden.unwrap_or(self.d / 2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_labels == 0 || self.n_layers == 0 || self.cheb_order == 0 {
            return Err(CoreError::InvalidConfig(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `f_n` then `g_n(y) = ReLU(y·W + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebLayerParams {
    pub cheb: ChebWeights,
    pub ff_weight: Matrix,
    /// `1 x d`.
    pub ff_bias: Matrix,
}

/// Row `i` of the output is `ReLU(z_i·W_self + (Σ_j A_ij·z_j)·W_neigh + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConvLayerParams {
    pub self_weight: Matrix,
    pub neighbor_weight: Matrix,
    /// `1 x d`.
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GnnLayers {
    Cheb(Vec<ChebLayerParams>),
    GraphConv(Vec<GraphConvLayerParams>),
}

/// `Ψ(z̄) = ReLU(z̄·W1 + b1)·W2 + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: GnnLayers,
    pub head: HeadParams,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let s = 1.0 / (rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..s))
}

impl ModelParams {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d;
        let layers = match cfg.variant {
            Variant::Cheb => GnnLayers::Cheb(
                (0..cfg.n_layers)
                    .map(|_| {
                        let thetas = (0..cfg.cheb_order).map(|_| uniform_matrix(&mut rng, d, d)).collect();
                        Ok(ChebLayerParams {
                            cheb: ChebWeights::new(thetas)?,
                            ff_weight: uniform_matrix(&mut rng, d, d),
                            ff_bias: Matrix::zeros(1, d),
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            Variant::GraphConv => GnnLayers::GraphConv(
                (0..cfg.n_layers)
                    .map(|_| GraphConvLayerParams {
                        self_weight: uniform_matrix(&mut rng, d, d),
                        neighbor_weight: uniform_matrix(&mut rng, d, d),
                        bias: Matrix::zeros(1, d),
                    })
                    .collect(),
            ),
        };
        let hidden = cfg.hidden();
        let head = HeadParams {
            w1: uniform_matrix(&mut rng, d, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: uniform_matrix(&mut rng, hidden, cfg.n_labels),
            b2: Matrix::zeros(1, cfg.n_labels),
        };
        Ok(Self { layers, head })
    }

    pub fn variant(&self) -> Variant {
        match self.layers {
            GnnLayers::Cheb(_) => Variant::Cheb,
            GnnLayers::GraphConv(_) => Variant::GraphConv,
        }
    }

    pub fn d(&self) -> usize {
        self.head.w1.rows()
    }

    pub fn n_labels(&self) -> usize {
        self.head.w2.cols()
    }

    pub fn n_layers(&self) -> usize {
        match &self.layers {
            GnnLayers::Cheb(l) => l.len(),
            GnnLayers::GraphConv(l) => l.len(),
        }
    }

    /// Chebyshev order `K`; 0 for GraphConv models.
    pub fn cheb_order(&self) -> usize {
        match &self.layers {
            GnnLayers::Cheb(l) => l.first().map_or(0, |p| p.cheb.order()),
            GnnLayers::GraphConv(_) => 0,
        }
    }

    /// Every parameter tensor in declaration order: layers first (θ_0..θ_{K−1},
    /// feedforward weight, bias; or self weight, neighbour weight, bias), then
    /// the head (W1, b1, W2, b2).
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        match &self.layers {
            GnnLayers::Cheb(layers) => {
                for l in layers {
                    out.extend(l.cheb.thetas());
                    out.push(&l.ff_weight);
                    out.push(&l.ff_bias);
                }
            }
            GnnLayers::GraphConv(layers) => {
                for l in layers {
                    out.extend([&l.self_weight, &l.neighbor_weight, &l.bias]);
                }
            }
        }
        out.extend([&self.head.w1, &self.head.b1, &self.head.w2, &self.head.b2]);
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        match &mut self.layers {
            GnnLayers::Cheb(layers) => {
                for l in layers {
                    out.extend(l.cheb.thetas_mut().iter_mut());
                    out.push(&mut l.ff_weight);
                    out.push(&mut l.ff_bias);
                }
            }
            GnnLayers::GraphConv(layers) => {
                for l in layers {
                    out.push(&mut l.self_weight);
                    out.push(&mut l.neighbor_weight);
                    out.push(&mut l.bias);
                }
            }
        }
        let h = &mut self.head;
        out.extend([&mut h.w1, &mut h.b1, &mut h.w2, &mut h.b2]);
        out
    }

    /// Whether each tensor from [`ModelParams::tensors`] is a bias vector.
    pub fn bias_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        match &self.layers {
            GnnLayers::Cheb(layers) => {
                for l in layers {
                    out.extend(std::iter::repeat_n(false, l.cheb.order() + 1));
                    out.push(true);
                }
            }
            GnnLayers::GraphConv(layers) => {
                for _ in layers {
                    out.extend([false, false, true]);
                }
            }
        }
        out.extend([false, true, false, true]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.rows() * t.cols()).sum()
    }

    /// Parameters of the graph layers only (head excluded).
    pub fn num_gnn_parameters(&self) -> usize {
        let head = &self.head;
        self.num_parameters()
            - [&head.w1, &head.b1, &head.w2, &head.b2]
                .iter()
                .map(|t| t.rows() * t.cols())
                .sum::<usize>()
    }

    /// All-zero tensors of identical shapes.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.as_mut_slice().fill(0.0);
        }
        z
    }
}

/// Propagates NaN, unlike `f64::max`.
fn relu(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

fn check_features(z: &Matrix, n_nodes: usize, d: usize) -> Result<()> {
    if z.rows() != n_nodes || z.cols() != d {
        return Err(CoreError::Shape(format!(
            "node features are {}x{}, expected {n_nodes}x{d}",
            z.rows(),
            z.cols()
        )));
    }
    Ok(())
}

/// Intermediate values of one Chebyshev layer.
#[derive(Debug, Clone)]
pub struct ChebLayerTrace {
    /// `T_k(L̂)·Z` for each k.
    pub basis: Vec<Matrix>,
    /// `f_n(Z)`.
    pub filtered: Matrix,
    /// Pre-activation of `g_n`.
    pub pre: Matrix,
    pub out: Matrix,
}

#[derive(Debug, Clone)]
pub struct GraphConvLayerTrace {
    pub input: Matrix,
    /// `A·Z`.
    pub neighbor_sum: Matrix,
    pub pre: Matrix,
    pub out: Matrix,
}

pub fn cheb_layer_trace(lhat: &ScaledLaplacian, z: &Matrix, p: &ChebLayerParams) -> Result<ChebLayerTrace> {
    if z.cols() != p.cheb.d_in() || p.ff_weight.rows() != p.cheb.d_out() {
        return Err(CoreError::Shape(format!(
            "layer expects width {} but features have width {}",
            p.cheb.d_in(),
            z.cols()
        )));
    }
    let basis = chebyshev_basis(lhat, z, p.cheb.order())?;
    let filtered = combine_basis(&basis, &p.cheb)?;
    let mut pre = filtered.matmul(&p.ff_weight)?;
    pre.add_row_broadcast(&p.ff_bias)?;
    let out = pre.map(relu);
    Ok(ChebLayerTrace {
        basis,
        filtered,
        pre,
        out,
    })
}

/// `g_n(f_n(z))`.
pub fn cheb_layer_forward(lhat: &ScaledLaplacian, z: &Matrix, p: &ChebLayerParams) -> Result<Matrix> {
    Ok(cheb_layer_trace(lhat, z, p)?.out)
}

pub fn graphconv_layer_trace(a: &AdjacencyMatrix, z: &Matrix, p: &GraphConvLayerParams) -> Result<GraphConvLayerTrace> {
    check_features(z, a.n_nodes(), p.self_weight.rows())?;
    let neighbor_sum = a.values().matmul(z)?;
    let mut pre = z.matmul(&p.self_weight)?;
    pre.add_assign(&neighbor_sum.matmul(&p.neighbor_weight)?)?;
    pre.add_row_broadcast(&p.bias)?;
    let out = pre.map(relu);
    Ok(GraphConvLayerTrace {
        input: z.clone(),
        neighbor_sum,
        pre,
        out,
    })
}

pub fn graphconv_layer_forward(a: &AdjacencyMatrix, z: &Matrix, p: &GraphConvLayerParams) -> Result<Matrix> {
    Ok(graphconv_layer_trace(a, z, p)?.out)
}

/// Column sums: one pooled `1 x d` vector.
pub fn aggregate_sum(z: &Matrix) -> Matrix {
    z.column_sums()
}

#[derive(Debug, Clone)]
pub enum LayerTraces {
    Cheb(Vec<ChebLayerTrace>),
    GraphConv(Vec<GraphConvLayerTrace>),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: LayerTraces,
    pub pooled: Matrix,
    pub head_pre: Matrix,
    pub head_hidden: Matrix,
    pub logits: Vec<f64>,
}

pub fn forward_trace(graph: &GraphOperators, h: &Matrix, params: &ModelParams) -> Result<ForwardTrace> {
    check_features(h, graph.n_nodes(), params.d())?;
    let (layers, last) = match &params.layers {
        GnnLayers::Cheb(ps) => {
            let mut traces: Vec<ChebLayerTrace> = Vec::with_capacity(ps.len());
            for p in ps {
                let input = traces.last().map_or(h, |t| &t.out);
                let t = cheb_layer_trace(&graph.lhat, input, p)?;
                traces.push(t);
            }
            let last = traces.last().map_or_else(|| h.clone(), |t| t.out.clone());
            (LayerTraces::Cheb(traces), last)
        }
        GnnLayers::GraphConv(ps) => {
            let mut traces: Vec<GraphConvLayerTrace> = Vec::with_capacity(ps.len());
            for p in ps {
                let input = traces.last().map_or(h, |t| &t.out);
                let t = graphconv_layer_trace(&graph.adjacency, input, p)?;
                traces.push(t);
            }
            let last = traces.last().map_or_else(|| h.clone(), |t| t.out.clone());
            (LayerTraces::GraphConv(traces), last)
        }
    };
    let pooled = aggregate_sum(&last);
    let head = &params.head;
    let mut head_pre = pooled.matmul(&head.w1)?;
    head_pre.add_row_broadcast(&head.b1)?;
    let head_hidden = head_pre.map(relu);
    let mut logits = head_hidden.matmul(&head.w2)?;
    logits.add_row_broadcast(&head.b2)?;
    Ok(ForwardTrace {
        layers,
        pooled,
        head_pre,
        head_hidden,
        logits: logits.into_vec(),
    })
}

/// Logits `Ψ(Σ_i Φ_GNN(H)_i)`, one per label.
pub fn model_forward(graph: &GraphOperators, h: &Matrix, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(forward_trace(graph, h, params)?.logits)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over labels, in the overflow-free form
/// `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_loss(logits: &[f64], labels: &[u8]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(CoreError::Shape(format!(
            "{} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| x.max(0.0) - x * f64::from(y) + (-x.abs()).exp().ln_1p())
        .sum();
    Ok(total / logits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightFn;

    fn two_node_lhat() -> ScaledLaplacian {
        ScaledLaplacian::from_parts(Matrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]), 2.0).unwrap()
    }

    fn scalar_cheb_layer(k: usize) -> ChebLayerParams {
        ChebLayerParams {
            cheb: ChebWeights::new(vec![Matrix::identity(1); k]).unwrap(),
            ff_weight: Matrix::identity(1),
            ff_bias: Matrix::zeros(1, 1),
        }
    }

    #[test]
    fn cheb_layer_examples() {
        let lhat = two_node_lhat();
        let zero = Matrix::zeros(2, 1);
        assert_eq!(cheb_layer_forward(&lhat, &zero, &scalar_cheb_layer(3)).unwrap(), zero);

        let z = Matrix::from_rows(&[vec![0.5], vec![2.0]]);
        assert_eq!(cheb_layer_forward(&lhat, &z, &scalar_cheb_layer(1)).unwrap(), z);

        let x = Matrix::from_rows(&[vec![1.0], vec![0.0]]);
        assert_eq!(
            cheb_layer_forward(&lhat, &x, &scalar_cheb_layer(2)).unwrap(),
            Matrix::from_rows(&[vec![1.0], vec![0.0]])
        );
    }

    #[test]
    fn graphconv_examples() {
        let a = build_adjacency(&GraphSpec::new(2, 1, 0.015, WeightFn::Constant).unwrap());
        let p = GraphConvLayerParams {
            self_weight: Matrix::zeros(2, 2),
            neighbor_weight: Matrix::identity(2),
            bias: Matrix::zeros(1, 2),
        };
        let z = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(
            graphconv_layer_forward(&a, &z, &p).unwrap(),
            Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 2.0]])
        );
        assert_eq!(
            graphconv_layer_forward(&a, &Matrix::zeros(2, 2), &p).unwrap(),
            Matrix::zeros(2, 2)
        );

        let isolated = AdjacencyMatrix::from_matrix(Matrix::zeros(2, 2)).unwrap();
        let p = GraphConvLayerParams {
            self_weight: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]),
            neighbor_weight: Matrix::identity(2),
            bias: Matrix::zeros(1, 2),
        };
        let z = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 2.0]]);
        let expected = z.matmul(&p.self_weight).unwrap().map(relu);
        assert_eq!(graphconv_layer_forward(&isolated, &z, &p).unwrap(), expected);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(
            aggregate_sum(&Matrix::identity(3)),
            Matrix::row_vector(&[1.0, 1.0, 1.0])
        );
        let z = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(aggregate_sum(&z), Matrix::row_vector(&[4.0, 6.0]));
        assert_eq!(aggregate_sum(&z.permute_rows(&[1, 0])), aggregate_sum(&z));
    }

    #[test]
    fn zero_input_gives_head_bias() {
        let graph = GraphOperators::build(&GraphSpec::new(5, 2, 0.015, WeightFn::InverseDm).unwrap()).unwrap();
        for variant in Variant::ALL {
            let params = ModelParams::init(&ModelConfig::new(variant, 4, 3), 7).unwrap();
            let logits = model_forward(&graph, &Matrix::zeros(5, 4), &params).unwrap();
            assert_eq!(logits, vec![0.0; 3]);
        }
    }

    #[test]
    fn full_scale_shapes() {
        let cfg = ModelConfig::new(Variant::Cheb, 512, 18);
        let params = ModelParams::init(&cfg, 0).unwrap();
        let d = 512;
        let k = 3;
        assert_eq!(params.n_layers(), 3);
        assert_eq!(params.cheb_order(), 3);
        assert_eq!(params.num_gnn_parameters(), 3 * (k * d * d + d * d + d));

        let graph = GraphOperators::build(&GraphSpec::from_mm(80, 16, 1.5, WeightFn::InverseDm).unwrap()).unwrap();
        let h = Matrix::from_fn(80, d, |i, j| ((i * 31 + j * 7) % 13) as f64 / 13.0);
        let logits = model_forward(&graph, &h, &params).unwrap();
        assert_eq!(logits.len(), 18);
        assert!(logits.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn forward_is_deterministic() {
        let graph = GraphOperators::build(&GraphSpec::new(6, 2, 0.015, WeightFn::InverseDm).unwrap()).unwrap();
        let h = Matrix::from_fn(6, 4, |i, j| (i as f64 - 2.5) * 0.3 + j as f64 * 0.1);
        for variant in Variant::ALL {
            let params = ModelParams::init(&ModelConfig::new(variant, 4, 2), 3).unwrap();
            let a = model_forward(&graph, &h, &params).unwrap();
            let b = model_forward(&graph, &h, &params).unwrap();
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn shape_errors_propagate() {
        let graph = GraphOperators::build(&GraphSpec::new(4, 1, 0.015, WeightFn::Constant).unwrap()).unwrap();
        let params = ModelParams::init(&ModelConfig::new(Variant::Cheb, 3, 2), 0).unwrap();
        assert!(model_forward(&graph, &Matrix::zeros(5, 3), &params).is_err());
        assert!(model_forward(&graph, &Matrix::zeros(4, 2), &params).is_err());
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.0, 0.0, 0.0], &[1, 0, 1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&[50.0], &[1]).unwrap() < 1e-20);
        assert!((bce_loss(&[1.0, -1.0], &[1, 0]).unwrap() - 0.313_261_687_518_222_86).abs() < 1e-15);
        assert!(bce_loss(&[1.0], &[1, 0]).is_err());
    }

    #[test]
    fn bce_matches_naive_formula() {
        // the naive form loses precision in 1 - p beyond |x| ~ 10
        for i in 0..=40 {
            let x = -10.0 + 0.5 * i as f64;
            for y in [0u8, 1] {
                let p = 1.0 / (1.0 + (-x).exp());
                let naive = -(f64::from(y) * p.ln() + (1.0 - f64::from(y)) * (1.0 - p).ln());
                let stable = bce_loss(&[x], &[y]).unwrap();
                assert!(stable >= 0.0);
                assert!((stable - naive).abs() <= 1e-9, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn relu_block_idempotent_on_nonnegative_input() {
        let lhat = two_node_lhat();
        let layer = scalar_cheb_layer(1);
        let z = Matrix::from_rows(&[vec![0.0], vec![3.5]]);
        let once = cheb_layer_forward(&lhat, &z, &layer).unwrap();
        let twice = cheb_layer_forward(&lhat, &once, &layer).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn bias_mask_lines_up_with_tensors() {
        for variant in Variant::ALL {
            let params = ModelParams::init(&ModelConfig::new(variant, 4, 3), 1).unwrap();
            let mask = params.bias_mask();
            let tensors = params.tensors();
            assert_eq!(mask.len(), tensors.len());
            for (is_bias, t) in mask.iter().zip(tensors) {
                assert_eq!(*is_bias, t.rows() == 1);
            }
        }
    }
}
