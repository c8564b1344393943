//! Slice-triplet graph over the axial axis.
//!
//! Node `i` is the `i`-th triplet of consecutive axial slices (0-based). Two
//! nodes are joined when their indices differ by at most `q`; the edge weight
//! is a decreasing function of the physical distance between the triplets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// Slices grouped into one node.
pub const SLICES_PER_NODE: f64 = 3.0;

/// Millimetres per decimetre.
pub const MM_PER_DM: f64 = 100.0;

/// Edge weight as a function of triplet gap and z-spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFn {
    /// `1 + 1 / (1 + 3·|i−j|·s_z)` with `s_z` in decimetres.
    InverseDm,
    /// `exp(−3·|i−j|·s_z)`.
    #[serde(rename = "exp")]
    ExpDecay,
    /// Unit weight on every edge.
    #[serde(rename = "const")]
    Constant,
}

impl WeightFn {
    pub const ALL: [WeightFn; 3] = [WeightFn::InverseDm, WeightFn::ExpDecay, WeightFn::Constant];

    /// Weight for a pair of distinct nodes `gap` triplets apart.
    pub fn eval(self, gap: usize, spacing_z_dm: f64) -> f64 {
        let dist = SLICES_PER_NODE * gap as f64 * spacing_z_dm;
        match self {
            WeightFn::InverseDm => 1.0 + 1.0 / (1.0 + dist),
            WeightFn::ExpDecay => (-dist).exp(),
            WeightFn::Constant => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightFn::InverseDm => "inverse-dm",
            WeightFn::ExpDecay => "exp",
            WeightFn::Constant => "const",
        }
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightFn {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-dm" | "inverse" => Ok(WeightFn::InverseDm),
            "exp" | "exp-decay" => Ok(WeightFn::ExpDecay),
            "const" | "constant" => Ok(WeightFn::Constant),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown weight function {other:?} (expected inverse-dm, exp or const)"
            ))),
        }
    }
}

/// Parameters of one slice-triplet graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    n_nodes: usize,
    q: usize,
    spacing_z_dm: f64,
    weight_fn: WeightFn,
}

impl GraphSpec {
    pub fn new(n_nodes: usize, q: usize, spacing_z_dm: f64, weight_fn: WeightFn) -> Result<Self> {
        if n_nodes < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "graph needs at least 2 nodes, got {n_nodes}"
            )));
        }
        if q < 1 {
            return Err(CoreError::InvalidConfig("neighbourhood size q must be >= 1".into()));
        }
        if !(spacing_z_dm > 0.0 && spacing_z_dm.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "z-spacing must be positive and finite, got {spacing_z_dm}"
            )));
        }
        Ok(Self {
            n_nodes,
            q,
            spacing_z_dm,
            weight_fn,
        })
    }

    /// Same as [`GraphSpec::new`] with the spacing given in millimetres.
    pub fn from_mm(n_nodes: usize, q: usize, spacing_z_mm: f64, weight_fn: WeightFn) -> Result<Self> {
        Self::new(n_nodes, q, spacing_z_mm / MM_PER_DM, weight_fn)
    }

    /// Every pair of nodes connected.
    pub fn fully_connected(n_nodes: usize, spacing_z_dm: f64, weight_fn: WeightFn) -> Result<Self> {
        Self::new(n_nodes, n_nodes.saturating_sub(1).max(1), spacing_z_dm, weight_fn)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn spacing_z_dm(&self) -> f64 {
        self.spacing_z_dm
    }

    pub fn weight_fn(&self) -> WeightFn {
        self.weight_fn
    }

    pub fn is_fully_connected(&self) -> bool {
        self.q >= self.n_nodes - 1
    }
}

/// How far edges reach along the node sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// Edges between nodes at most `q` apart.
    Neighbourhood(usize),
    FullyConnected,
}

impl Connectivity {
    pub fn q_for(self, n_nodes: usize) -> usize {
        match self {
            Connectivity::Neighbourhood(q) => q,
            Connectivity::FullyConnected => n_nodes.saturating_sub(1).max(1),
        }
    }

    pub fn label(self) -> String {
        match self {
            Connectivity::Neighbourhood(q) => format!("q={q}"),
            Connectivity::FullyConnected => "fully-connected".to_string(),
        }
    }
}

/// Accepts a positive integer `q`, or `fc` / `full` / `fully-connected`.
impl FromStr for Connectivity {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fc" | "full" | "fully-connected" => Ok(Connectivity::FullyConnected),
            other => match other.parse::<usize>() {
                Ok(q) if q >= 1 => Ok(Connectivity::Neighbourhood(q)),
                _ => Err(CoreError::InvalidConfig(format!(
                    "neighbourhood size must be a positive integer or 'fc', got '{other}'"
                ))),
            },
        }
    }
}

/// Graph settings shared by every sample; the z-spacing comes from the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub connectivity: Connectivity,
    pub weight_fn: WeightFn,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Neighbourhood(16),
            weight_fn: WeightFn::InverseDm,
        }
    }
}

impl GraphConfig {
    pub fn spec(&self, n_nodes: usize, spacing_z_mm: f64) -> Result<GraphSpec> {
        GraphSpec::from_mm(n_nodes, self.connectivity.q_for(n_nodes), spacing_z_mm, self.weight_fn)
    }
}

/// Unordered node pairs, stored as `(i, j)` with `i < j` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).is_ok()
    }
}

/// Symmetric weighted adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(Matrix);

impl AdjacencyMatrix {
    /// Wraps an arbitrary matrix after checking it is square, symmetric,
    /// nonnegative and has a zero diagonal.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(CoreError::Shape("adjacency must be square".into()));
        }
        if !values.is_symmetric() {
            return Err(CoreError::InvalidConfig("adjacency must be symmetric".into()));
        }
        let n = values.rows();
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(CoreError::SelfLoop(i));
            }
        }
        if values.as_slice().iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(CoreError::InvalidConfig(
                "adjacency weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.rows()
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(self.0.permute_symmetric(perm))
    }
}

/// Weighted degree of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

/// All pairs `(i, j)`, `i < j`, with `j − i ≤ q`.
pub fn build_edge_set(spec: &GraphSpec) -> EdgeSet {
    let n = spec.n_nodes;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n.min(i + spec.q + 1) {
            edges.push((i, j));
        }
    }
    EdgeSet { edges }
}

/// Weight of the edge between distinct nodes `i` and `j`.
pub fn edge_weight(i: usize, j: usize, spec: &GraphSpec) -> Result<f64> {
    if i == j {
        return Err(CoreError::SelfLoop(i));
    }
    Ok(spec.weight_fn.eval(i.abs_diff(j), spec.spacing_z_dm))
}

pub fn build_adjacency(spec: &GraphSpec) -> AdjacencyMatrix {
    let n = spec.n_nodes;
    let mut values = Matrix::zeros(n, n);
    for (i, j) in build_edge_set(spec).iter() {
        let w = spec.weight_fn.eval(j - i, spec.spacing_z_dm);
        values[(i, j)] = w;
        values[(j, i)] = w;
    }
    AdjacencyMatrix(values)
}

pub fn degree_vector(a: &AdjacencyMatrix) -> DegreeVector {
    DegreeVector(a.0.row_sums())
}
