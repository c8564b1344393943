//! Multi-label classification of volumes modelled as graphs of axial
//! slice triplets.
//!
//! A volume's `N` slice-triplet embeddings become nodes of a banded graph
//! whose edges are weighted by z-axis distance. Three Chebyshev spectral
//! convolution layers (or a GraphConv baseline) mix node features, the nodes
//! are sum-pooled and an MLP head predicts one logit per label.
//!
//! Module map:
//! - [`graph`]: edge set, edge weights, adjacency and degrees
//! - [`spectral`]: Laplacian, `λ_max`, scaling, Chebyshev filtering and its eigenbasis oracle
//! - [`model`]: layers, pooling, head, BCE loss
//! - [`grad`]: reverse-mode gradients and the finite-difference oracle
//! - [`optim`] / [`train`]: AdamW, warmup+cosine schedule, training loop
//! - [`synth`]: synthetic planted-signal task and z-shift simulation
//! - [`io`]: binary feature files and checkpoints
//! - [`metrics`] / [`experiment`]: metrics, threshold selection, robustness and ablation runs

pub mod eigen;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{CoreError, FormatError, Result};
pub use graph::{AdjacencyMatrix, Connectivity, DegreeVector, EdgeSet, GraphConfig, GraphSpec, WeightFn};
pub use matrix::Matrix;
pub use metrics::{MetricsReport, PredictionSet};
pub use model::{GraphOperators, ModelConfig, ModelParams, Variant};
pub use spectral::{ChebWeights, Laplacian, ScaledLaplacian};
pub use synth::{Sample, SynthTaskConfig};
pub use train::TrainConfig;
