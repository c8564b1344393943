//! Synthetic node-feature task with planted anomaly signatures, and z-axis
//! translation of feature sequences.
//!
//! Each label owns a contiguous block of `d / n_labels` feature channels.
//! When a label is positive its pattern is added to those channels:
//! - *local* labels: `signal_scale` on a random contiguous run of about `N/8` nodes
//! - *diffuse* labels: `signal_scale / 4` on about `N/2` scattered nodes
//!
//! Background nodes are zero before noise, so the all-zero vector is the
//! natural padding for shifted sequences. Features are rounded to `f32` at
//! generation time so they survive the on-disk format unchanged.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `N x d` node features.
    pub features: Matrix,
    /// One 0/1 entry per label.
    pub labels: Vec<u8>,
    pub spacing_z_mm: f64,
}

impl Sample {
    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthTaskConfig {
    pub n_nodes: usize,
    pub d: usize,
    pub n_labels: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub diffuse_labels: Vec<usize>,
    pub local_labels: Vec<usize>,
    pub noise_std: f64,
    pub signal_scale: f64,
    /// Probability that a label is positive.
    pub positive_rate: f64,
    pub spacing_z_mm: f64,
    /// Per-sample spacing is drawn uniformly from `spacing_z_mm ± jitter`.
    pub spacing_jitter_mm: f64,
    pub seed: u64,
}

impl Default for SynthTaskConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            d: 16,
            n_labels: 4,
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            diffuse_labels: vec![2, 3],
            local_labels: vec![0, 1],
            noise_std: 0.5,
            signal_scale: 2.0,
            positive_rate: 0.3,
            spacing_z_mm: 1.5,
            spacing_jitter_mm: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Local,
    Diffuse,
}

impl SynthTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be >= 2, got {}", self.n_nodes));
        }
        if self.n_labels == 0 || self.d < self.n_labels {
            return bad(format!(
                "need 1 <= n_labels <= d, got n_labels={} d={}",
                self.n_labels, self.d
            ));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return bad("train/val/test sizes must be positive".into());
        }
        let mut seen = vec![0u8; self.n_labels];
        for &l in self.diffuse_labels.iter().chain(&self.local_labels) {
            if l >= self.n_labels {
                return bad(format!("label index {l} out of range"));
            }
            seen[l] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return bad("diffuse and local label sets must be disjoint and cover every label".into());
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 || self.signal_scale.is_nan() || self.signal_scale <= 0.0 {
            return bad("noise_std must be >= 0 and signal_scale > 0".into());
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return bad("positive_rate must lie in [0, 1]".into());
        }
        let min_spacing = self.spacing_z_mm - self.spacing_jitter_mm;
        if min_spacing.is_nan() || min_spacing <= 0.0 || self.spacing_jitter_mm < 0.0 {
            return bad("spacing must stay positive under jitter".into());
        }
        Ok(())
    }

    /// Channels `[start, end)` owned by `label`.
    pub fn label_channels(&self, label: usize) -> std::ops::Range<usize> {
        let width = self.d / self.n_labels;
        label * width..(label + 1) * width
    }

    /// Length of a local pattern's node run.
    pub fn local_span(&self) -> usize {
        ((self.n_nodes as f64 / 8.0).round() as usize).clamp(1, self.n_nodes)
    }

    /// Number of nodes touched by a diffuse pattern.
    pub fn diffuse_count(&self) -> usize {
        (self.n_nodes / 2).max(1)
    }

    fn pattern(&self, label: usize) -> Pattern {
        if self.local_labels.contains(&label) {
            Pattern::Local
        } else {
            Pattern::Diffuse
        }
    }
}

/// Noise-free embedding of a node with no anomaly.
pub fn background_feature(d: usize) -> Vec<f64> {
    vec![0.0; d]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// The `index`-th sample of `split`; a pure function of `(cfg, split, index)`.
pub fn generate_sample(cfg: &SynthTaskConfig, split: Split, index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((split.stream_tag() << 40) | index as u64);

    let (n, d) = (cfg.n_nodes, cfg.d);
    let labels: Vec<u8> = (0..cfg.n_labels)
        .map(|_| u8::from(rng.gen_bool(cfg.positive_rate)))
        .collect();
    let spacing_z_mm = if cfg.spacing_jitter_mm > 0.0 {
        rng.gen_range(cfg.spacing_z_mm - cfg.spacing_jitter_mm..=cfg.spacing_z_mm + cfg.spacing_jitter_mm)
    } else {
        cfg.spacing_z_mm
    };

    let mut features = Matrix::zeros(n, d);
    for (label, _) in labels.iter().enumerate().filter(|(_, &y)| y == 1) {
        let channels = cfg.label_channels(label);
        let (nodes, amplitude): (Vec<usize>, f64) = match cfg.pattern(label) {
            Pattern::Local => {
                let span = cfg.local_span();
                let start = rng.gen_range(0..=n - span);
                ((start..start + span).collect(), cfg.signal_scale)
            }
            Pattern::Diffuse => (
                sample_indices(&mut rng, n, cfg.diffuse_count()).into_vec(),
                cfg.signal_scale / 4.0,
            ),
        };
        for node in nodes {
            for c in channels.clone() {
                features[(node, c)] += amplitude;
            }
        }
    }
    if cfg.noise_std > 0.0 {
        for v in features.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise_std * z;
        }
    }
    for v in features.as_mut_slice() {
        *v = f64::from(*v as f32);
    }
    Sample {
        features,
        labels,
        spacing_z_mm,
    }
}

fn generate_split(cfg: &SynthTaskConfig, split: Split, count: usize) -> Vec<Sample> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_sample(cfg, split, i))
        .collect()
}

pub fn generate_task(cfg: &SynthTaskConfig) -> Result<TaskSplits> {
    cfg.validate()?;
    Ok(TaskSplits {
        train: generate_split(cfg, Split::Train, cfg.n_train),
        val: generate_split(cfg, Split::Val, cfg.n_val),
        test: generate_split(cfg, Split::Test, cfg.n_test),
    })
}

fn check_shift(shift: i64, n_nodes: usize) -> Result<()> {
    if shift.unsigned_abs() as usize >= n_nodes {
        return Err(CoreError::ShiftOutOfRange { shift, n_nodes });
    }
    Ok(())
}

/// Translates the node sequence by `shift` positions (row `i` moves to
/// `i + shift`); vacated rows become `pad_feature`. Labels are unchanged.
pub fn apply_z_shift(s: &Sample, shift: i64, pad_feature: &[f64]) -> Result<Sample> {
    let n = s.n_nodes();
    check_shift(shift, n)?;
    if pad_feature.len() != s.d() {
        return Err(CoreError::Shape(format!(
            "pad feature has length {}, features have width {}",
            pad_feature.len(),
            s.d()
        )));
    }
    let mut features = Matrix::zeros(n, s.d());
    for i in 0..n {
        let src = i as i64 - shift;
        let row = if (0..n as i64).contains(&src) {
            s.features.row(src as usize)
        } else {
            pad_feature
        };
        features.row_mut(i).copy_from_slice(row);
    }
    Ok(Sample {
        features,
        labels: s.labels.clone(),
        spacing_z_mm: s.spacing_z_mm,
    })
}

/// Cyclic variant of [`apply_z_shift`]: rows leaving one end re-enter at the other.
pub fn apply_z_wrap(s: &Sample, shift: i64) -> Result<Sample> {
    let n = s.n_nodes();
    check_shift(shift, n)?;
    let perm: Vec<usize> = (0..n)
        .map(|i| (i as i64 - shift).rem_euclid(n as i64) as usize)
        .collect();
    Ok(Sample {
        features: s.features.permute_rows(&perm),
        labels: s.labels.clone(),
        spacing_z_mm: s.spacing_z_mm,
    })
}
