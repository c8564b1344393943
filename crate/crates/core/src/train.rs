//! Mini-batch training with AdamW and the warmup + cosine schedule.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grad::{backward, loss, GradientSet};
use crate::graph::GraphConfig;
use crate::model::{GraphOperators, ModelConfig, ModelParams};
use crate::optim::{adamw_step, lr_at, AdamWConfig, OptimState, ADAM_EPSILON};
use crate::synth::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub seed: u64,
    /// Emit a loss record every this many steps.
    pub log_every: u64,
}

impl TrainConfig {
    /// Full-scale settings: batch 4, 200k steps with 20k warmup, peak lr 1e-4.
    pub fn full_scale() -> Self {
        Self {
            batch_size: 4,
            max_lr: 1e-4,
            warmup_steps: 20_000,
            total_steps: 200_000,
            weight_decay: 0.01,
            betas: (0.9, 0.99),
            seed: 0,
            log_every: 1000,
        }
    }

    /// Desk-scale settings: the same schedule shape compressed to 2000 steps.
    pub fn desk_scale() -> Self {
        Self {
            max_lr: 3e-3,
            warmup_steps: 200,
            total_steps: 2000,
            log_every: 50,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_steps == 0 || self.log_every == 0 {
            return Err(CoreError::InvalidConfig(
                "batch_size, total_steps and log_every must be positive".into(),
            ));
        }
        if self.warmup_steps > self.total_steps {
            return Err(CoreError::InvalidConfig(format!(
                "warmup_steps ({}) exceeds total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.max_lr.is_nan() || self.max_lr <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(CoreError::InvalidConfig(
                "max_lr must be > 0 and weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        lr_at(step, self.max_lr, self.warmup_steps, self.total_steps)
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            epsilon: ADAM_EPSILON,
            weight_decay: self.weight_decay,
        }
    }

    /// Steps at which checkpoints are taken: every quarter of the run.
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        let mut steps: Vec<u64> = (1..=4).map(|k| (self.total_steps * k).div_ceil(4)).collect();
        steps.dedup();
        steps
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean loss of the batch used at this step.
    pub loss: f64,
    /// Mean validation loss, recorded at checkpoint steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<LossRecord>,
    pub checkpoints: Vec<(u64, ModelParams)>,
}

/// Graph operators for every sample, shared between samples with equal spacing.
pub fn build_graphs(samples: &[Sample], graph: &GraphConfig) -> Result<Vec<Arc<GraphOperators>>> {
    let mut cache: HashMap<(usize, u64), Arc<GraphOperators>> = HashMap::new();
    samples
        .iter()
        .map(|s| {
            let key = (s.n_nodes(), s.spacing_z_mm.to_bits());
            if let Some(g) = cache.get(&key) {
                return Ok(Arc::clone(g));
            }
            let g = Arc::new(GraphOperators::build(&graph.spec(s.n_nodes(), s.spacing_z_mm)?)?);
            cache.insert(key, Arc::clone(&g));
            Ok(g)
        })
        .collect()
}

/// Mean loss over a set of samples.
pub fn mean_loss(samples: &[Sample], graphs: &[Arc<GraphOperators>], params: &ModelParams) -> Result<f64> {
    let losses = samples
        .par_iter()
        .zip(graphs)
        .map(|(s, g)| loss(g, &s.features, &s.labels, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Batch loss and gradient averaged over the batch, reduced in sample order.
fn batch_gradient(
    batch: &[usize],
    samples: &[Sample],
    graphs: &[Arc<GraphOperators>],
    params: &ModelParams,
) -> Result<(f64, GradientSet)> {
    let per_sample = batch
        .par_iter()
        .map(|&i| backward(&graphs[i], &samples[i].features, &samples[i].labels, params))
        .collect::<Result<Vec<_>>>()?;
    let mut total = GradientSet::zeros_like(params);
    let mut loss_sum = 0.0;
    for (l, g) in &per_sample {
        loss_sum += l;
        total.accumulate(g)?;
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss_sum * scale, total))
}

/// Trains from a seeded initialization. Deterministic given the configs and data.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    model: &ModelConfig,
    graph: &GraphConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CoreError::InvalidConfig(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let params = ModelParams::init(model, cfg.seed)?;
    train_from(params, train_set, val_set, graph, cfg)
}

/// Same as [`train`] starting from given parameters.
pub fn train_from(
    mut params: ModelParams,
    train_set: &[Sample],
    val_set: &[Sample],
    graph: &GraphConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_graphs = build_graphs(train_set, graph)?;
    let val_graphs = build_graphs(val_set, graph)?;
    let adamw = cfg.adamw();
    let mut state = OptimState::new(&params);
    // Independent stream from the one used for initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let checkpoint_steps = cfg.checkpoint_steps();
    let mut curve = Vec::new();
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;

    for step in 1..=cfg.total_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..train_set.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        let lr = cfg.lr_at(step);
        let (batch_loss, grads) = batch_gradient(&batch, train_set, &train_graphs, &params)?;
        if !batch_loss.is_finite() || !grads.all_finite() {
            return Err(CoreError::NonFinite {
                step: step as usize,
                lr,
                grad_norm: grads.global_norm(),
            });
        }
        adamw_step(&mut params, &grads, &mut state, lr, &adamw)?;

        let is_checkpoint = checkpoint_steps.contains(&step);
        if step % cfg.log_every == 0 || step == 1 || is_checkpoint {
            let val_loss = if is_checkpoint {
                Some(mean_loss(val_set, &val_graphs, &params)?)
            } else {
                None
            };
            curve.push(LossRecord {
                step,
                lr,
                loss: batch_loss,
                val_loss,
            });
        }
        if is_checkpoint {
            checkpoints.push((step, params.clone()));
        }
    }
    Ok(TrainOutcome {
        params,
        curve,
        checkpoints,
    })
}
