//! End-to-end runs on the synthetic task: train, pick thresholds on
//! validation, report on test. Also the z-shift robustness sweep and the
//! variant × connectivity × weight-function ablation grid.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::{Connectivity, GraphConfig, WeightFn};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, select_thresholds, MetricsReport, PredictionSet};
use crate::model::{model_forward, sigmoid, GraphOperators, ModelConfig, ModelParams, Variant};
use crate::synth::{apply_z_shift, apply_z_wrap, generate_task, Sample, SynthTaskConfig, TaskSplits};
use crate::train::{build_graphs, train, LossRecord, TrainConfig};

/// Sigmoid scores of `params` on every sample.
pub fn predict(params: &ModelParams, samples: &[Sample], graphs: &[Arc<GraphOperators>]) -> Result<PredictionSet> {
    if samples.len() != graphs.len() {
        return Err(CoreError::Shape("one graph per sample required".into()));
    }
    let rows = samples
        .par_iter()
        .zip(graphs)
        .map(|(s, g)| {
            Ok(model_forward(g, &s.features, params)?
                .into_iter()
                .map(sigmoid)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let labels: Vec<Vec<u8>> = samples.iter().map(|s| s.labels.clone()).collect();
    if rows.is_empty() {
        return PredictionSet::new(Matrix::zeros(0, params.n_labels()), Vec::new());
    }
    PredictionSet::from_rows(&rows, &labels)
}

/// Convenience wrapper building graphs on the fly.
pub fn predict_with(params: &ModelParams, samples: &[Sample], graph: &GraphConfig) -> Result<PredictionSet> {
    predict(params, samples, &build_graphs(samples, graph)?)
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: SynthTaskConfig,
    pub train: TrainConfig,
    pub graph: GraphConfig,
    pub variant: Variant,
    /// Hidden width of the head; `None` means `d / 2`.
    pub head_hidden: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: SynthTaskConfig::default(),
            train: TrainConfig::desk_scale(),
            graph: GraphConfig::default(),
            variant: Variant::Cheb,
            head_hidden: None,
        }
    }
}

impl RunConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            head_hidden: self.head_hidden,
            ..ModelConfig::new(self.variant, self.task.d, self.task.n_labels)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub params: ModelParams,
    pub curve: Vec<LossRecord>,
    pub checkpoints: Vec<(u64, ModelParams)>,
    pub thresholds: Vec<f64>,
    pub report: MetricsReport,
}

/// Train on `data.train`, choose thresholds on `data.val`, evaluate on `data.test`.
pub fn train_and_evaluate(cfg: &RunConfig, data: &TaskSplits) -> Result<RunResult> {
    let outcome = train(&data.train, &data.val, &cfg.model(), &cfg.graph, &cfg.train)?;
    let (thresholds, report) = evaluate_params(&outcome.params, &cfg.graph, &data.val, &data.test)?;
    Ok(RunResult {
        params: outcome.params,
        curve: outcome.curve,
        checkpoints: outcome.checkpoints,
        thresholds,
        report,
    })
}

/// Thresholds from `val`, metrics on `test`.
pub fn evaluate_params(
    params: &ModelParams,
    graph: &GraphConfig,
    val: &[Sample],
    test: &[Sample],
) -> Result<(Vec<f64>, MetricsReport)> {
    let thresholds = select_thresholds(&predict_with(params, val, graph)?);
    let report = evaluate(&predict_with(params, test, graph)?, &thresholds)?;
    Ok((thresholds, report))
}

/// What fills rows vacated by a shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    Pad(Vec<f64>),
    /// Rotate the sequence instead of padding.
    Wrap,
}

impl ShiftMode {
    pub fn apply(&self, s: &Sample, shift: i64) -> Result<Sample> {
        match self {
            ShiftMode::Pad(pad) => apply_z_shift(s, shift, pad),
            ShiftMode::Wrap => apply_z_wrap(s, shift),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShiftMode::Pad(_) => "pad",
            ShiftMode::Wrap => "wrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub shift: i64,
    pub macro_f1: f64,
    pub macro_auroc: Option<f64>,
}

/// Macro F1 on shifted copies of `samples`, thresholds fixed.
pub fn robustness_sweep(
    params: &ModelParams,
    graph: &GraphConfig,
    samples: &[Sample],
    thresholds: &[f64],
    shifts: &[i64],
    mode: &ShiftMode,
) -> Result<Vec<ShiftPoint>> {
    let graphs = build_graphs(samples, graph)?;
    shifts
        .iter()
        .map(|&shift| {
            let shifted = samples
                .iter()
                .map(|s| mode.apply(s, shift))
                .collect::<Result<Vec<_>>>()?;
            let report = evaluate(&predict(params, &shifted, &graphs)?, thresholds)?;
            Ok(ShiftPoint {
                shift,
                macro_f1: report.macro_avg.f1,
                macro_auroc: report.macro_avg.auroc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub variant: Variant,
    pub graph: GraphConfig,
    pub mode: String,
    /// Macro F1 of the plain, unshifted evaluation.
    pub baseline_macro_f1: f64,
    pub points: Vec<ShiftPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub shifts: Vec<i64>,
    pub curves: Vec<RobustnessCurve>,
}

/// Trains each variant on the configured graph and sweeps padded shifts, then
/// trains a Chebyshev control on a fully connected constant-weight graph and
/// sweeps cyclic shifts, which only permute its nodes.
pub fn run_robustness(cfg: &RunConfig, data: &TaskSplits, shifts: &[i64], pad: &[f64]) -> Result<RobustnessReport> {
    let control_graph = GraphConfig {
        connectivity: Connectivity::FullyConnected,
        weight_fn: WeightFn::Constant,
    };
    let mut jobs: Vec<(Variant, GraphConfig, ShiftMode)> = Variant::ALL
        .iter()
        .map(|&v| (v, cfg.graph, ShiftMode::Pad(pad.to_vec())))
        .collect();
    jobs.push((Variant::Cheb, control_graph, ShiftMode::Wrap));

    let curves = jobs
        .into_par_iter()
        .map(|(variant, graph, mode)| {
            let run_cfg = RunConfig {
                variant,
                graph,
                ..cfg.clone()
            };
            let run = train_and_evaluate(&run_cfg, data)?;
            let points = robustness_sweep(&run.params, &graph, &data.test, &run.thresholds, shifts, &mode)?;
            Ok(RobustnessCurve {
                variant,
                graph,
                mode: mode.name().to_string(),
                baseline_macro_f1: run.report.macro_avg.f1,
                points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessReport {
        shifts: shifts.to_vec(),
        curves,
    })
}

/// Cells to run: every combination of the listed variants, connectivities and
/// weight functions, each repeated with `seeds` training seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub variants: Vec<Variant>,
    pub connectivities: Vec<Connectivity>,
    pub weight_fns: Vec<WeightFn>,
    pub seeds: usize,
    pub base: RunConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            connectivities: vec![
                Connectivity::Neighbourhood(4),
                Connectivity::Neighbourhood(16),
                Connectivity::FullyConnected,
            ],
            weight_fns: WeightFn::ALL.to_vec(),
            seeds: 3,
            base: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub f1: MeanStd,
    pub recall: MeanStd,
    pub precision: MeanStd,
    pub accuracy: MeanStd,
    pub auroc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: Variant,
    pub connectivity: Connectivity,
    pub weight_fn: WeightFn,
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    /// `None` when no run of the cell succeeded.
    pub summary: Option<CellSummary>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub n_nodes: usize,
    pub cells: Vec<AblationCell>,
}

fn summarize(runs: &[MetricsReport]) -> Option<CellSummary> {
    if runs.is_empty() {
        return None;
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    Some(CellSummary {
        f1: col(|r| r.macro_avg.f1),
        recall: col(|r| r.macro_avg.recall),
        precision: col(|r| r.macro_avg.precision),
        accuracy: col(|r| r.macro_avg.accuracy),
        auroc: col(|r| r.macro_avg.auroc.unwrap_or(f64::NAN)),
    })
}

/// Runs every cell of the grid on one shared dataset. A failing run is
/// recorded in its cell and the grid carries on.
pub fn run_ablation(grid: &GridSpec) -> Result<AblationReport> {
    if grid.seeds == 0 {
        return Err(CoreError::InvalidConfig("ablation needs at least one seed".into()));
    }
    let data = generate_task(&grid.base.task)?;
    let mut cells = Vec::new();
    for &variant in &grid.variants {
        for &connectivity in &grid.connectivities {
            for &weight_fn in &grid.weight_fns {
                cells.push((variant, connectivity, weight_fn));
            }
        }
    }
    let seeds: Vec<u64> = (0..grid.seeds as u64).map(|r| grid.base.train.seed + r).collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();

    let results: Vec<Result<MetricsReport>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (variant, connectivity, weight_fn) = cells[c];
            let cfg = RunConfig {
                variant,
                graph: GraphConfig {
                    connectivity,
                    weight_fn,
                },
                train: TrainConfig {
                    seed,
                    ..grid.base.train.clone()
                },
                ..grid.base.clone()
            };
            train_and_evaluate(&cfg, &data).map(|r| r.report)
        })
        .collect();

    let mut results = results.into_iter();
    let cells = cells
        .into_iter()
        .map(|(variant, connectivity, weight_fn)| {
            let mut runs = Vec::new();
            let mut failures = Vec::new();
            for &seed in &seeds {
                match results.next().expect("one result per job") {
                    Ok(r) => runs.push(r),
                    Err(e) => failures.push(format!("seed {seed}: {e}")),
                }
            }
            AblationCell {
                variant,
                connectivity,
                weight_fn,
                seeds: seeds.clone(),
                summary: summarize(&runs),
                runs,
                failures,
            }
        })
        .collect();
    Ok(AblationReport {
        n_nodes: grid.base.task.n_nodes,
        cells,
    })
}

fn pct(m: &MeanStd) -> String {
    format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std)
}

fn render_rows(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let _ = writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect()));
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
    );
    for row in rows {
        let _ = writeln!(out, "{}", line(row.clone()));
    }
    out.push('\n');
}

impl AblationReport {
    fn find(&self, v: Variant, c: Connectivity, w: WeightFn) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|cell| cell.variant == v && cell.connectivity == c && cell.weight_fn == w)
    }

    fn connectivity_label(&self, c: Connectivity) -> String {
        match c {
            Connectivity::Neighbourhood(q) if q + 1 >= self.n_nodes => format!("{q} (fully connected)"),
            Connectivity::Neighbourhood(q) => q.to_string(),
            Connectivity::FullyConnected => format!("{} (fully connected)", self.n_nodes),
        }
    }

    /// Plain-text tables, metrics in percent as mean ± std over seeds:
    /// the full grid, module × connectivity, neighbourhood size, and weight function.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let cell_metrics = |cell: &AblationCell, cols: &[fn(&CellSummary) -> &MeanStd]| -> Vec<String> {
            match &cell.summary {
                Some(s) => cols.iter().map(|f| pct(f(s))).collect(),
                None => cols.iter().map(|_| "failed".to_string()).collect(),
            }
        };
        let all: [fn(&CellSummary) -> &MeanStd; 5] = [
            |s| &s.f1,
            |s| &s.recall,
            |s| &s.precision,
            |s| &s.auroc,
            |s| &s.accuracy,
        ];

        let _ = writeln!(out, "All cells");
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                let mut row = vec![
                    c.variant.to_string(),
                    self.connectivity_label(c.connectivity),
                    c.weight_fn.to_string(),
                    c.runs.len().to_string(),
                ];
                row.extend(cell_metrics(c, &all));
                row
            })
            .collect();
        render_rows(
            &mut out,
            &[
                "Module",
                "Connectivity",
                "Weight",
                "Runs",
                "F1",
                "Recall",
                "Precision",
                "AUROC",
                "Accuracy",
            ],
            &rows,
        );

        let primary_weight = if self.cells.iter().any(|c| c.weight_fn == WeightFn::InverseDm) {
            WeightFn::InverseDm
        } else {
            match self.cells.first() {
                Some(c) => c.weight_fn,
                None => return out,
            }
        };
        let mut variants: Vec<Variant> = Vec::new();
        let mut conns: Vec<Connectivity> = Vec::new();
        for c in &self.cells {
            if !variants.contains(&c.variant) {
                variants.push(c.variant);
            }
            if !conns.contains(&c.connectivity) {
                conns.push(c.connectivity);
            }
        }

        let _ = writeln!(out, "Connectivity x module (weight {primary_weight})");
        let trio: [fn(&CellSummary) -> &MeanStd; 3] = [|s| &s.f1, |s| &s.auroc, |s| &s.accuracy];
        let mut rows = Vec::new();
        for &c in &conns {
            for &v in &variants {
                if let Some(cell) = self.find(v, c, primary_weight) {
                    let mut row = vec![self.connectivity_label(c), v.to_string()];
                    row.extend(cell_metrics(cell, &trio));
                    rows.push(row);
                }
            }
        }
        render_rows(&mut out, &["Connectivity", "Module", "F1", "AUROC", "Accuracy"], &rows);

        let size_variant = if variants.contains(&Variant::GraphConv) {
            Variant::GraphConv
        } else {
            variants[0]
        };
        let _ = writeln!(out, "Neighbourhood size ({size_variant}, weight {primary_weight})");
        let rows: Vec<Vec<String>> = conns
            .iter()
            .filter_map(|&c| self.find(size_variant, c, primary_weight))
            .map(|cell| {
                let mut row = vec![self.connectivity_label(cell.connectivity)];
                row.extend(cell_metrics(cell, &all));
                row
            })
            .collect();
        render_rows(
            &mut out,
            &["Neighbourhood size", "F1", "Recall", "Precision", "AUROC", "Accuracy"],
            &rows,
        );

        let fc = conns
            .iter()
            .copied()
            .find(|c| matches!(c, Connectivity::FullyConnected))
            .unwrap_or(conns[0]);
        let _ = writeln!(out, "Edge weighting ({size_variant}, {})", self.connectivity_label(fc));
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .filter(|c| c.variant == size_variant && c.connectivity == fc)
            .map(|cell| {
                let mut row = vec![cell.weight_fn.to_string()];
                row.extend(cell_metrics(cell, &[|s| &s.f1]));
                row
            })
            .collect();
        render_rows(&mut out, &["Weight function", "F1"], &rows);
        out
    }
}
