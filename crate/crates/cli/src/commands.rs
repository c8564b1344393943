use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use ctgraph::experiment::{self, GridSpec, RunConfig};
use ctgraph::grad::{backward, finite_diff_grad, max_relative_error};
use ctgraph::graph::{build_adjacency, build_edge_set, degree_vector, Connectivity};
use ctgraph::io::{read_checkpoint, read_features, write_checkpoint, write_features};
use ctgraph::spectral::{lambda_max, laplacian};
use ctgraph::synth::{background_feature, generate_sample, generate_task, Split, TaskSplits};
use ctgraph::{GraphOperators, GraphSpec, ModelConfig, ModelParams, Sample, SynthTaskConfig, Variant, WeightFn};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{parse_weight_fn, Common};

const FEATURE_EXT: &str = "ctgf";

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.task.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    if let Some(q) = common.q {
        cfg.graph.connectivity = q;
    }
    if let Some(w) = common.weight_fn {
        cfg.graph.weight_fn = w;
    }
    cfg.task.validate()?;
    cfg.train.validate()?;
    cfg.model().validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CliError::io(path, e))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
    emit(&(text + "\n"))
}

fn split_dir(root: &Path, split: &str) -> PathBuf {
    root.join(split)
}

fn read_split(dir: &Path) -> CliResult<Vec<Sample>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == FEATURE_EXT))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Io(format!("{}: no .{FEATURE_EXT} files", dir.display())));
    }
    paths
        .iter()
        .map(|p| read_features(p).map_err(|e| CliError::io(p, e)))
        .collect()
}

fn load_data(cfg: &RunConfig, data: Option<&Path>) -> CliResult<TaskSplits> {
    match data {
        Some(root) => Ok(TaskSplits {
            train: read_split(&split_dir(root, "train"))?,
            val: read_split(&split_dir(root, "val"))?,
            test: read_split(&split_dir(root, "test"))?,
        }),
        None => Ok(generate_task(&cfg.task)?),
    }
}

pub fn gen_data(common: &Common) -> CliResult<()> {
    let cfg = load_config(common)?;
    let task = generate_task(&cfg.task)?;
    for (name, samples) in [("train", &task.train), ("val", &task.val), ("test", &task.test)] {
        let dir = split_dir(&common.out, name);
        ensure_dir(&dir)?;
        for (i, s) in samples.iter().enumerate() {
            let path = dir.join(format!("{i:06}.{FEATURE_EXT}"));
            write_features(&path, s).map_err(|e| CliError::io(&path, e))?;
        }
    }
    write_json(&common.out.join("task.json"), &cfg.task)?;
    print_json(&serde_json::json!({
        "out": common.out,
        "train": task.train.len(),
        "val": task.val.len(),
        "test": task.test.len(),
    }))
}

pub fn train(common: &Common, data: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let splits = load_data(&cfg, data)?;
    let run = experiment::train_and_evaluate(&cfg, &splits)?;
    let out = &common.out;
    ensure_dir(out)?;
    write_json(&out.join("config.json"), &cfg)?;
    write_jsonl(&out.join("loss.jsonl"), &run.curve)?;
    for (step, params) in &run.checkpoints {
        let path = out.join(format!("checkpoint-step-{step:07}.ctgc"));
        write_checkpoint(&path, params).map_err(|e| CliError::io(&path, e))?;
    }
    let final_path = out.join("checkpoint.ctgc");
    write_checkpoint(&final_path, &run.params).map_err(|e| CliError::io(&final_path, e))?;
    write_json(&out.join("report.json"), &run.report)?;
    print_json(&serde_json::json!({
        "variant": cfg.variant,
        "steps": cfg.train.total_steps,
        "final_loss": run.curve.last().map(|r| r.loss),
        "macro": run.report.macro_avg,
        "checkpoint": final_path,
    }))
}

pub fn eval(common: &Common, checkpoint: &Path, data: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let params = read_checkpoint(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let splits = load_data(&cfg, data)?;
    let (_, report) = experiment::evaluate_params(&params, &cfg.graph, &splits.val, &splits.test)?;
    ensure_dir(&common.out)?;
    write_json(&common.out.join("report.json"), &report)?;
    print_json(&serde_json::json!({ "variant": params.variant(), "macro": report.macro_avg, "micro": report.micro }))
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = |s: &str| s.parse::<Variant>().map_err(|e| e.to_string()), default_value = "cheb")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub nodes: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub labels: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

#[derive(Serialize)]
struct GradcheckReport {
    variant: Variant,
    n_nodes: usize,
    d: usize,
    n_labels: usize,
    seed: u64,
    n_parameters: usize,
    max_relative_error: f64,
    tolerance: f64,
    pass: bool,
}

/// Exits with the numeric-failure code when the error exceeds the tolerance.
pub fn gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let task = SynthTaskConfig {
        n_nodes: args.nodes,
        d: args.d,
        n_labels: args.labels,
        local_labels: (0..args.labels).collect(),
        diffuse_labels: vec![],
        seed: args.seed,
        ..SynthTaskConfig::default()
    };
    task.validate()?;
    let sample = generate_sample(&task, Split::Train, 0);
    let graph = GraphOperators::build(&GraphSpec::from_mm(
        args.nodes,
        args.q,
        task.spacing_z_mm,
        WeightFn::InverseDm,
    )?)?;
    let cfg = ModelConfig::new(args.variant, args.d, args.labels);
    // Offset the init by a second draw so biases are nonzero and no
    // pre-activation sits exactly on a ReLU kink.
    let mut params = ModelParams::init(&cfg, args.seed)?;
    let offset = ModelParams::init(&cfg, args.seed.wrapping_add(1))?;
    for (p, o) in params.tensors_mut().into_iter().zip(offset.tensors()) {
        for (x, y) in p.as_mut_slice().iter_mut().zip(o.as_slice()) {
            *x += 0.1 * y + 0.01;
        }
    }
    let (_, analytic) = backward(&graph, &sample.features, &sample.labels, &params)?;
    let numeric = finite_diff_grad(&graph, &sample.features, &sample.labels, &params, args.epsilon)?;
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    let report = GradcheckReport {
        variant: args.variant,
        n_nodes: args.nodes,
        d: args.d,
        n_labels: args.labels,
        seed: args.seed,
        n_parameters: params.num_parameters(),
        max_relative_error: err,
        tolerance: args.tolerance,
        pass: err <= args.tolerance,
    };
    print_json(&report)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient relative error {err:e} exceeds {:e}",
            args.tolerance
        )))
    }
}

fn robustness_table(report: &experiment::RobustnessReport) -> String {
    let mut out = String::new();
    let headers: Vec<String> = report
        .curves
        .iter()
        .map(|c| format!("{} {} {}", c.variant, c.graph.connectivity.label(), c.mode))
        .collect();
    let width = headers.iter().map(String::len).max().unwrap_or(0).max(8);
    let _ = write!(out, "{:>6}", "shift");
    for h in &headers {
        let _ = write!(out, "  {h:>width$}");
    }
    out.push('\n');
    for (i, shift) in report.shifts.iter().enumerate() {
        let _ = write!(out, "{shift:>6}");
        for c in &report.curves {
            let _ = write!(out, "  {:>width$.4}", c.points[i].macro_f1);
        }
        out.push('\n');
    }
    out
}

pub fn robustness(common: &Common, shifts: &[i64], data: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let splits = load_data(&cfg, data)?;
    let report = experiment::run_robustness(&cfg, &splits, shifts, &background_feature(cfg.task.d))?;
    ensure_dir(&common.out)?;
    write_json(&common.out.join("robustness.json"), &report)?;
    let table = robustness_table(&report);
    write_text(&common.out.join("robustness.txt"), &table)?;
    emit(&table)
}

pub fn ablate(common: &Common, seeds: usize) -> CliResult<()> {
    let base = load_config(common)?;
    let mut grid = GridSpec {
        seeds,
        base,
        ..GridSpec::default()
    };
    if let Some(v) = common.variant {
        grid.variants = vec![v];
    }
    if let Some(q) = common.q {
        grid.connectivities = vec![q];
    }
    if let Some(w) = common.weight_fn {
        grid.weight_fns = vec![w];
    }
    let report = experiment::run_ablation(&grid)?;
    ensure_dir(&common.out)?;
    write_json(&common.out.join("ablation.json"), &report)?;
    let text = report.render_text();
    write_text(&common.out.join("ablation.txt"), &text)?;
    emit(&text)
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, default_value_t = 80)]
    pub nodes: usize,
    /// Neighbourhood size, or `fc`.
    #[arg(long, default_value = "16", value_parser = |s: &str| s.parse::<Connectivity>().map_err(|e| e.to_string()))]
    pub q: Connectivity,
    #[arg(long = "weight-fn", default_value = "inverse-dm", value_parser = parse_weight_fn)]
    pub weight_fn: WeightFn,
    /// Slice spacing along z in millimetres.
    #[arg(long, default_value_t = 1.5)]
    pub spacing_mm: f64,
}

#[derive(Serialize)]
struct GraphSummary {
    n_nodes: usize,
    q: usize,
    fully_connected: bool,
    weight_fn: WeightFn,
    spacing_z_mm: f64,
    n_edges: usize,
    /// Edge weight for node gaps 1..=q.
    weight_by_gap: Vec<f64>,
    degree_min: f64,
    degree_max: f64,
    lambda_max: f64,
}

pub fn inspect_graph(args: &InspectArgs) -> CliResult<()> {
    let q = args.q.q_for(args.nodes);
    let spec = GraphSpec::from_mm(args.nodes, q, args.spacing_mm, args.weight_fn)?;
    let a = build_adjacency(&spec);
    let degrees = degree_vector(&a).0;
    let summary = GraphSummary {
        n_nodes: args.nodes,
        q,
        fully_connected: spec.is_fully_connected(),
        weight_fn: args.weight_fn,
        spacing_z_mm: args.spacing_mm,
        n_edges: build_edge_set(&spec).len(),
        weight_by_gap: (1..=q.min(args.nodes - 1))
            .map(|g| args.weight_fn.eval(g, spec.spacing_z_dm()))
            .collect(),
        degree_min: degrees.iter().copied().fold(f64::INFINITY, f64::min),
        degree_max: degrees.iter().copied().fold(0.0, f64::max),
        lambda_max: lambda_max(&laplacian(&a))?,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    emit(&(text + "\n"))
}
