mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctgraph::graph::Connectivity;
use ctgraph::{Variant, WeightFn};

#[derive(Parser)]
#[command(
    name = "ctgraph",
    version,
    about = "Slice-triplet graph models on synthetic volume features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment subcommands. Flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration (task, train, graph, variant).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for both data generation and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "ctgraph-out")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Neighbourhood size, or `fc` for a fully connected graph.
    #[arg(long, value_parser = parse_connectivity)]
    pub q: Option<Connectivity>,
    #[arg(long = "weight-fn", value_parser = parse_weight_fn)]
    pub weight_fn: Option<WeightFn>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic task and write one feature file per sample.
    GenData(#[command(flatten)] Common),
    /// Train a model, pick thresholds on validation and report test metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Read samples written by `gen-data` instead of generating them.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: thresholds from validation, metrics on test.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare backward-pass gradients with central finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Macro F1 under z-axis shifts for both variants plus a wrap-around control.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0,2,4,8,16"
        )]
        shifts: Vec<i64>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Variant x connectivity x weight-function grid, mean ± std over seeds.
    /// `--variant`, `--q` and `--weight-fn` restrict the grid to one value.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Print edge statistics and the spectrum bound of one graph.
    InspectGraph(commands::InspectArgs),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: ctgraph::CoreError| e.to_string())
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse().map_err(|e: ctgraph::CoreError| e.to_string())
}

pub(crate) fn parse_weight_fn(s: &str) -> Result<WeightFn, String> {
    s.parse().map_err(|e: ctgraph::CoreError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(common) => commands::gen_data(&common),
        Command::Train { common, data } => commands::train(&common, data.as_deref()),
        Command::Eval {
            common,
            checkpoint,
            data,
        } => commands::eval(&common, &checkpoint, data.as_deref()),
        Command::Gradcheck(args) => commands::gradcheck(&args),
        Command::Robustness { common, shifts, data } => commands::robustness(&common, &shifts, data.as_deref()),
        Command::Ablate { common, seeds } => commands::ablate(&common, seeds),
        Command::InspectGraph(args) => commands::inspect_graph(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ctgraph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
