//! `shaplit`: Shapley values and SHAPLIT/CRT/HRT tests from the command line.
//!
//! Every command reads an optional JSON config (`--config`); flags override
//! its keys. The resolved configuration is recorded in the report.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::{GeneratorKind, ModelArch};
use settings::{usage, CliResult, Common};

#[derive(Debug, Parser)]
#[command(
    name = "shaplit",
    version,
    about = "Shapley values with local independence tests"
)]
struct Cli {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Record the wall-clock time in the report (breaks byte equality).
    #[arg(long, global = true)]
    timestamp: bool,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact Shapley values of the model game `v(C) = E f(X~_C)`.
    Shapley(ShapleyArgs),
    /// SHAPLIT tests of one player against one or all coalitions.
    Shaplit(ShaplitArgs),
    /// Conditional randomization tests on labeled data.
    Crt(CrtArgs),
    /// Holdout randomization tests of a fixed predictor.
    Hrt(HrtArgs),
    /// Global test recomputed from an `explain` report.
    Global(GlobalArgs),
    /// Every Shapley summand with its test, or a quadrant hierarchy (--image).
    Explain(ExplainArgs),
    /// Run a built-in experiment and write its files to --out-dir.
    Experiment(ExperimentArgs),
    /// Write a synthetic dataset CSV and its `.meta.json`.
    Generate(GenerateArgs),
    /// Train a CNN or FCN on patch images and save it as JSON.
    Train(TrainArgs),
}

/// Inputs shared by the commands that explain a single sample.
#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    /// Predictor spec: JSON text or @file.
    #[arg(long)]
    predictor: Option<String>,
    /// Conditional sampler spec: JSON text or @file.
    #[arg(long)]
    sampler: Option<String>,
    /// Feature groups as players, e.g. `[[0,1],[2]]` (JSON text or @file)
    /// [default: one player per feature].
    #[arg(long)]
    groups: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct PointArgs {
    /// Dataset CSV (`f0,...,label`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Row of --data to explain [default: 0].
    #[arg(long)]
    row: Option<usize>,
    /// The sample itself, comma separated; overrides --data/--row.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct ShapleyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    point: PointArgs,
    /// Player to explain [default: all, with an axiom check].
    #[arg(long)]
    feature: Option<usize>,
    /// Masked draws per game value [default: 1000].
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct ShaplitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    point: PointArgs,
    /// Player under test.
    #[arg(long)]
    feature: Option<usize>,
    /// Revealed players, comma separated [default: every coalition].
    #[arg(long, value_delimiter = ',')]
    coalition: Option<Vec<usize>>,
    /// Null batches K [default: 1000].
    #[arg(long)]
    k: Option<usize>,
    /// Draws per batch L [default: 1].
    #[arg(long)]
    l: Option<usize>,
    /// identity, mean, flip-identity or flip-mean [default: identity if L = 1, else mean].
    #[arg(long)]
    statistic: Option<String>,
    /// Also estimate gamma from this many paired draws [default: off].
    #[arg(long)]
    gamma_draws: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct CrtArgs {
    /// Conditional sampler spec: JSON text or @file.
    #[arg(long)]
    sampler: Option<String>,
    /// Labeled dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Feature under test [default: all].
    #[arg(long)]
    feature: Option<usize>,
    /// Null copies K [default: 1000].
    #[arg(long)]
    k: Option<usize>,
    /// Test statistic [default: abs-correlation].
    #[arg(long)]
    statistic: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct HrtArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Labeled holdout CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Player under test [default: all].
    #[arg(long)]
    feature: Option<usize>,
    /// Null copies K [default: 1].
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct GlobalArgs {
    /// Report written by `explain`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    point: PointArgs,
    /// Players to explain, comma separated [default: all].
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
    /// Null batches per test K [default: 1000].
    #[arg(long)]
    k: Option<usize>,
    /// Draws per batch L [default: 1].
    #[arg(long)]
    l: Option<usize>,
    /// Paired draws per gamma estimate M [default: 1000].
    #[arg(long)]
    m: Option<usize>,
    /// Level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// `HEIGHT,WIDTH`: explain image quadrants hierarchically [default: off].
    #[arg(long, value_delimiter = ',')]
    image: Option<Vec<usize>>,
    /// Quadrant levels [default: 1].
    #[arg(long)]
    depth: Option<usize>,
    /// Recursion rule, `{"rule":"percentile","q":70}` or `{"rule":"alpha"}`
    /// [default: percentile 70].
    #[arg(long)]
    rule: Option<String>,
    /// Smallest region side to split [default: 1].
    #[arg(long)]
    min_side: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentId {
    Boolean,
    ImagePower,
    Quadrant,
}

impl ExperimentId {
    fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Boolean => "boolean",
            ExperimentId::ImagePower => "image-power",
            ExperimentId::Quadrant => "quadrant",
        }
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    id: ExperimentId,
    /// Directory for report.json, the CSV and config.snapshot.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(value_enum)]
    generator: Option<GeneratorKind>,
    /// Samples to draw.
    #[arg(long)]
    count: Option<usize>,
    /// Output CSV.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Boolean blocks [default: 2].
    #[arg(long)]
    k: Option<usize>,
    /// Boolean block size [default: 5].
    #[arg(long)]
    n: Option<usize>,
    /// Patch side [default: 7].
    #[arg(long)]
    d: Option<usize>,
    /// Patch rows [default: 2].
    #[arg(long)]
    r: Option<usize>,
    /// Patch columns [default: 2].
    #[arg(long)]
    s: Option<usize>,
    /// Patch noise variance [default: 1/d^2].
    #[arg(long)]
    sigma2: Option<f64>,
    /// Patch activation probability [default: balanced classes].
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(value_enum)]
    model: Option<ModelArch>,
    /// Output model JSON.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Patch side [default: 7].
    #[arg(long)]
    d: Option<usize>,
    /// Patch rows [default: 2].
    #[arg(long)]
    r: Option<usize>,
    /// Patch columns [default: 2].
    #[arg(long)]
    s: Option<usize>,
    /// Noise variance [default: 1/d^2].
    #[arg(long)]
    sigma2: Option<f64>,
    /// Patch activation probability [default: balanced classes].
    #[arg(long)]
    eta: Option<f64>,
    /// Training images [default: 10000].
    #[arg(long)]
    samples: Option<usize>,
    /// Epochs [default: 1].
    #[arg(long)]
    epochs: Option<usize>,
    /// FCN hidden width [default: 32].
    #[arg(long)]
    hidden: Option<usize>,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let common = Common {
        seed: cli.seed,
        config: cli.config,
        timestamp: cli.timestamp,
        out: cli.out,
    };
    match &cli.command {
        Command::Shapley(a) => commands::run_shapley(&common, a),
        Command::Shaplit(a) => commands::run_shaplit(&common, a),
        Command::Crt(a) => commands::run_crt(&common, a),
        Command::Hrt(a) => commands::run_hrt(&common, a),
        Command::Global(a) => commands::run_global(&common, a),
        Command::Explain(a) => commands::run_explain(&common, a),
        Command::Experiment(a) => commands::run_experiment(&common, a.id.as_str(), &a.out_dir),
        Command::Generate(a) => commands::run_generate(&common, a),
        Command::Train(a) => commands::run_train(&common, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
