//! Command-line surface for training, evaluating and benchmarking KBNN
//! models. Every command is also callable as a function so it can be driven
//! from tests.

pub mod commands;
pub mod report;
pub mod seeds;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "kbnn", version, about = "Kalman Bayesian neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a CSV file or synthetic data and write a model and report.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Predictive means and variances for the rows of a feature CSV.
    Predict(PredictArgs),
    /// Evaluate a 2-D model on a regular grid.
    Grid(GridArgs),
    /// Repeated training over a sweep of epochs, layers or neurons.
    Bench(BenchArgs),
    /// Write a synthetic dataset to CSV.
    Synth(SynthArgs),
    /// Train on moons, then adapt to a stream of rotated batches.
    RotatingMoons(RotatingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Cubic,
    Moons,
    Circles,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Synthetic dataset instead of a CSV file.
    #[arg(long, value_enum, conflicts_with = "csv")]
    pub synth: Option<SynthKind>,
    /// Number of synthetic instances (cubic 800, moons and circles 1500).
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation of the synthetic data (cubic 3, others 0.1).
    #[arg(long)]
    pub data_noise: Option<f64>,
    /// Inner radius of the circles dataset.
    #[arg(long, default_value_t = 0.8)]
    pub radius_factor: f64,
    /// Numeric CSV with a header row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Target column of the CSV, by name or zero-based index.
    #[arg(long)]
    pub target: Option<String>,
    /// Treat CSV targets as binary labels.
    #[arg(long)]
    pub classification: bool,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    /// Keep features and targets on the raw scale.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Layer sizes "d,h1,...,e"; defaults to one hidden layer of 50 units.
    #[arg(long)]
    pub arch: Option<String>,
    /// Activations per layer, e.g. "relu,linear" or "pwl:0.1:1,sigmoid".
    #[arg(long)]
    pub act: Option<String>,
    /// Prior weight variance.
    #[arg(long, default_value_t = 1.0)]
    pub prior_var: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Process the training rows in their stored order every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Observation noise variance on the standardized target scale.
    #[arg(long, default_value_t = 0.0)]
    pub obs_noise: f64,
    /// Evaluate on the test rows every this many instances.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Additional evaluation points, e.g. "5,50,500".
    #[arg(long)]
    pub checkpoints: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Write zero for every wall-clock field so reports are reproducible.
    #[arg(long)]
    pub no_timing: bool,
    /// Stream line-delimited JSON progress records to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Model of the first repeat.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose columns are exactly the model inputs.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub xmin: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub xmax: f64,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    pub ymin: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub ymax: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// "epochs=1,5,10", "layers=1,2,3,4" or "neurons=10,50,100,200".
    #[arg(long)]
    pub sweep: String,
    /// Hidden width used by the layers sweep.
    #[arg(long, default_value_t = 10)]
    pub neurons: usize,
    /// Hidden activation for the layers and neurons sweeps.
    #[arg(long, default_value = "relu")]
    pub hidden_act: String,
    /// Output activation for the layers and neurons sweeps.
    #[arg(long)]
    pub output_act: Option<String>,
    /// Results table as CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub data_noise: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub radius_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RotatingArgs {
    #[arg(long, default_value = "2,10,10,1")]
    pub arch: String,
    #[arg(long, default_value = "relu,relu,sigmoid")]
    pub act: String,
    #[arg(long, default_value_t = 1.0)]
    pub prior_var: f64,
    #[arg(long, default_value_t = 1500)]
    pub initial: usize,
    #[arg(long, default_value_t = 100)]
    pub per_step: usize,
    #[arg(long, default_value_t = 18)]
    pub steps: usize,
    #[arg(long, default_value_t = 20.0)]
    pub step_degrees: f64,
    #[arg(long, default_value_t = 0.1)]
    pub data_noise: f64,
    /// Grid points per axis for the per-step prediction grids.
    #[arg(long, default_value_t = 50)]
    pub grid_resolution: usize,
    /// Grids cover [-extent, extent] on both axes.
    #[arg(long, default_value_t = 3.0)]
    pub grid_extent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => commands::cmd_train(&a),
        Command::Eval(a) => commands::cmd_eval(&a),
        Command::Predict(a) => commands::cmd_predict(&a),
        Command::Grid(a) => commands::cmd_grid(&a),
        Command::Bench(a) => commands::cmd_bench(&a),
        Command::Synth(a) => commands::cmd_synth(&a),
        Command::RotatingMoons(a) => commands::cmd_rotating_moons(&a).map(|_| ()),
    }
}
