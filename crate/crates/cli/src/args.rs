use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "a3d", version, about = "Adaptive 3D video networks: cost, training, calibration and budget-driven inference")]
pub struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Run data-parallel loops in order on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic GFLOPs and parameter counts for one configuration or a grid.
    Cost(CostArgs),
    /// Train a model and write a resumable checkpoint.
    Train(TrainArgs),
    /// Recompute normalization statistics per configuration.
    Calibrate(CalibrateArgs),
    /// Evaluate a calibrated grid and build the budget table.
    Table(TableArgs),
    /// Validation accuracy at one configuration.
    Eval(EvalArgs),
    /// Pick the best configuration under a budget and classify one clip.
    Infer(InferArgs),
    /// Class activation maps of one clip.
    Cam(CamArgs),
    /// Accuracy-versus-GFLOPs curves as SVG.
    Plot(PlotArgs),
    /// Write the synthetic dataset as archives or frame folders.
    Synth(SynthArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Architecture preset or JSON file.
    #[arg(long, default_value = "toy_slow")]
    pub arch: String,
    /// Compute range preset for --grid: 0.016, 0.06 or full.
    #[arg(long, default_value = "0.016")]
    pub range: String,
    /// Emit every configuration of the range.
    #[arg(long, conflicts_with = "config")]
    pub grid: bool,
    /// One configuration `γw,γs,γt`.
    #[arg(long, default_value = "1,1,1")]
    pub config: String,
    /// Side length at γs = 1; defaults to the architecture's input size.
    #[arg(long)]
    pub crop: Option<usize>,
    /// Also report the expected sandwich-sampling training cost over the range.
    #[arg(long)]
    pub training_cost: bool,
    /// Monte-Carlo samples for --training-cost.
    #[arg(long, default_value_t = 20000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long)]
    pub config_file: Option<PathBuf>,
    /// Overrides the configuration file's mode: a3d, independent, multires, a3d_no_temporal.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoint, metrics and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint already in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// TOML run configuration naming the data; defaults to the one stored in the checkpoint.
    #[arg(long)]
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Calibrate this one configuration instead of the whole grid.
    #[arg(long)]
    pub config: Option<String>,
    /// Compute range preset; defaults to the training range.
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub range: Option<String>,
    /// Views per clip as `temporal,spatial`.
    #[arg(long, default_value = "1,1")]
    pub views: String,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "1,1,1")]
    pub config: String,
    #[arg(long, default_value = "1,1")]
    pub views: String,
    /// Use the full configuration's statistics sliced to the active channels.
    #[arg(long)]
    pub uncalibrated: bool,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Budget table JSON written by `a3d table`.
    #[arg(long)]
    pub table: PathBuf,
    /// GFLOPs per view.
    #[arg(long, allow_negative_numbers = true)]
    pub budget: f64,
    /// Clip folder of frame images.
    #[arg(long)]
    pub clip: PathBuf,
    #[arg(long, default_value = "1,1")]
    pub views: String,
    /// JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "1,1,1")]
    pub config: String,
    /// Clip folder of frame images.
    #[arg(long, required_unless_present = "planted", conflicts_with = "planted")]
    pub clip: Option<PathBuf>,
    /// Use the synthetic stimulus whose object appears only in this frame.
    #[arg(long)]
    pub planted: Option<usize>,
    /// Class of the planted object.
    #[arg(long, default_value_t = 0)]
    pub label: usize,
    /// Stimulus index (selects colours and position).
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trade-off CSVs written by `a3d table`.
    #[arg(long, required = true, num_args = 1..)]
    pub tradeoff: Vec<PathBuf>,
    /// Legend labels, one per CSV; file stems by default.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    /// SVG output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    Archive,
    Folder,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML run configuration with a synthetic data source.
    #[arg(long)]
    pub config_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "archive")]
    pub format: SynthFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
