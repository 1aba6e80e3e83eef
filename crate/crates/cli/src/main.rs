mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dtpnet", version, about = "DTP-Net EEG artifact removal experiments")]
struct Cli {
    /// Overrides every seed in the loaded configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-sample parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a semi-simulated dataset.
    Gen(GenArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Denoise a segment file.
    Denoise(DenoiseArgs),
    /// Score a model on a dataset split.
    Eval(EvalArgs),
    /// Train and score every ablation variant.
    Ablate(AblateArgs),
    /// Probe a model or report complexity.
    #[command(subcommand)]
    Inspect(InspectCommand),
}

#[derive(Args)]
pub struct GenArgs {
    /// Dataset parameters as JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON with `model` and optional `train` sections.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// basenet, tpb, dense, tpb_dense, or tpb_res.
    #[arg(long)]
    pub variant: Option<String>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Segment file, or CSV with one segment per row.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sample rate for CSV input.
    #[arg(long)]
    pub fs: Option<f32>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Baseline {
    /// Output equals the contaminated input.
    Identity,
    /// Output equals the clean reference.
    Oracle,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    pub model: Option<PathBuf>,
    /// Score a fixed baseline instead of a model.
    #[arg(long)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training seeds; the config seed when omitted.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Shared optimizer-step budget per run.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Subcommand)]
pub enum InspectCommand {
    /// Encoder filter spectra sorted by peak frequency.
    Filters {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 256.0)]
        fs: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-block representation ratios on a dataset split.
    Rlp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter and FLOP counts.
    Params {
        #[arg(long, conflicts_with = "config")]
        model: Option<PathBuf>,
        /// Model config JSON, or a train config with a `model` section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Segment length for the FLOP estimate.
        #[arg(long, default_value_t = 512)]
        len: usize,
    },
}

pub struct Globals {
    pub seed: Option<u64>,
    pub quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(error::USAGE);
        }
    }
    let g = Globals {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&g, &a),
        Command::Train(a) => commands::train(&g, &a),
        Command::Denoise(a) => commands::denoise(&g, &a),
        Command::Eval(a) => commands::eval(&g, &a),
        Command::Ablate(a) => commands::ablate(&g, &a),
        Command::Inspect(c) => commands::inspect(&g, &c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
