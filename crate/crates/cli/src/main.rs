//! `pcg`: prepare datasets, run the studies, evaluate and apply checkpoints.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "pcg", version, about = "Heart-sound (PCG) screening pipeline")]
struct Cli {
    /// Worker threads for preprocessing and per-sample gradients (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    Physionet,
    Pascal,
    /// PhysioNet and PASCAL caches together.
    Combined,
}

impl DatasetArg {
    pub fn name(self) -> &'static str {
        match self {
            DatasetArg::Physionet => "physionet",
            DatasetArg::Pascal => "pascal",
            DatasetArg::Combined => "combined",
        }
    }
}

#[derive(Debug, Args)]
pub struct CacheArg {
    /// Cache directory for segments and spectrograms.
    #[arg(long, env = "PCG_CACHE_DIR", default_value = "pcg-cache")]
    pub cache: PathBuf,
}

/// Settings shared by `train` and `transfer`; each overrides the config file.
#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub cache: CacheArg,
    /// Output root; results go to `<out>/study<N>`. Defaults to the config
    /// file's `output_dir`, else `pcg-out/study<N>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Divide every conv layer's filter count by this (1 = published widths).
    #[arg(long)]
    pub width_divisor: Option<usize>,
    /// Loss weights as `normal,abnormal`.
    #[arg(long)]
    pub class_weights: Option<String>,
    /// One fold, one epoch, narrow layers, at most 16 items per class. Falls
    /// back to a synthetic corpus when the cache is empty.
    #[arg(long)]
    pub smoke: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a dataset into cached segments and spectrogram images.
    Prepare {
        /// Dataset root directory.
        #[arg(long)]
        root: PathBuf,
        #[arg(long, value_enum)]
        dataset: DatasetArg,
        #[command(flatten)]
        cache: CacheArg,
        /// Process at most 16 recordings.
        #[arg(long)]
        smoke: bool,
    },
    /// Run study 1 (architecture sweep) or study 2 (combined dataset).
    Train {
        #[arg(long, default_value_t = 1)]
        study: u8,
        /// Comma-separated preset list (exp1..exp7, best).
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        args: StudyArgs,
    },
    /// Fine-tune a PhysioNet checkpoint on PASCAL (study 3).
    Transfer {
        /// Source checkpoint.
        #[arg(long)]
        source: PathBuf,
        /// Layers to freeze, e.g. `conv1,conv2,conv3`.
        #[arg(long)]
        freeze: Option<String>,
        #[command(flatten)]
        args: StudyArgs,
    },
    /// Score a checkpoint on every cached image of a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        dataset: DatasetArg,
        #[command(flatten)]
        cache: CacheArg,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one WAV recording.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Re-aggregate the metrics CSVs of a finished run.
    Report {
        /// A `train` or `transfer` output directory.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write a freshly initialized checkpoint.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "best")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        width_divisor: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// All weights zero: every prediction is exactly 0.5.
        #[arg(long)]
        zero: bool,
    },
    /// Generate a synthetic PhysioNet-style corpus (WAVs + REFERENCE.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(Failure::internal)?;
    }
    match cli.command {
        Command::Prepare { root, dataset, cache, smoke } => commands::prepare(&root, dataset, &cache.cache, smoke),
        Command::Train { study, preset, args } => commands::train(study, preset.as_deref(), &args),
        Command::Transfer { source, freeze, args } => commands::transfer(&source, freeze.as_deref(), &args),
        Command::Evaluate { checkpoint, dataset, cache, threshold, out } => {
            commands::evaluate(&checkpoint, dataset, &cache.cache, threshold, out.as_deref())
        }
        Command::Predict { checkpoint, wav, threshold } => commands::predict(&checkpoint, &wav, threshold),
        Command::Report { dir } => commands::report(&dir),
        Command::Init { out, preset, width_divisor, seed, zero } => {
            commands::init(&out, &preset, width_divisor, seed, zero)
        }
        Command::Synth { out, per_class, seed } => commands::synth(&out, per_class, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
