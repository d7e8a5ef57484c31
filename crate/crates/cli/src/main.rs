//! `ser`: scan corpora, augment, extract MFCC features, train and evaluate
//! the attention CNN, predict single files and render the demo spectra.

mod commands;
mod features;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ser_core::audio::AudioError;
use ser_core::augment::{AugmentConfig, SignPolicy};
use ser_core::corpus::{CorpusError, DatasetId};
use ser_core::learn::LearnError;
use ser_core::nn::NnError;

use features::InputMode;

#[derive(Debug, Parser)]
#[command(name = "ser", version, about = "Speech emotion recognition with MFCC features and an attention 1D-CNN")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for cached feature records.
    #[arg(long, global = true, env = "SER_CACHE_DIR", default_value = ".ser-cache")]
    cache_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a labeled manifest from a corpus directory.
    Scan {
        #[arg(long, value_parser = parse_dataset)]
        dataset: DatasetId,
        #[arg(long)]
        root: PathBuf,
        /// Output manifest CSV.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Expand a manifest with noise and pitch-shifted rows (test rows are kept as they are).
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Extract and cache features for every manifest row.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Split, augment, extract and train; writes a checkpoint, a JSON-lines log and the split manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Epoch log (default: <checkpoint>.log.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.8)]
        split_ratio: f64,
        /// Train on the original clips only.
        #[arg(long)]
        no_augment: bool,
        /// Augment the whole corpus before splitting (augmented copies of
        /// test clips can then land in training).
        #[arg(long, conflicts_with = "no_augment")]
        augment_before_split: bool,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Evaluate a checkpoint on the test rows of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for confusion.csv and summary.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Score every row instead of only those marked `test`.
        #[arg(long)]
        all_rows: bool,
    },
    /// Classify one WAV file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
    },
    /// Write the raw, pre-emphasized and windowed spectra of the four-tone demo signal.
    DemoSpectra {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
struct FeatureArgs {
    #[arg(long, value_enum, default_value_t = InputMode::Pooled)]
    input_mode: InputMode,
    /// Replace MFCCs with per-frame sub-block log energies.
    #[arg(long)]
    no_mfcc: bool,
    #[arg(long, default_value_t = 20)]
    n_coeff: usize,
    /// Clip length after padding or trimming, in seconds.
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PitchDirection {
    Random,
    Up,
    Down,
    Both,
}

#[derive(Debug, Clone, Args)]
struct AugmentArgs {
    #[arg(long, default_value_t = 4)]
    semitones: i32,
    /// Noise standard deviation relative to the clip peak.
    #[arg(long, default_value_t = 0.035)]
    noise_scale: f64,
    #[arg(long, value_enum, default_value_t = PitchDirection::Random)]
    pitch_direction: PitchDirection,
}

impl AugmentArgs {
    fn config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            noise_scale: self.noise_scale,
            semitones: self.semitones,
            rng_seed: seed,
            sign_policy: match self.pitch_direction {
                PitchDirection::Random => SignPolicy::Random,
                PitchDirection::Up => SignPolicy::Up,
                PitchDirection::Down => SignPolicy::Down,
                PitchDirection::Both => SignPolicy::Both,
            },
        }
    }
}

fn parse_dataset(s: &str) -> Result<DatasetId, String> {
    s.parse().map_err(|e: CorpusError| e.to_string())
}

/// A problem with the caller's input rather than with the program.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

/// 2 for bad input (paths, corpora, audio, labels, checkpoints), 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let user = err.chain().any(|cause| {
        if cause.is::<UserError>() {
            return true;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return !matches!(e, CorpusError::Io(_));
        }
        if let Some(e) = cause.downcast_ref::<AudioError>() {
            return !matches!(e, AudioError::Config(_));
        }
        if let Some(e) = cause.downcast_ref::<LearnError>() {
            return matches!(e, LearnError::Label { .. } | LearnError::Config(_));
        }
        if let Some(e) = cause.downcast_ref::<NnError>() {
            return matches!(e, NnError::Checkpoint(_));
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return e.kind() == std::io::ErrorKind::NotFound;
        }
        false
    });
    if user {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
