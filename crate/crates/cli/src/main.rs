mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Consonant-vowel transition scoring: segmentation, log-mel features, CNN
/// consonant classifier, articulation scores and their statistics.
#[derive(Debug, Parser)]
#[command(name = "cvoam", version)]
pub struct Cli {
    /// Seed for every random choice (initialisation, shuffling, jitter).
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for per-utterance work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Phone inventory JSON (`{"consonants": [...], "vowels": [...]}`).
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Interval tier holding the phones in TextGrid alignments.
    #[arg(long, default_value = "phones")]
    pub tier: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Utterances per batch (all of their CV segments go in one batch).
    #[arg(long, default_value_t = 8, conflicts_with = "batch_segments")]
    pub batch_sentences: usize,
    /// Use a fixed number of segments per batch instead.
    #[arg(long)]
    pub batch_segments: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier on the CV segments of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 160)]
        window_ms: u32,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Classification accuracy and confusion matrix on a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "phones")]
        tier: String,
    },
    /// Per-instance and per-speaker articulation scores.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "phones")]
        tier: String,
    },
    /// Pearson correlation of speaker-level scores with ratings.
    Correlate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Forward-selection linear model from consonant-level scores to ratings.
    Fit {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also run leave-one-speaker-out evaluation.
        #[arg(long)]
        loso: bool,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        min_improvement: f64,
        #[arg(long, default_value_t = 10)]
        max_features: usize,
        #[arg(long, default_value_t = 1e-6)]
        ridge: f64,
    },
    /// Train and test one model per CV window length.
    Sweep {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        test_manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        from: u32,
        #[arg(long, default_value_t = 200)]
        to: u32,
        #[arg(long, default_value_t = 20)]
        step: u32,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Guided-backpropagation saliency map for one CV instance.
    Saliency {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Which CV onset of the utterance (0-based).
        #[arg(long, default_value_t = 0)]
        onset_index: usize,
        /// Class to explain (consonant symbol); defaults to the target consonant.
        #[arg(long)]
        class: Option<String>,
        #[arg(long, default_value = "phones")]
        tier: String,
    },
    /// Coefficient of variation per (speaker, consonant); with a second table,
    /// a paired t-test on the matched cells.
    Cov {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Perturb vowel onsets with Gaussian noise and write new alignments.
    Jitter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sigma_ms: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Generate a synthetic demo corpus (tones standing in for phones).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        utterances: usize,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 12)]
        phones: usize,
    },
}

fn parse() -> Result<Cli, ExitCode> {
    Cli::try_parse().map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("{}", CliError::Usage("--threads must be positive".into()));
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("{}", CliError::Internal(e.to_string()));
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvoam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
