//! `musegan`: ingest MIDI, train, generate, evaluate, render and export.

mod commands;
mod config;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use musegan_core::{MetricsError, MidiError, ModelError, PianoRollError, TrainError};

use crate::config::CliConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    PianoRoll(#[from] PianoRollError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Input(_) => "input",
            CliError::Train(TrainError::Config(_)) => "config",
            CliError::Train(_) => "train",
            CliError::Midi(_) => "midi",
            CliError::Metrics(_) => "metrics",
            CliError::Model(_) => "model",
            CliError::PianoRoll(_) => "pianoroll",
        }
    }

    /// The message on one line.
    pub fn message(&self) -> String {
        self.to_string().lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
    }
}

#[derive(Parser, Debug)]
#[command(name = "musegan", version, about = "Multi-track piano-roll GAN toolkit")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// key=value config file with ingest.*, train.* and metrics.* keys
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra key=value override, applied after the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for training, or for sampling in `generate` (train.seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Network scale (train.profile)
    #[arg(long, global = true, value_parser = ["full", "toy"])]
    profile: Option<String>,
    /// Track-interaction model (train.model)
    #[arg(long, global = true, value_parser = ["jamming", "composer", "hybrid"])]
    model: Option<String>,
    /// Generate from scratch or accompany a given track (train.temporal)
    #[arg(long, global = true, value_parser = ["scratch", "conditional"])]
    temporal: Option<String>,
    /// Human-provided track in conditional mode, e.g. piano (train.condition_track)
    #[arg(long = "condition-track", global = true, value_name = "NAME")]
    condition_track: Option<String>,
    /// Drop every batch-norm layer from the generator (train.ablate_bn)
    #[arg(long = "ablate-bn", global = true)]
    ablate_bn: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a directory of MIDI files into a phrase store
    Ingest {
        midi_dir: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Tab-separated `file<TAB>genre<TAB>confidence` sidecar
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Train a model on a phrase store, writing a checkpoint directory
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Total number of steps (train.steps)
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the checkpoint in --out
        #[arg(long)]
        resume: bool,
    },
    /// Sample phrases from a checkpoint
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 16)]
        count: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the phrases as one MIDI file
        #[arg(long)]
        midi: Option<PathBuf>,
        /// Store to draw condition tracks from (conditional models)
        #[arg(long)]
        conditions: Option<PathBuf>,
    },
    /// Print the metric table of a store
    Eval {
        store: PathBuf,
        /// Store shown as a second row, e.g. the training data
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Plot one phrase as a plain PPM image
    Render {
        store: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Pixels per cell edge
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=64))]
        scale: u16,
    },
    /// Write phrases of a store as a MIDI file
    Export {
        store: PathBuf,
        /// Only this phrase; all phrases back to back otherwise
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn resolve(opts: &GlobalOpts) -> Result<CliConfig, CliError> {
    let mut c = CliConfig::default();
    if let Some(path) = &opts.config {
        c.apply_file(path)?;
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        c.set(k.trim(), v.trim())?;
    }
    let flags = [
        ("train.seed", opts.seed.map(|s| s.to_string())),
        ("train.profile", opts.profile.clone()),
        ("train.model", opts.model.clone()),
        ("train.temporal", opts.temporal.clone()),
        ("train.condition_track", opts.condition_track.clone()),
        ("train.ablate_bn", opts.ablate_bn.then(|| "true".to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = resolve(&cli.opts)?;
    if let Command::Train { steps: Some(n), .. } = &cli.command {
        config.set("train.steps", &n.to_string())?;
    }
    for line in config.resolved().lines() {
        eprintln!("config {line}");
    }
    match cli.command {
        Command::Ingest { midi_dir, out, metadata } => commands::ingest(&config, &midi_dir, &out, metadata.as_deref()),
        Command::Train { store, out, resume, .. } => commands::train(&config, &store, &out, resume),
        Command::Generate {
            checkpoint,
            count,
            out,
            midi,
            conditions,
        } => commands::generate(&config, &checkpoint, count, &out, midi.as_deref(), conditions.as_deref()),
        Command::Eval {
            store,
            reference,
            label,
            out,
        } => commands::eval(&config, &store, reference.as_deref(), label, out.as_deref()),
        Command::Render { store, index, out, scale } => commands::render(&store, index, &out, scale as usize),
        Command::Export { store, index, out } => commands::export(&store, index, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("musegan: error[{}]: {}", err.kind(), err.message());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("musegan: error[{}]: {}", e.kind(), e.message());
            ExitCode::FAILURE
        }
    }
}
