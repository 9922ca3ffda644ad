//! Command-line front end: config handling, artifact files and the commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use docsynth_core::model::PositionEncoding;
use serde_json::Value;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "docsynth", version, about = "Synthetic JSON records from a constrained autoregressive model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub valid: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tau: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub mixtures: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Learned absolute positions instead of key-path encoding.
    #[arg(long)]
    pub sequential_positions: bool,
    /// Train on one fixed key order.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Keep the parameters with the lowest validation loss.
    #[arg(long)]
    pub best_by_valid: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive schema, vocabulary and scalers from the training corpus.
    Derive {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write a checkpoint plus a per-epoch loss CSV.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Sample records from a checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        /// JSONL destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score synthetic corpora against real train/test corpora.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Synthetic JSONL; repeat for replicates.
        #[arg(long)]
        synth: Vec<PathBuf>,
        /// Generate replicates from this checkpoint instead.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        no_privacy: bool,
    },
    /// Split the corpus in half, train on one half, compare nearest distances.
    Privacy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        /// Use the training half itself as the synthetic set.
        #[arg(long)]
        copy_train: bool,
    },
    /// Write the nested boolean-leaf corpus and the two-movie corpus.
    SynthFixtures {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5000)]
        n: usize,
    },
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let c = common;
    cfg.seed = c.seed.or(cfg.seed);
    cfg.workers = c.workers.or(cfg.workers);
    cfg.tau = c.tau.unwrap_or(cfg.tau);
    for (dst, src) in [
        (&mut cfg.paths.output, &c.out),
        (&mut cfg.paths.train, &c.train),
        (&mut cfg.paths.valid, &c.valid),
        (&mut cfg.paths.test, &c.test),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    Ok(cfg)
}

fn apply_train_flags(cfg: &mut RunConfig, f: &TrainFlags) {
    let m = &mut cfg.model;
    let t = &mut cfg.train;
    t.epochs = f.epochs.unwrap_or(t.epochs);
    t.lr = f.lr.unwrap_or(t.lr);
    t.batch_size = f.batch_size.unwrap_or(t.batch_size);
    m.d_model = f.d_model.unwrap_or(m.d_model);
    m.n_layers = f.layers.unwrap_or(m.n_layers);
    m.n_heads = f.heads.unwrap_or(m.n_heads);
    m.d_ff = f.d_ff.unwrap_or(m.d_ff);
    m.n_mixtures = f.mixtures.unwrap_or(m.n_mixtures);
    m.dropout = f.dropout.unwrap_or(m.dropout);
    if f.sequential_positions {
        m.position = PositionEncoding::Sequential;
    }
    if f.no_shuffle {
        t.shuffle_keys = false;
    }
    if f.best_by_valid {
        t.best_by_valid = true;
    }
}

/// Resolved config for a parsed command line.
pub fn resolve(cmd: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match cmd {
        Command::Derive { common }
        | Command::Train { common, .. }
        | Command::Generate { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Privacy { common, .. }
        | Command::SynthFixtures { common, .. } => base_config(common)?,
    };
    match cmd {
        Command::Train { flags, .. } | Command::Privacy { flags, .. } => apply_train_flags(&mut cfg, flags),
        Command::Generate { n, temperature, .. } => {
            cfg.generate.n = n.unwrap_or(cfg.generate.n);
            cfg.generate.temperature = temperature.unwrap_or(cfg.generate.temperature);
        }
        Command::Evaluate { target, replicates, no_privacy, .. } => {
            if target.is_some() {
                cfg.eval.target.clone_from(target);
            }
            cfg.eval.replicates = replicates.unwrap_or(cfg.eval.replicates);
            if *no_privacy {
                cfg.eval.privacy = false;
            }
        }
        _ => {}
    }
    cfg.seed()?;
    Ok(cfg)
}

/// Output of a command: JSON summary plus optional raw stdout payload.
pub struct Outcome {
    pub summary: Value,
    pub stdout: Option<String>,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve(&cli.command)?;
    if let Some(w) = cfg.workers {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let summary = match &cli.command {
        Command::Derive { .. } => commands::derive(&cfg)?,
        Command::Train { .. } => commands::train_cmd(&cfg)?,
        Command::Generate { checkpoint, output, .. } => {
            let (text, sidecar) = commands::generate_cmd(&cfg, checkpoint, output.as_deref())?;
            return Ok(Outcome { summary: sidecar, stdout: text });
        }
        Command::Evaluate { synth, checkpoint, .. } => commands::evaluate_cmd(&cfg, synth, checkpoint.as_deref())?,
        Command::Privacy { copy_train, .. } => commands::privacy_cmd(&cfg, *copy_train)?,
        Command::SynthFixtures { n, .. } => {
            let out = cfg.output_dir()?;
            commands::synth_fixtures(&out, *n, cfg.seed()?)?
        }
    };
    Ok(Outcome { summary, stdout: None })
}
