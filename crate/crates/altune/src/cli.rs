//! Argument parsing and dispatch. Settings resolve as flag, then config
//! file, then built-in default; the output root falls back to `$ALTUNE_OUT`
//! when neither flag nor file sets it.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, parse_scenario, CmdError, CmdResult, TuneInputs};
use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "altune", version, about = "Adaptive latent-space tuning of beam phase-space predictors")]
pub struct Cli {
    /// Experiment config (TOML); every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root (default: config `output_dir`, then $ALTUNE_OUT, then ./altune-out).
    #[arg(long, global = true)]
    pub out_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training dataset from the analytic beam oracle.
    GenData {
        /// Number of records.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset file (default: <root>/dataset.altd).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the encoder-decoder on a dataset.
    Train {
        /// Dataset file (default: <root>/dataset.altd).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for weights and loss CSV (default: <root>/train).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tune the latent correction against a shifted, drifting beam.
    Tune {
        /// Weights file (default: <root>/train/weights.altw).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Training dataset, for the stale mean inputs (default: <root>/dataset.altd).
        #[arg(long)]
        data: Option<PathBuf>,
        /// none, near or far.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<altune_core::tuner::ShiftKind>,
        #[arg(long)]
        scenario_seed: Option<u64>,
        /// Run directory (default: <root>/tune-<scenario>-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
        /// Relative measurement noise.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Compare tuning runs in one table.
    Report {
        /// Run directories written by `tune`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// CSV file for the table (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Loads the config file and applies the global flags.
pub fn resolve_config(cli: &Cli) -> CmdResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load_or_default(cli.config.as_deref()).map_err(CmdError::Usage)?;
    if let Some(root) = &cli.out_root {
        cfg.output_dir = Some(root.clone());
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> CmdResult<()> {
    let mut cfg = resolve_config(&cli)?;
    let root = cfg.output_root();
    match cli.command {
        Command::GenData { n, seed, out } => {
            set(&mut cfg.n_samples, n);
            set(&mut cfg.dataset.seed, seed);
            let out = out.unwrap_or_else(|| root.join("dataset.altd"));
            commands::gen_data(&cfg, &out)?;
        }
        Command::Train { data, out, batch_size, seed } => {
            set(&mut cfg.training.batch_size, batch_size);
            set(&mut cfg.training.seed, seed);
            let data = data.unwrap_or_else(|| root.join("dataset.altd"));
            let out = out.unwrap_or_else(|| root.join("train"));
            commands::train(&cfg, &data, &out)?;
        }
        Command::Tune { weights, data, scenario, scenario_seed, out, steps, alpha, k, noise } => {
            set(&mut cfg.scenario, scenario);
            set(&mut cfg.scenario_seed, scenario_seed);
            set(&mut cfg.tuning.steps, steps);
            set(&mut cfg.tuning.es.alpha, alpha);
            set(&mut cfg.tuning.es.k, k);
            set(&mut cfg.measurement_noise, noise);
            let weights = weights.unwrap_or_else(|| root.join("train").join("weights.altw"));
            let data = data.unwrap_or_else(|| root.join("dataset.altd"));
            let out = out.unwrap_or_else(|| root.join(format!("tune-{}-s{}", cfg.scenario, cfg.scenario_seed)));
            commands::tune(&cfg, TuneInputs { weights: &weights, data: &data, out_dir: &out })?;
        }
        Command::Report { runs, out } => {
            let rows = commands::report(&runs)?;
            let result = match out {
                Some(path) => std::fs::File::create(&path)
                    .map_err(anyhow::Error::from)
                    .and_then(|f| commands::write_report(&rows, f)),
                None => commands::write_report(&rows, std::io::stdout().lock()),
            };
            result.map_err(CmdError::Runtime)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
