use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgetimer::exp::{ablate, eval, grid, smoke, train_cmd, ExperimentConfig, RunError};

/// Multi-timescale edge scheduling experiments: train the adaptive
/// controller, evaluate it against the SST/SMT/DT/WT baselines, tune
/// baselines, run ablations, or smoke-test all 45 rule combinations.
#[derive(Parser)]
#[command(name = "edgetimer", version, about)]
struct Cli {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; all randomness derives from it via named streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Workload pattern override (A, B, C or D).
    #[arg(long, global = true)]
    pattern: Option<String>,

    /// Rule triple override, e.g. AM-MRP-EA.
    #[arg(long, global = true)]
    rules: Option<String>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the adaptive controllers and write checkpoint.bin + curves.csv.
    Train,
    /// Roll out the trained controller and all baselines on one script.
    Eval {
        /// Checkpoint path (defaults to <out>/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate a single method: edgetimer, sst, smt, dt or wt.
        #[arg(long)]
        method: Option<String>,
    },
    /// Exhaustive SMT/DT/WT tuning; writes grid.csv.
    Grid,
    /// Train and compare the ablation variants; writes ablate.csv.
    Ablate {
        /// Run a single variant: no-decomposition, no-layer1..3,
        /// no-centralized or no-safe (the full stack always runs too).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run all 45 rule combinations for up to 100 slots; writes smoke.csv.
    Smoke,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &cli.pattern {
        cfg.workload.pattern = p.clone();
    }
    if let Some(r) = &cli.rules {
        cfg.rules.triple = r.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Train => train_cmd(&cfg, cli.seed, &cli.out),
        Command::Eval { checkpoint, method } => {
            eval(&cfg, cli.seed, &cli.out, checkpoint.as_deref(), method.as_deref())
        }
        Command::Grid => grid(&cfg, cli.seed, &cli.out),
        Command::Ablate { variant } => ablate(&cfg, cli.seed, &cli.out, variant.as_deref()),
        Command::Smoke => smoke(&cfg, cli.seed, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
