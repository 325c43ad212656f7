mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Overrides, RunConfig, ScaleName};

/// Sandwich synchronization sequences for photon-counting Poisson links.
#[derive(Parser)]
#[command(name = "uvsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a sandwich sequence and its JSON sidecar.
    GenSeq,
    /// Closed-form (and optionally empirical) correlation moments per offset.
    Moments,
    /// MSE bound and side-peak budget per alpha.
    Bounds,
    /// Threshold scan and golden-section search for alpha.
    Optimize,
    /// Run the acceptance campaign and report pass/fail per criterion.
    Verify,
}

#[derive(Args)]
struct Flags {
    /// JSON config; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [falls back to UVSYNC_THREADS].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    grid_stride: Option<usize>,
    #[arg(long, global = true, value_enum)]
    scale: Option<ScaleName>,
}

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

fn env_threads() -> Result<Option<usize>, ConfigError> {
    match std::env::var("UVSYNC_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ConfigError(format!("invalid config: UVSYNC_THREADS ({v:?} is not a count)"))),
        _ => Ok(None),
    }
}

fn setup(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let f = &cli.flags;
    let mut cfg = RunConfig::load(f.config.as_deref())?.resolve(&Overrides {
        out: f.out.clone(),
        threads: f.threads,
        seed: f.seed,
        trials: f.trials,
        grid_stride: f.grid_stride,
        scale: f.scale,
    });
    if cfg.threads.is_none() {
        cfg.threads = env_threads()?;
    }
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ConfigError(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| ConfigError(format!("invalid config: out ({}: {e})", cfg.out.display())))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match setup(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("uvsync: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let run = match cli.command {
        Command::GenSeq => commands::gen_seq(&cfg),
        Command::Moments => commands::moments(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Optimize => commands::optimize(&cfg),
        Command::Verify => commands::verify(&cfg),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("uvsync: {e:#}");
            let validation = e
                .downcast_ref::<uvsync::Error>()
                .is_some_and(commands::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { 1 })
        }
    }
}
