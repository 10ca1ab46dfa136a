mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use config::Config;

/// Exit 1 for bad configuration or input, 2 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<gmvnet_core::Error> for CliError {
    fn from(e: gmvnet_core::Error) -> Self {
        use gmvnet_core::Error as E;
        match e {
            E::InvalidInput(_)
            | E::Parse { .. }
            | E::DuplicateKey { .. }
            | E::NonMonotoneDates(_)
            | E::Unsupported(_)
            | E::InfeasibleSpan(_)
            | E::Checkpoint(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "gmvnet", version, about = "Covariance cleaning and global-minimum-variance portfolios")]
struct Cli {
    /// Configuration file of key=value lines.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable and applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads; 1 selects the serial reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Shorthand for --set out=DIR.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Shorthand for --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic factor panel with its population covariance.
    Synth,
    /// Validate a long-format panel CSV and write its return matrix.
    Ingest {
        /// Panel CSV; defaults to the `data` key.
        input: Option<PathBuf>,
    },
    /// Train the network and write a checkpoint and loss curve.
    Train,
    /// Clean one window with an estimator and write eigenvalues and weights.
    Clean {
        /// Shorthand for --set clean.estimator=TAG.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Frictionless replicated backtest.
    Backtest {
        /// Shorthand for --set backtest.estimator=TAG.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Daily account simulation with fees, interest and corporate actions.
    Simulate {
        /// Shorthand for --set simulate.estimator=TAG.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Finite-difference check of every pipeline gradient.
    Gradcheck,
    /// Lag profile, spectrum stability and volatility transfer curve of a checkpoint.
    Diagnose,
    /// Print the effective configuration with the origin of every value.
    Config,
}

fn build_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = Config::defaults();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    for pair in &cli.set {
        cfg.set(pair)?;
    }
    if let Some(out) = &cli.out {
        cfg.set(&format!("out={out}"))?;
    }
    if let Some(seed) = cli.seed {
        cfg.set(&format!("seed={seed}"))?;
    }
    let estimator = match &cli.command {
        Command::Clean { estimator } => estimator.as_ref().map(|e| ("clean", e)),
        Command::Backtest { estimator } => estimator.as_ref().map(|e| ("backtest", e)),
        Command::Simulate { estimator } => estimator.as_ref().map(|e| ("simulate", e)),
        _ => None,
    };
    if let Some((section, tag)) = estimator {
        cfg.set(&format!("{section}.estimator={tag}"))?;
    }
    cfg.apply_profile()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let cfg = build_config(&cli)?;
    let ctx = commands::Context::new(cfg, cli.threads != Some(1))?;
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Ingest { input } => commands::ingest(&ctx, input),
        Command::Train => commands::train(&ctx),
        Command::Clean { .. } => commands::clean(&ctx),
        Command::Backtest { .. } => commands::backtest(&ctx),
        Command::Simulate { .. } => commands::simulate(&ctx),
        Command::Gradcheck => commands::gradcheck(&ctx),
        Command::Diagnose => commands::diagnose(&ctx),
        Command::Config => {
            print!("{}", ctx.cfg.dump());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let parsed = Cli::command().after_help(config::help_table()).try_get_matches().and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        // help and version go to stdout with status 0; usage errors are validation failures
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}
