//! `sirnet`: batch workbench for surrogate-based SIR inference.

mod commands;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sirnet::collocation::Method;
use sirnet::config::WorkbenchConfig;
use sirnet::{Error, Result};

use crate::commands::{apply_method, apply_seed, Ctx};
use crate::layout::Layout;

#[derive(Debug, Parser)]
#[command(name = "sirnet", version, about = "Neural-surrogate Laplace inference for SIR models")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration, used when --config is absent.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Surrogate method (1 = states only, 2 = states and sensitivities).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    method: Option<u8>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Simulated,
    Influenza,
    InfluenzaFixedI0,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config,
    /// Write the observation datasets.
    Simulate,
    /// Build the collocation grid, targets, scaler and split.
    Grid,
    /// Train the surrogate networks.
    Train,
    /// Laplace approximation from the trained surrogate.
    Infer {
        /// Model directory; defaults to the output layout.
        #[arg(long)]
        model: Option<PathBuf>,
        /// A single `t,y` observation file instead of the configured data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Random-walk Metropolis-Hastings benchmark.
    Mh {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Only the first N datasets.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Accuracy tables, ISE/MISE and density series.
    Eval,
}

fn load_config(cli: &Cli) -> Result<WorkbenchConfig> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), _) => WorkbenchConfig::load(path)?,
        (None, Some(Preset::Simulated)) => WorkbenchConfig::simulated(Method::II),
        (None, Some(Preset::Influenza)) => WorkbenchConfig::influenza(Method::II, false),
        (None, Some(Preset::InfluenzaFixedI0)) => WorkbenchConfig::influenza(Method::II, true),
        (None, None) => return Err(Error::InvalidConfig("pass --config PATH or --preset NAME".into())),
    };
    if let Some(seed) = cli.seed {
        apply_seed(&mut cfg, seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    let mut cfg = load_config(&cli)?;
    // the hash identifies the experiment, independent of the method and
    // of where outputs are written
    let hash = cfg.hash();
    if let Some(out) = &cli.out {
        cfg.output_dir.clone_from(out);
    }
    let method = match cli.method {
        Some(n) => Method::from_number(n)?,
        None => cfg.grid.method,
    };
    apply_method(&mut cfg, method);
    cfg.validate()?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let layout = Layout::new(&cfg.output_dir);
    let ctx = Ctx { cfg, hash, method, layout };
    log::info!("config hash {}", ctx.hash);
    match &cli.command {
        Command::Config => Ok(()),
        Command::Simulate => commands::simulate(&ctx),
        Command::Grid => commands::grid(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Infer { model, data } => commands::infer(&ctx, model.as_deref(), data.as_deref()),
        Command::Mh { data, replicates } => commands::mh(&ctx, data.as_deref(), *replicates),
        Command::Eval => commands::eval(&ctx),
    }
}

/// 2 for bad input or mismatched artifacts, 1 for failures while running.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::ConfigMismatch(_)
        | Error::MissingArtifact(_)
        | Error::ShapeMismatch { .. }
        | Error::Parse(_)
        | Error::Json(_)
        | Error::PopulationTooSmall { .. }
        | Error::EmptyDimension(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
