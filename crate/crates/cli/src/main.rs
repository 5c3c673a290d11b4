//! `collate`: data generation, detector and fusion training, detection,
//! evaluation, ablations and theory checks.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collate_core::collab::LossVariant;

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "collate", version, about = "Fuse detector and language-model anomaly scores")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.run_dir`.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Overrides `variant`.
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<LossVariant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark and the mock language-model answers.
    GenData,
    /// Train (or simulate) the detector on the train split.
    TrainTsadm,
    /// Score every slot with the language-model backend.
    ScoreLlm,
    /// Train the alignment mapping and the fusion network.
    TrainCollab,
    /// Run the trained pipeline over the test split.
    Detect,
    /// Compute metrics and plots from the detection scores.
    Eval,
    /// Run the theory checks; exits 1 if any fails.
    Verify,
    /// Train every loss variant and print a comparison table.
    Ablate {
        /// Sweep `grid.colr` x `grid.patchSize` for the configured variant.
        #[arg(long)]
        grid: bool,
    },
}

fn parse_variant(s: &str) -> Result<LossVariant, String> {
    LossVariant::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = LossVariant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant `{s}`; expected one of {}", names.join(", "))
        })
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.run_dir {
        cfg.paths.run_dir = d.clone();
    }
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::TrainTsadm => commands::train_detector(&cfg),
        Command::ScoreLlm => commands::score_llm(&cfg),
        Command::TrainCollab => commands::train_fusion(&cfg),
        Command::Detect => commands::detect(&cfg),
        Command::Eval => commands::evaluate(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Ablate { grid } => commands::ablate(&cfg, grid),
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
