use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lfq_core::matrix::{Level, Measure};
use lfq_core::pipeline::{self, PipelineConfig, PipelineError};
use lfq_core::simulate::{Preset, SimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Label-free LC-MS/MS quantification and differential testing.
#[derive(Debug, Parser)]
#[command(name = "lfq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with known ground truth.
    Simulate(SimArgs),
    /// Spectral counts and fitted ion abundances per species.
    Quantify(StageArgs),
    /// Roll species matrices up to the requested levels.
    Rollup(StageArgs),
    /// Permutation tests of tau per protein.
    Test(StageArgs),
    /// Ion-competition and semi-tryptic diagnostics.
    Diagnose(StageArgs),
    /// ROC curves and confusion counts against the design.
    Evaluate(StageArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Simulator `key = value` file; the two-mixture preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Pipeline `key = value` file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    fdr_threshold: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Restricts the run to one level.
    #[arg(long)]
    level: Option<Level>,
    /// Restricts the run to one measure.
    #[arg(long)]
    measure: Option<Measure>,
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.input {
            cfg.input = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.permutations {
            cfg.permutations = v;
        }
        if let Some(v) = self.fdr_threshold {
            cfg.fdr_threshold = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.level {
            cfg.levels = vec![v];
        }
        if let Some(v) = self.measure {
            cfg.measures = vec![v];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(args: &SimArgs) -> Result<(), PipelineError> {
    let mut sim = match &args.config {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::preset(Preset::Biatech),
    };
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    pipeline::cmd_simulate(&sim, &args.out)?;
    Ok(())
}

fn run(command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Quantify(a) => pipeline::cmd_quantify(&a.config()?).map(|_| ()),
        Command::Rollup(a) => pipeline::cmd_rollup(&a.config()?),
        Command::Test(a) => pipeline::cmd_test(&a.config()?),
        Command::Diagnose(a) => pipeline::cmd_diagnose(&a.config()?),
        Command::Evaluate(a) => pipeline::cmd_evaluate(&a.config()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not failures.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
