use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use difflab::harness::{
    cmd_analyze, cmd_distill, cmd_gen_data, cmd_report, cmd_train_teacher, CommandOutcome, ExperimentConfig,
};
use difflab::LabError;

#[derive(Parser)]
#[command(
    name = "difflab",
    version,
    about = "Label smoothing and distillation experiments on synthetic hierarchies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one label-smoothed teacher per alpha.
    TrainTeacher(Common),
    /// Distill a student for every (alpha, T) cell.
    Distill(Common),
    /// Diffusion, smoothness, dominance, class-accuracy and projection outputs.
    Analyze(Common),
    /// Summarize stored artifacts into report.txt.
    Report(Common),
    /// Generate (or copy) the train and val datasets.
    GenData(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Grid cells run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, LabError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.output {
            cfg.output_dir = out.clone();
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_for(err: &LabError) -> ExitCode {
    match err {
        LabError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

type CommandFn = fn(&ExperimentConfig) -> Result<CommandOutcome, LabError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, CommandFn) = match &cli.command {
        Command::TrainTeacher(c) => (c, cmd_train_teacher),
        Command::Distill(c) => (c, cmd_distill),
        Command::Analyze(c) => (c, cmd_analyze),
        Command::Report(c) => (c, cmd_report),
        Command::GenData(c) => (c, cmd_gen_data),
    };
    let cfg = match common.load() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.failures {
                eprintln!("failed: {}: {}", f.cell, f.error);
            }
            if outcome.is_success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
