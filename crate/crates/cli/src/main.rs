use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ibmcal::error::Error;
use ibmcal::experiment::{self, DataBlock, ExperimentConfig, ModelBlock, OneOrMany, Task};
use ibmcal::model::ModelKind;

#[derive(Parser)]
#[command(name = "ibmcal", version, about = "Calibrate individual-based epidemic models")]
struct Cli {
    /// Master seed; overrides the one in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task listed in a TOML or JSON config.
    Run { config: PathBuf },
    /// Draw covariates and a latent/observed trajectory.
    Simulate(TaskArgs),
    /// Run the filter and write per-step beliefs.
    Filter(TaskArgs),
    /// Compare the filter against the reference likelihoods on random problems.
    Verify(TaskArgs),
    /// Multi-start maximum-likelihood fit.
    Fit(TaskArgs),
    /// Posterior sampling with Hamiltonian Monte Carlo.
    Hmc(TaskArgs),
    /// Particle-filter estimates against the filter likelihood.
    ComparePf(TaskArgs),
    /// Score state predictions against simple baselines.
    EvalBaselines(TaskArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Config supplying defaults; its task list is replaced by this subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Parameter override, e.g. `--param beta=0.5`; repeatable.
    #[arg(long = "param", value_parser = parse_assignment)]
    params: Vec<(String, f64)>,
    /// Covariates CSV replacing the generated ones.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Observations CSV replacing the simulated ones.
    #[arg(long)]
    observations: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value = value
        .trim()
        .parse()
        .map_err(|e| format!("`{value}` is not a number: {e}"))?;
    Ok((name.trim().to_string(), value))
}

impl TaskArgs {
    fn into_config(self, task: Task) -> ibmcal::error::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => {
                let missing = |flag: &str| Error::Config(format!("--{flag} is required without --config"));
                // verification draws its own problems
                let placeholder = task == Task::Verify;
                let kind = match self.model {
                    Some(k) => k,
                    None if placeholder => ModelKind::HomogSis,
                    None => return Err(missing("model")),
                };
                let population = match (self.population, placeholder) {
                    (Some(n), _) => n,
                    (None, true) => 1,
                    (None, false) => return Err(missing("population")),
                };
                let horizon = match (self.horizon, placeholder) {
                    (Some(t), _) => t,
                    (None, true) => 1,
                    (None, false) => return Err(missing("horizon")),
                };
                ExperimentConfig {
                    seed: 0,
                    replicates: 1,
                    tasks: vec![task],
                    model: ModelBlock {
                        kind,
                        population: OneOrMany::One(population),
                        horizon,
                        step: 1.0,
                        params: Default::default(),
                        frozen: None,
                        unobserved_fraction: 0.0,
                    },
                    data: DataBlock::default(),
                    optim: Default::default(),
                    warm_start: None,
                    hmc: Default::default(),
                    pf: Default::default(),
                    baselines: Default::default(),
                    verify: Default::default(),
                }
            }
        };
        cfg.tasks = vec![task];
        if self.config.is_some() {
            if let Some(k) = self.model {
                cfg.model.kind = k;
            }
            if let Some(n) = self.population {
                cfg.model.population = OneOrMany::One(n);
            }
            if let Some(t) = self.horizon {
                cfg.model.horizon = t;
            }
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        cfg.model.params.extend(self.params);
        if self.covariates.is_some() {
            cfg.data.covariates = self.covariates;
        }
        if self.observations.is_some() {
            cfg.data.observations = self.observations;
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::MissingCommunity { .. }
        | Error::OutOfDomain { .. }
        | Error::ShapeMismatch(_)
        | Error::Io(_)
        | Error::MissingStore => 2,
        Error::ZeroMass
        | Error::DivByZero { .. }
        | Error::SupportViolation { .. }
        | Error::TooLarge { .. }
        | Error::ZeroLikelihood
        | Error::NonFinite { .. }
        | Error::Degenerate { .. } => 3,
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let parsed = match cli.command {
        Command::Run { config } => ExperimentConfig::from_path(&config),
        Command::Simulate(a) => a.into_config(Task::Simulate),
        Command::Filter(a) => a.into_config(Task::Filter),
        Command::Verify(a) => a.into_config(Task::Verify),
        Command::Fit(a) => a.into_config(Task::Fit),
        Command::Hmc(a) => a.into_config(Task::Hmc),
        Command::ComparePf(a) => a.into_config(Task::ComparePf),
        Command::EvalBaselines(a) => a.into_config(Task::EvalBaselines),
    };
    let outcome = parsed.and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        experiment::run(&cfg, &cli.out)
    });
    let report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(exit_code(&e)));
        }
    };
    for note in &report.notes {
        println!("{note}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    if report.oracle_failed() {
        eprintln!("error: an oracle residual exceeded its tolerance");
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
