//! `seqstep` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or configuration,
//! 2 for runtime failures (including tripped stage guards, after the
//! outputs have been written).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{DeltaKind, StepValuesSpec};
use config::{ExperimentConfig, Overrides};
use error::CliError;
use seqstep::procedures::Termination;

#[derive(Parser)]
#[command(name = "seqstep", version, about = "Sequential stepdown and stepup multiple testing")]
struct Cli {
    /// Cap on worker threads for Monte Carlo work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print stepdown and stepup type I step values side by side.
    StepValues(StepValuesArgs),
    /// Run a single ensemble and log its decisions.
    Run(RunArgs),
    /// Monte Carlo report for every configured sequential design.
    Simulate(SimulateArgs),
    /// Sequential designs against calibrated fixed-sample procedures.
    Compare(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count, overriding the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::load(&self.config)?.resolve(&Overrides {
            seed: self.seed,
            reps: self.reps,
            out: self.out.clone(),
        })
    }
}

#[derive(Args)]
struct StepValuesArgs {
    /// Take J, alpha and the error metric from this config's scenario.
    #[arg(long, conflicts_with_all = ["streams", "gamma", "k"])]
    config: Option<PathBuf>,
    /// Number of hypotheses J.
    #[arg(long, required_unless_present = "config")]
    streams: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// FDP tolerance gamma_1 (FDP step values).
    #[arg(long, conflicts_with = "k")]
    gamma: Option<f64>,
    /// k_1 (k-FWER step values).
    #[arg(long)]
    k: Option<usize>,
    /// Shape of the step values; defaults to holm with --gamma and kfwe with --k.
    #[arg(long, value_enum)]
    delta: Option<DeltaKind>,
    /// Also write step_values.csv and the resolved arguments here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Print per-stage statistics, boundaries and decisions.
    #[arg(long)]
    trace: bool,
    /// Index into the config's designs (simulated runs only).
    #[arg(long, default_value_t = 0)]
    design: usize,
    /// Replicate number (simulated runs only).
    #[arg(long, default_value_t = 0)]
    replicate: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Also write one row per replicate to replicates.csv.
    #[arg(long)]
    replicates: bool,
}

fn execute(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::StepValues(a) => match &a.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path)?.resolve(&Overrides {
                    out: a.out.clone(),
                    ..Overrides::default()
                })?;
                commands::scenario_step_values(&cfg)
            }
            None => {
                let spec = StepValuesSpec {
                    streams: a.streams.expect("required by clap"),
                    alpha: a.alpha,
                    beta: a.beta,
                    gamma: a.gamma,
                    k: a.k,
                    delta: a.delta.unwrap_or(if a.k.is_some() {
                        DeltaKind::Kfwe
                    } else {
                        DeltaKind::Holm
                    }),
                };
                commands::step_values(&spec, a.out.as_deref())
            }
        },
        Command::Run(a) => {
            let cfg = a.common.load()?;
            let (text, termination) = commands::run(&cfg, a.design, a.replicate, a.trace)?;
            if termination == Termination::GuardTripped {
                print!("{text}");
                return Err(CliError::Runtime("stage guard tripped".into()));
            }
            Ok(text)
        }
        Command::Simulate(a) => commands::simulate(&a.common.load()?, a.replicates),
        Command::Compare(a) => commands::compare(&a.load()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
