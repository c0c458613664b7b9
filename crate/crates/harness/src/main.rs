use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use selectcond::two_stage::SampleSizePrior;
use selectcond::winners::WinnersModelKind;
use selectcond_harness::config::{AncillarityParams, ExperimentConfig, Params, Scenario};
use selectcond_harness::runner::{run, verify, RunOutput};
use selectcond_harness::{exit_code, oneshot, CheckFailed, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "selectcond",
    version,
    about = "Selective inference experiments and one-shot inference"
)]
struct Cli {
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true, env = "SELECTCOND_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: config value, else all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for tables and summaries.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Confidence level; overrides the config's level.
    #[arg(long, global = true)]
    level: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Simulate { config: PathBuf },
    /// Inference on data read from a file or stdin; prints JSON.
    Infer {
        #[command(subcommand)]
        what: InferCommand,
    },
    /// Random audits of ancillarity preservation under selection.
    CheckAncillarity {
        #[arg(long, default_value_t = 200)]
        audits: usize,
        /// Also report the fixed instance where a vanishing selection
        /// probability breaks preservation.
        #[arg(long)]
        counterexample: bool,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
}

#[derive(Args)]
struct Input {
    /// Data file (numbers separated by commas or whitespace); stdin if
    /// absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WinnersModel {
    ConditionalOnLosers,
    FullVector,
}

#[derive(Subcommand)]
enum InferCommand {
    /// Largest of independent Gaussian observations.
    Winners {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "conditional-on-losers")]
        model: WinnersModel,
    },
    /// Location family, selected when the test of θ = 0 rejects at `alpha`.
    Location {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "gaussian")]
        family: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Screening stage of `n1` observations followed by a second stage.
    TwoStage {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        n1: usize,
        #[arg(long, default_value_t = selectcond::two_stage::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Possible first-stage sizes, for the unconditional analysis.
        #[arg(long, value_delimiter = ',')]
        prior_support: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        prior_probs: Vec<f64>,
    },
    /// Gaussian mean selected when the sample mean exceeds a threshold.
    Mean {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Select on the absolute value of the mean.
        #[arg(long)]
        two_sided: bool,
    },
    /// Marginal screening of the design's columns, then inference for each
    /// selected coefficient.
    Screening {
        #[command(flatten)]
        input: Input,
        /// Design matrix, one row per observation.
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
}

fn read_text(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn read_data(input: &Input) -> Result<Vec<f64>> {
    oneshot::parse_numbers(&read_text(input.input.as_deref())?)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn execute(cfg: &ExperimentConfig, cli: &Cli) -> Result<RunOutput> {
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or_else(default_jobs);
    anyhow::ensure!(jobs >= 1, "--jobs must be at least 1");
    let out = run(cfg, jobs)?;
    for path in out.write(&cli.out)? {
        eprintln!("wrote {}", path.display());
    }
    verify(&cli.out, cfg.scenario).map_err(|e| CheckFailed(format!("verification: {e:#}")))?;
    let summary = out.summary();
    print_json(&summary)?;
    if let Some(a) = &summary.audit {
        if !a.all_preserved() {
            return Err(CheckFailed(format!(
                "{} of {} audits did not preserve ancillarity",
                a.instances - a.g_preserved.min(a.m_preserved),
                a.instances
            ))
            .into());
        }
    }
    Ok(out)
}

fn main_inner(cli: &Cli) -> Result<()> {
    let level = cli.level.unwrap_or(0.9);
    match &cli.command {
        Command::Simulate { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(l) = cli.level {
                cfg.set_level(l)?;
            }
            execute(&cfg, cli)?;
        }
        Command::CheckAncillarity {
            audits,
            counterexample,
            eps,
        } => {
            let cfg = ExperimentConfig {
                scenario: Scenario::AncillarityAudit,
                seed: cli.seed.unwrap_or(0),
                jobs: None,
                params: Params::Ancillarity(AncillarityParams {
                    n_reps: *audits,
                    eps: *eps,
                    counterexample: *counterexample,
                }),
            };
            cfg.validate()?;
            execute(&cfg, cli)?;
        }
        Command::Infer { what } => match what {
            InferCommand::Winners { input, sigma, model } => {
                let kind = match model {
                    WinnersModel::ConditionalOnLosers => WinnersModelKind::ConditionalOnLosers,
                    WinnersModel::FullVector => WinnersModelKind::FullVector,
                };
                print_json(&oneshot::winners(read_data(input)?, *sigma, kind, level)?)?;
            }
            InferCommand::Location { input, family, alpha } => {
                print_json(&oneshot::location(&read_data(input)?, family, *alpha, level)?)?;
            }
            InferCommand::TwoStage {
                input,
                n1,
                threshold,
                prior_support,
                prior_probs,
            } => {
                let prior = match (prior_support.is_empty(), prior_probs.is_empty()) {
                    (true, true) => None,
                    (false, true) => Some(SampleSizePrior::uniform(prior_support.clone())?),
                    (false, false) => Some(SampleSizePrior::new(prior_support.clone(), prior_probs.clone())?),
                    (true, false) => anyhow::bail!("--prior-probs needs --prior-support"),
                };
                print_json(&oneshot::two_stage(&read_data(input)?, *n1, *threshold, prior, level)?)?;
            }
            InferCommand::Mean {
                input,
                threshold,
                sigma,
                two_sided,
            } => {
                print_json(&oneshot::mean(
                    &read_data(input)?,
                    *sigma,
                    *threshold,
                    *two_sided,
                    level,
                )?)?;
            }
            InferCommand::Screening {
                input,
                design,
                threshold,
                sigma,
            } => {
                let x = oneshot::parse_matrix(&read_text(Some(design))?)?;
                print_json(&oneshot::screening(x, read_data(input)?, *threshold, *sigma, level)?)?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
