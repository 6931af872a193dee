//! Command-line front end: experiment commands that write CSV tables and a
//! JSON run manifest.

pub mod commands;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use aurelian_core::{ChannelConfig, ChannelSpec, Estimator, PriorConfig, PriorSpec, SweepMode, TransmissionPattern};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::commands::{CommandOutput, Rule};

#[derive(Debug, Parser)]
#[command(name = "aurelian", version, about = "Non-adaptive dyadic transmission policies over noisy channels")]
pub struct Cli {
    /// Directory receiving CSV files and the run manifest.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,

    /// Worker threads (0 = rayon default). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ChannelArg {
    /// Preset (`bac:P00,P11`, `bsc:EPS`) or path to a JSON channel config.
    #[arg(long, visible_alias = "preset", default_value = "bac:0.9,0.8")]
    pub channel: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    RaoBlackwell,
    Plain,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::RaoBlackwell => Estimator::RaoBlackwell,
            EstimatorArg::Plain => Estimator::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepModeArg {
    Exact,
    Mc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information constants of a channel.
    Info {
        #[command(flatten)]
        channel: ChannelArg,
    },
    /// Bounds, exact and simulated distortion for all patterns of a fixed budget.
    Fig2 {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long, default_value_t = 10)]
        n: u64,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "rao-blackwell")]
        estimator: EstimatorArg,
    },
    /// Aurelian-policy distortion along increasing budgets.
    Fig3 {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long, default_value_t = 5000)]
        n_max: u64,
        #[arg(long, default_value_t = 50)]
        step: u64,
        #[arg(long, value_enum, default_value = "exact")]
        mode: SweepModeArg,
        /// Required in `mc` mode.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Construct a pattern and check its structural properties.
    Policy {
        #[command(flatten)]
        channel: ChannelArg,
        #[arg(long)]
        n: u64,
        /// `aurelian`, `greedy` or `exhaustive:DEPTH`.
        #[arg(long, default_value = "aurelian")]
        rule: Rule,
    },
    /// Distortion in the transformed and original domains for a non-uniform prior.
    Nonuniform {
        #[command(flatten)]
        channel: ChannelArg,
        /// `uniform`, `power:E` or path to a JSON prior config.
        #[arg(long, default_value = "power:2")]
        prior: String,
        /// Declared squared Lipschitz constant, validated against the CDF.
        #[arg(long)]
        lipschitz_sq: Option<f64>,
        #[arg(long, default_value = "6,3,1")]
        pattern: TransmissionPattern,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug)]
pub enum CliError {
    Core(aurelian_core::Error),
    Config(String),
    Io(std::io::Error),
}

impl CliError {
    /// 2 for validation failures, 3 for budget refusals, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_budget_refusal() => 3,
            CliError::Core(_) | CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<aurelian_core::Error> for CliError {
    fn from(e: aurelian_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Reads a JSON file, accepting either the object itself or an object nested under `key`.
fn read_json_section(path: &Path, key: &str) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match value.get(key) {
        Some(inner) if inner.is_object() => Ok(inner.clone()),
        _ => Ok(value),
    }
}

pub fn load_channel(arg: &str) -> Result<ChannelSpec, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let section = read_json_section(path, "channel")?;
        let cfg: ChannelConfig = serde_json::from_value(section).map_err(|e| {
            CliError::Config(format!(
                "{}: expected {{\"preset\":...}} or {{\"outputs\",\"f0\",\"f1\"}}: {e}",
                path.display()
            ))
        })?;
        return Ok(cfg.build()?);
    }
    Ok(arg.parse()?)
}

pub fn load_prior(arg: &str, lipschitz_sq: Option<f64>) -> Result<PriorSpec, CliError> {
    let path = Path::new(arg);
    let mut cfg = if path.is_file() {
        let section = read_json_section(path, "prior")?;
        serde_json::from_value::<PriorConfig>(section)
            .map_err(|e| CliError::Config(format!("{}: prior field: {e}", path.display())))?
    } else if arg == "uniform" {
        PriorConfig::Uniform
    } else if let Some(e) = arg.strip_prefix("power:") {
        let exponent = e
            .parse::<f64>()
            .map_err(|err| CliError::Config(format!("prior exponent {e:?}: {err}")))?;
        PriorConfig::Power {
            exponent,
            lipschitz_sq: None,
        }
    } else {
        return Err(CliError::Config(format!("unknown prior {arg:?}")));
    };
    if let Some(k) = lipschitz_sq {
        match &mut cfg {
            PriorConfig::Power { lipschitz_sq, .. } => *lipschitz_sq = Some(k),
            PriorConfig::Uniform if k < 1.0 => {
                return Err(CliError::Config(format!("uniform prior has lipschitz_sq 1, declared {k}")))
            }
            PriorConfig::Uniform => {}
        }
    }
    Ok(cfg.build()?)
}

/// Result of running one command: what to print and what was written.
#[derive(Debug)]
pub struct RunOutcome {
    pub output: CommandOutput,
    pub written: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        return pool.install(|| execute(cli));
    }
    execute(cli)
}

fn execute(cli: &Cli) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let (name, config, seed, output) = match &cli.command {
        Command::Info { channel } => {
            let ch = load_channel(&channel.channel)?;
            let res = commands::info(&ch)?;
            ("info", json!({ "channel": ch.label() }), None, res.output)
        }
        Command::Fig2 {
            channel,
            n,
            depth,
            trials,
            seed,
            estimator,
        } => {
            let ch = load_channel(&channel.channel)?;
            let est: Estimator = (*estimator).into();
            let res = commands::fig2(&ch, *n, *depth, *trials, *seed, est)?;
            let cfg = json!({ "channel": ch.label(), "n": n, "depth": depth, "trials": trials, "estimator": est.tag() });
            ("fig2", cfg, Some(*seed), res.output)
        }
        Command::Fig3 {
            channel,
            n_max,
            step,
            mode,
            seed,
            trials,
        } => {
            let ch = load_channel(&channel.channel)?;
            let sweep = match mode {
                SweepModeArg::Exact => SweepMode::Exact,
                SweepModeArg::Mc => SweepMode::MonteCarlo {
                    trials: *trials,
                    seed: seed.ok_or_else(|| CliError::Config("--seed is required with --mode mc".into()))?,
                },
            };
            let res = commands::fig3(&ch, *n_max, *step, sweep)?;
            let cfg = json!({
                "channel": ch.label(), "n_max": n_max, "step": step,
                "mode": format!("{mode:?}").to_lowercase(), "trials": trials,
            });
            ("fig3", cfg, *seed, res.output)
        }
        Command::Policy { channel, n, rule } => {
            let ch = load_channel(&channel.channel)?;
            let res = commands::policy(&ch, *n, *rule)?;
            ("policy", json!({ "channel": ch.label(), "n": n, "rule": rule.to_string() }), None, res.output)
        }
        Command::Nonuniform {
            channel,
            prior,
            lipschitz_sq,
            pattern,
            trials,
            seed,
        } => {
            let ch = load_channel(&channel.channel)?;
            let pr = load_prior(prior, *lipschitz_sq)?;
            let res = commands::nonuniform(&ch, &pr, pattern, *trials, *seed)?;
            let cfg = json!({
                "channel": ch.label(), "prior": pr.label(), "pattern": pattern.to_string(), "trials": trials,
            });
            ("nonuniform", cfg, Some(*seed), res.output)
        }
    };
    let written = report::write_outputs(&cli.out, name, config, seed, &output.files, start.elapsed())?;
    Ok(RunOutcome { output, written })
}
