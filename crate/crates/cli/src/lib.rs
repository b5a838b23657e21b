//! Headless front end: run scenarios to files, compare logs, sweep attack
//! parameters.
//!
//! Exit codes: 0 ok, 2 invalid input (parse, validation, mismatched logs),
//! 3 a session faulted.

pub mod compare;
pub mod run;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use mems_testbed::{AttackConfig, LogFormat, ScenarioConfig, ValidationError};

pub use sweep::Axis;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_FAULTED: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Io { .. } => EXIT_INVALID,
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Scenario file plus the optional attack and seed overrides.
pub fn load_scenario(
    scenario: &Path,
    attack: Option<&Path>,
    seed: Option<u64>,
) -> Result<ScenarioConfig, CliError> {
    let mut config: ScenarioConfig = read_json(scenario)?;
    if let Some(p) = attack {
        config.attack = Some(read_json::<AttackConfig>(p)?);
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Parser)]
#[command(name = "mems-testbed", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario to completion and write its log and metrics.
    Run(RunArgs),
    /// Compare an attacked log against its benign reference.
    Compare(CompareArgs),
    /// Run one session per point of an attack-parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Attack config (JSON); replaces any attack in the scenario.
    #[arg(long)]
    pub attack: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Log formats to write.
    #[arg(long, value_delimiter = ',', default_value = "json")]
    pub format: Vec<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs; run i uses seed + i and writes to run_NNN/.
    #[arg(long, default_value_t = 1)]
    pub repeat: u32,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Benign log (JSON).
    pub benign: PathBuf,
    /// Attacked log (JSON).
    pub attacked: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Attack template; defaults to the scenario's attack.
    #[arg(long)]
    pub attack: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Inclusive range `start:end`.
    #[arg(long)]
    pub range: String,
    #[arg(long)]
    pub steps: u32,
    /// Base seed; point i uses base + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_formats(names: &[String]) -> Result<Vec<LogFormat>, CliError> {
    let mut out = Vec::new();
    for n in names {
        let f: LogFormat = n
            .parse()
            .map_err(|e| CliError::Invalid(format!("--format: {e}")))?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(&a),
        Command::Compare(a) => compare::cmd_compare(&a),
        Command::Sweep(a) => sweep::cmd_sweep(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
