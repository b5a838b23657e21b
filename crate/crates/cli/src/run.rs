use std::path::{Path, PathBuf};

use mems_testbed::session::{run_scenario, MetricsError, Session, SessionError};
use mems_testbed::{
    compute_metrics, export_log, LogFormat, MetricsReport, ScenarioConfig, SessionState,
};

use crate::{load_scenario, parse_formats, write_file, CliError, RunArgs, EXIT_FAULTED, EXIT_OK};

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug)]
pub struct RunOutcome {
    pub state: SessionState,
    pub metrics: Option<MetricsReport>,
    pub files: Vec<PathBuf>,
}

fn simulate(config: ScenarioConfig) -> Result<Session, CliError> {
    run_scenario(config).map_err(|e| match e {
        SessionError::Invalid(v) => v.into(),
        other => CliError::Invalid(other.to_string()),
    })
}

/// Runs `config` to the end and writes `log.<ext>` for each format plus
/// `metrics.json` into `dir`.
///
/// An attacked scenario is scored against a benign run of the same config
/// and seed, whose log is written as `reference.<ext>`.
pub fn run_to_dir(
    config: &ScenarioConfig,
    formats: &[LogFormat],
    dir: &Path,
) -> Result<RunOutcome, CliError> {
    let session = simulate(config.clone())?;
    let reference = if session.log().has_attack() {
        Some(simulate(config.without_attack())?)
    } else {
        None
    };

    let mut files = Vec::new();
    for &f in formats {
        let path = dir.join(format!("log.{}", f.extension()));
        write_file(&path, &export_log(session.log(), f))?;
        files.push(path);
        if let Some(r) = &reference {
            let path = dir.join(format!("reference.{}", f.extension()));
            write_file(&path, &export_log(r.log(), f))?;
            files.push(path);
        }
    }

    let metrics = match compute_metrics(session.log(), reference.as_ref().map(Session::log)) {
        Ok(m) => Some(m),
        Err(MetricsError::EmptyLog) => None,
        Err(e) => return Err(CliError::Invalid(e.to_string())),
    };
    if let Some(m) = &metrics {
        let path = dir.join(METRICS_FILE);
        let mut bytes = serde_json::to_vec_pretty(m).expect("metrics serialize");
        bytes.push(b'\n');
        write_file(&path, &bytes)?;
        files.push(path);
    }
    if let Some(f) = session.fault() {
        eprintln!(
            "session faulted at t={} (tick {}): {}",
            f.t, f.tick, f.reason
        );
    }
    Ok(RunOutcome {
        state: session.state(),
        metrics,
        files,
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, CliError> {
    if args.repeat < 1 {
        return Err(CliError::Invalid("--repeat must be at least 1".into()));
    }
    let formats = parse_formats(&args.format)?;
    let config = load_scenario(&args.scenario, args.attack.as_deref(), args.seed)?;

    let mut code = EXIT_OK;
    for i in 0..args.repeat {
        let (cfg, dir) = if args.repeat == 1 {
            (config.clone(), args.out.clone())
        } else {
            let cfg = ScenarioConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            (cfg, args.out.join(format!("run_{i:03}")))
        };
        let outcome = run_to_dir(&cfg, &formats, &dir)?;
        let verdict = outcome
            .metrics
            .as_ref()
            .map(|m| format!("{:?}", m.attack_success))
            .unwrap_or_else(|| "-".into());
        println!(
            "{} seed={} state={} attack_success={}",
            dir.display(),
            cfg.seed,
            outcome.state,
            verdict
        );
        if outcome.state == SessionState::Faulted {
            code = EXIT_FAULTED;
        }
    }
    Ok(code)
}
