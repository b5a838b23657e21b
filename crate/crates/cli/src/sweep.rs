use std::fmt::Write as _;

use clap::ValueEnum;
use rayon::prelude::*;

use mems_testbed::session::{run_scenario, MetricsError};
use mems_testbed::{compute_metrics, AttackConfig, MetricsReport, ScenarioConfig, SessionState};

use crate::{load_scenario, write_file, CliError, SweepArgs, EXIT_FAULTED, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Carrier frequency, Hz.
    Freq,
    /// Source level, dB SPL.
    Spl,
    /// Bursts per second.
    #[value(name = "trigger_rate")]
    TriggerRate,
}

impl Axis {
    pub fn column(self) -> &'static str {
        match self {
            Axis::Freq => "carrier_freq",
            Axis::Spl => "spl_at_source",
            Axis::TriggerRate => "trigger_rate",
        }
    }

    fn apply(self, attack: &mut AttackConfig, value: f64) {
        match self {
            Axis::Freq => attack.carrier_freq = value,
            Axis::Spl => attack.spl_at_source = value,
            Axis::TriggerRate => attack.trigger_rate = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub axis: Axis,
    pub start: f64,
    pub end: f64,
    pub steps: u32,
}

impl SweepGrid {
    pub fn parse(axis: Axis, range: &str, steps: u32) -> Result<Self, CliError> {
        let bad = || CliError::Invalid(format!("--range must be start:end, got {range:?}"));
        let (a, b) = range.split_once(':').ok_or_else(bad)?;
        let start: f64 = a.trim().parse().map_err(|_| bad())?;
        let end: f64 = b.trim().parse().map_err(|_| bad())?;
        if !start.is_finite() || !end.is_finite() {
            return Err(bad());
        }
        if steps < 2 {
            return Err(CliError::Invalid(format!(
                "--steps must be at least 2, got {steps}"
            )));
        }
        Ok(Self {
            axis,
            start,
            end,
            steps,
        })
    }

    /// Grid values, endpoints included exactly.
    pub fn values(&self) -> Vec<f64> {
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i == self.steps - 1 {
                    self.end
                } else {
                    self.start + (self.end - self.start) * i as f64 / n
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub seed: u64,
    pub value: f64,
    pub state: SessionState,
    pub metrics: Option<MetricsReport>,
}

/// Per-point configs: `base` with the attack axis set and seed base + index.
/// Every point is validated before anything runs.
pub fn point_configs(
    base: &ScenarioConfig,
    template: AttackConfig,
    sweep: &SweepGrid,
) -> Result<Vec<ScenarioConfig>, CliError> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, v) in sweep.values().into_iter().enumerate() {
        let mut attack = template;
        sweep.axis.apply(&mut attack, v);
        let cfg = ScenarioConfig {
            seed: base.seed.wrapping_add(i as u64),
            attack: Some(attack),
            ..base.clone()
        };
        if let Err(e) = cfg.validate() {
            problems.push(format!("point {i} ({} = {v}): {e}", sweep.axis.column()));
        }
        out.push(cfg);
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Invalid(problems.join("; ")))
    }
}

fn run_point(index: usize, value: f64, cfg: &ScenarioConfig) -> SweepRow {
    let attacked = run_scenario(cfg.clone()).expect("validated config");
    let benign = run_scenario(cfg.without_attack()).expect("validated config");
    let metrics = match compute_metrics(attacked.log(), Some(benign.log())) {
        Ok(m) => Some(m),
        Err(MetricsError::EmptyLog) => None,
        Err(e) => unreachable!("reference shares config and seed: {e}"),
    };
    SweepRow {
        index,
        seed: cfg.seed,
        value,
        state: attacked.state(),
        metrics,
    }
}

/// Runs every grid point (in parallel); rows come back in grid order.
pub fn run_sweep(
    base: &ScenarioConfig,
    template: AttackConfig,
    sweep: &SweepGrid,
) -> Result<Vec<SweepRow>, CliError> {
    let configs = point_configs(base, template, sweep)?;
    let values = sweep.values();
    Ok(configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| run_point(i, values[i], cfg))
        .collect())
}

const METRIC_COLUMNS: &str = "attack_success,max_velocity_est_error,sustained_velocity_error,velocity_rmse_vs_setpoint,max_lateral_deviation,max_heading_error,imu_wheel_discrepancy_rms,jerk_rms,stopping_distance,max_slip_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn table_csv(axis: Axis, rows: &[SweepRow]) -> String {
    let mut out = format!("index,seed,{},state,{METRIC_COLUMNS}\n", axis.column());
    for r in rows {
        write!(out, "{},{},{},{}", r.index, r.seed, r.value, r.state).unwrap();
        match &r.metrics {
            Some(m) => {
                let verdict = serde_json::to_value(m.attack_success).unwrap();
                writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{},{},{}",
                    verdict.as_str().unwrap_or_default(),
                    m.max_velocity_est_error,
                    m.sustained_velocity_error,
                    m.velocity_rmse_vs_setpoint,
                    m.max_lateral_deviation,
                    m.max_heading_error,
                    m.imu_wheel_discrepancy_rms,
                    m.jerk_rms,
                    opt(m.stopping_distance),
                    opt(m.max_slip_ratio),
                )
                .unwrap();
            }
            None => {
                out.push_str(&",".repeat(10));
                out.push('\n');
            }
        }
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<u8, CliError> {
    let sweep = SweepGrid::parse(args.axis, &args.range, args.steps)?;
    let mut base = load_scenario(&args.scenario, args.attack.as_deref(), args.seed)?;
    let template = base.attack.take().unwrap_or_default();
    let rows = run_sweep(&base, template, &sweep)?;
    let table = table_csv(sweep.axis, &rows);
    match &args.out {
        Some(p) => write_file(p, table.as_bytes())?,
        None => print!("{table}"),
    }
    let faulted = rows.iter().any(|r| r.state == SessionState::Faulted);
    Ok(if faulted { EXIT_FAULTED } else { EXIT_OK })
}
