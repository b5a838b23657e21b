use std::path::Path;

use serde::Serialize;

use mems_testbed::session::{parse_json_log, MetricsError};
use mems_testbed::{compute_metrics, AttackSuccess, MetricsReport, SessionLog};

use crate::{io_err, write_file, CliError, CompareArgs, EXIT_OK};

/// Attacked-minus-benign difference of each scalar metric, both computed
/// without a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDeltas {
    pub velocity_rmse_vs_setpoint: f64,
    pub max_velocity_est_error: f64,
    pub sustained_velocity_error: f64,
    pub max_lateral_deviation: f64,
    pub max_heading_error: f64,
    pub imu_wheel_discrepancy_rms: f64,
    pub jerk_rms: f64,
    pub stopping_distance: Option<f64>,
    pub max_slip_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Attacked log scored against the benign one.
    pub report: MetricsReport,
    pub deltas: MetricDeltas,
    pub attack_success: AttackSuccess,
}

fn opt_delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

pub fn compare_logs(
    benign: &SessionLog,
    attacked: &SessionLog,
) -> Result<ComparisonReport, CliError> {
    let metric_err = |e: MetricsError| CliError::Invalid(e.to_string());
    let report = compute_metrics(attacked, Some(benign)).map_err(metric_err)?;
    let a = compute_metrics(attacked, None).map_err(metric_err)?;
    let b = compute_metrics(benign, None).map_err(metric_err)?;
    let deltas = MetricDeltas {
        velocity_rmse_vs_setpoint: a.velocity_rmse_vs_setpoint - b.velocity_rmse_vs_setpoint,
        max_velocity_est_error: a.max_velocity_est_error - b.max_velocity_est_error,
        sustained_velocity_error: a.sustained_velocity_error - b.sustained_velocity_error,
        max_lateral_deviation: a.max_lateral_deviation - b.max_lateral_deviation,
        max_heading_error: a.max_heading_error - b.max_heading_error,
        imu_wheel_discrepancy_rms: a.imu_wheel_discrepancy_rms - b.imu_wheel_discrepancy_rms,
        jerk_rms: a.jerk_rms - b.jerk_rms,
        stopping_distance: opt_delta(a.stopping_distance, b.stopping_distance),
        max_slip_ratio: opt_delta(a.max_slip_ratio, b.max_slip_ratio),
    };
    Ok(ComparisonReport {
        attack_success: report.attack_success,
        report,
        deltas,
    })
}

fn load_log(path: &Path) -> Result<SessionLog, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_json_log(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<u8, CliError> {
    let benign = load_log(&args.benign)?;
    let attacked = load_log(&args.attacked)?;
    let report = compare_logs(&benign, &attacked)?;
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    match &args.out {
        Some(p) => write_file(p, &bytes)?,
        None => print!("{}", String::from_utf8(bytes).expect("json is utf-8")),
    }
    Ok(EXIT_OK)
}
