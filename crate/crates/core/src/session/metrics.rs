use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, ScenarioKind};
use super::log::{SessionLog, TickRecord};
use crate::vehicle::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackSuccess {
    NoAttack,
    Ineffective,
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub velocity_rmse_vs_setpoint: f64,
    /// Relative to the reference's own estimate error when one is given.
    pub max_velocity_est_error: f64,
    /// Longest stretch with the velocity error above the success threshold, s.
    pub sustained_velocity_error: f64,
    pub max_lateral_deviation: f64,
    pub max_heading_error: f64,
    pub imu_wheel_discrepancy_rms: f64,
    pub jerk_rms: f64,
    pub stopping_distance: Option<f64>,
    pub reference_stopping_distance: Option<f64>,
    /// Largest true slip ratio while braking above the ABS cut-off speed.
    pub max_slip_ratio: Option<f64>,
    pub attack_success: AttackSuccess,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("log has no records")]
    EmptyLog,
    #[error("reference does not match: {0}")]
    ReferenceMismatch(String),
}

/// Upper bound for the benign IMU/wheel discrepancy RMS with fusion on:
/// three times the blended encoder quantization error (triangular, so
/// std q/√6) plus one step of accelerometer noise.
pub fn discrepancy_envelope(config: &ScenarioConfig) -> f64 {
    let q_v = config
        .sensors
        .encoder
        .speed_quantum(config.vehicle.wheel_radius);
    let alpha = config.controller.fusion.alpha;
    let dt_control = 1.0 / config.sensors.mems.sample_rate;
    3.0 * (alpha * q_v / 6f64.sqrt() + config.sensors.mems.noise_std_accel * dt_control)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn est_error(r: &TickRecord) -> f64 {
    r.v_est - r.state.v
}

/// Distance from `p` to segment `a`–`b`, optionally extended past either end.
fn segment_distance(
    p: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
    open_start: bool,
    open_end: bool,
) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let mut u = if len2 > 0.0 {
        ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2
    } else {
        0.0
    };
    if !open_start {
        u = u.max(0.0);
    }
    if !open_end {
        u = u.min(1.0);
    }
    let (cx, cy) = (a.0 + u * dx, a.1 + u * dy);
    (p.0 - cx).hypot(p.1 - cy)
}

/// Largest distance from any point of `path` to the polyline `reference`.
/// Both paths are traversed forward together, so each query only scans a
/// window of reference segments ahead of the last match.
fn max_distance_to_path(path: &[(f64, f64)], reference: &[(f64, f64)]) -> f64 {
    const WINDOW: usize = 400;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(reference.len());
    for &p in reference {
        match pts.last() {
            Some(&q) if (p.0 - q.0).hypot(p.1 - q.1) < 1e-12 => {}
            _ => pts.push(p),
        }
    }
    if pts.len() == 1 {
        let c = pts[0];
        return path
            .iter()
            .map(|p| (p.0 - c.0).hypot(p.1 - c.1))
            .fold(0.0, f64::max);
    }
    let segments = pts.len() - 1;
    let mut cursor = 0usize;
    let mut worst = 0.0f64;
    for &p in path {
        let end = (cursor + WINDOW).min(segments);
        let mut best = f64::INFINITY;
        let mut best_seg = cursor;
        for s in cursor..end {
            let d = segment_distance(p, pts[s], pts[s + 1], s == 0, s + 1 == segments);
            if d < best {
                best = d;
                best_seg = s;
            }
        }
        cursor = best_seg;
        worst = worst.max(best);
    }
    worst
}

fn brake_onset(log: &SessionLog) -> Option<usize> {
    (log.config.scenario_kind == ScenarioKind::BrakeTest)
        .then(|| {
            log.records
                .iter()
                .position(|r| r.t >= log.config.brake.start_t)
        })
        .flatten()
}

/// Path length from brake onset until the vehicle first stands still (or
/// the log ends).
fn stopping_distance(log: &SessionLog) -> Option<f64> {
    let start = brake_onset(log)?;
    let mut dist = 0.0;
    for w in log.records[start..].windows(2) {
        dist += (w[1].state.x - w[0].state.x).hypot(w[1].state.y - w[0].state.y);
        if w[1].state.v == 0.0 {
            break;
        }
    }
    Some(dist)
}

fn max_slip(log: &SessionLog) -> Option<f64> {
    let start = brake_onset(log)?;
    let min_speed = log.config.controller.abs.min_speed;
    Some(
        log.records[start..]
            .iter()
            .filter(|r| r.state.v > min_speed)
            .map(|r| r.state.slip_ratio(&log.config.vehicle))
            .fold(0.0, f64::max),
    )
}

fn check_reference(log: &SessionLog, reference: &SessionLog) -> Result<(), MetricsError> {
    if log.seed != reference.seed {
        return Err(MetricsError::ReferenceMismatch(format!(
            "seed {} vs {}",
            log.seed, reference.seed
        )));
    }
    if log.config.without_attack() != reference.config.without_attack() {
        return Err(MetricsError::ReferenceMismatch(
            "configurations differ in more than the attack".into(),
        ));
    }
    if reference.records.is_empty() {
        return Err(MetricsError::ReferenceMismatch(
            "reference has no records".into(),
        ));
    }
    Ok(())
}

/// Quantifies a run and, if it carries an attack, classifies the outcome.
/// Against a benign reference (same config minus attack, same seed) the
/// shared noise and drift cancel out of the deviation metrics.
pub fn compute_metrics(
    log: &SessionLog,
    reference: Option<&SessionLog>,
) -> Result<MetricsReport, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    if let Some(r) = reference {
        check_reference(log, r)?;
    }
    let cfg = &log.config;
    let recs = &log.records;
    let v_set = cfg.setpoints.v_set;
    let dt = cfg.dt;

    let velocity_rmse_vs_setpoint = rms(recs.iter().map(|r| r.state.v - v_set));

    let est_errors: Vec<f64> = match reference {
        Some(reference) => recs
            .iter()
            .zip(&reference.records)
            .map(|(a, b)| est_error(a) - est_error(b))
            .collect(),
        None => recs.iter().map(est_error).collect(),
    };
    let max_velocity_est_error = est_errors.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let threshold = cfg.thresholds.velocity_error_fraction * v_set;
    let mut longest = 0usize;
    let mut run = 0usize;
    for e in &est_errors {
        if e.abs() > threshold {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let sustained_velocity_error = longest as f64 * dt;

    let path: Vec<(f64, f64)> = recs.iter().map(|r| (r.state.x, r.state.y)).collect();
    let (max_lateral_deviation, max_heading_error) = match reference {
        Some(reference) => {
            let ref_path: Vec<(f64, f64)> = reference
                .records
                .iter()
                .map(|r| (r.state.x, r.state.y))
                .collect();
            let heading = recs
                .iter()
                .zip(&reference.records)
                .map(|(a, b)| wrap_angle(a.state.heading - b.state.heading).abs())
                .fold(0.0, f64::max);
            (max_distance_to_path(&path, &ref_path), heading)
        }
        None => {
            let (x0, y0) = path[0];
            let h = cfg.setpoints.heading_set;
            let (s, c) = h.sin_cos();
            let lateral = path
                .iter()
                .map(|&(x, y)| (-s * (x - x0) + c * (y - y0)).abs())
                .fold(0.0, f64::max);
            let heading = recs
                .iter()
                .map(|r| wrap_angle(r.state.heading - h).abs())
                .fold(0.0, f64::max);
            (lateral, heading)
        }
    };

    let imu_wheel_discrepancy_rms = rms(recs
        .iter()
        .map(|r| r.diagnostics.v_pred - r.state.wheel_surface_speed(&cfg.vehicle)));
    let jerk_rms = rms(recs
        .windows(2)
        .map(|w| (w[1].state.a_long - w[0].state.a_long) / dt));

    let stopping = stopping_distance(log);
    let reference_stopping = reference.and_then(stopping_distance);
    let max_slip_ratio = max_slip(log);

    let attack_success = if !log.has_attack() {
        AttackSuccess::NoAttack
    } else {
        let t = &cfg.thresholds;
        let velocity = sustained_velocity_error + 1e-9 >= t.velocity_error_sustain && longest > 0;
        let lateral = max_lateral_deviation > t.lateral_deviation;
        let braking = matches!(
            (stopping, reference_stopping),
            (Some(s), Some(r)) if s > t.stopping_distance_ratio * r
        );
        if velocity || lateral || braking {
            AttackSuccess::Effective
        } else {
            AttackSuccess::Ineffective
        }
    };

    Ok(MetricsReport {
        velocity_rmse_vs_setpoint,
        max_velocity_est_error,
        sustained_velocity_error,
        max_lateral_deviation,
        max_heading_error,
        imu_wheel_discrepancy_rms,
        jerk_rms,
        stopping_distance: stopping,
        reference_stopping_distance: reference_stopping,
        max_slip_ratio,
        attack_success,
    })
}
