use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::attacker::AttackConfig;
use crate::control::{Commands, Diagnostics};
use crate::sensors::{ImuSample, WheelSample};
use crate::vehicle::VehicleState;

pub const CSV_HEADER: &str =
    "t,x,y,heading,v_true,v_est,v_wheel,ax_imu,gyro_z,cmd_a,cmd_yaw,brake,pressure";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub state: VehicleState,
    /// Latest IMU sample (held between control ticks).
    pub imu: ImuSample,
    /// Latest encoder sample (held between encoder samples).
    pub wheel: WheelSample,
    pub v_est: f64,
    pub commands: Commands,
    /// Acoustic pressure at the sensor, Pa.
    pub pressure: f64,
    pub diagnostics: Diagnostics,
}

impl TickRecord {
    pub fn is_finite(&self) -> bool {
        self.state.is_finite()
            && self.imu.accel.iter().all(|a| a.is_finite())
            && self.imu.gyro_z.is_finite()
            && self.v_est.is_finite()
            && self.commands.a_long.is_finite()
            && self.commands.yaw_rate.is_finite()
            && self.commands.brake.is_finite()
            && self.pressure.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    /// `attack` is active from record `index` on; `start_t` is resolved.
    AttackApplied { index: u64, attack: AttackConfig },
}

impl SessionEvent {
    pub fn index(&self) -> u64 {
        match self {
            SessionEvent::AttackApplied { index, .. } => *index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub events: Vec<SessionEvent>,
    pub records: Vec<TickRecord>,
}

impl SessionLog {
    pub fn new(config: ScenarioConfig) -> Self {
        Self {
            seed: config.seed,
            config,
            events: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Whether any acoustic attack was scheduled, statically or live.
    pub fn has_attack(&self) -> bool {
        self.config.attack.is_some() || !self.events.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() as u64 == self.config.record_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    Csv,
    Json,
}

impl LogFormat {
    pub fn extension(self) -> &'static str {
        match self {
            LogFormat::Csv => "csv",
            LogFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown log format {0:?} (expected csv or json)")]
pub struct UnknownFormat(pub String);

impl FromStr for LogFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(LogFormat::Csv),
            "json" => Ok(LogFormat::Json),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

/// Serialises a log. Floats are written in shortest round-trip form.
pub fn export_log(log: &SessionLog, format: LogFormat) -> Vec<u8> {
    match format {
        LogFormat::Csv => export_csv(log).into_bytes(),
        LogFormat::Json => serde_json::to_vec(log).expect("finite log serializes"),
    }
}

fn export_csv(log: &SessionLog) -> String {
    let mut out = String::with_capacity(64 + log.records.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.records {
        let fields = [
            r.t,
            r.state.x,
            r.state.y,
            r.state.heading,
            r.state.v,
            r.v_est,
            r.diagnostics.v_wheel,
            r.imu.accel[0],
            r.imu.gyro_z,
            r.commands.a_long,
            r.commands.yaw_rate,
            r.commands.brake,
            r.pressure,
        ];
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{f}").expect("string write");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("cannot parse session log: {0}")]
pub struct ParseLogError(#[from] serde_json::Error);

pub fn parse_json_log(bytes: &[u8]) -> Result<SessionLog, ParseLogError> {
    Ok(serde_json::from_slice(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_is_header_only() {
        let log = SessionLog::new(ScenarioConfig::default());
        let csv = String::from_utf8(export_log(&log, LogFormat::Csv)).unwrap();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<LogFormat>(), Ok(LogFormat::Csv));
        assert_eq!("json".parse::<LogFormat>(), Ok(LogFormat::Json));
        assert!("xml".parse::<LogFormat>().is_err());
    }

    #[test]
    fn event_serialization_is_tagged() {
        let e = SessionEvent::AttackApplied {
            index: 3,
            attack: AttackConfig::default().starting_at(0.003),
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(
            s.starts_with(r#"{"kind":"attack_applied","index":3"#),
            "{s}"
        );
        assert_eq!(serde_json::from_str::<SessionEvent>(&s).unwrap(), e);
    }
}
