use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacker::AttackConfig;
use crate::control::{ControllerConfig, Setpoints};
use crate::sensors::SensorConfig;
use crate::validation::{ValidationError, Validator};
use crate::vehicle::VehicleParams;

/// Relative tolerance for rate ratios that must be whole numbers.
const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Cruise,
    /// Starts rolling at `v_set` and brakes from `brake.start_t`.
    BrakeTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrakeSettings {
    /// s
    pub start_t: f64,
    /// Driver demand as a fraction of brake capacity.
    pub requested_pressure: f64,
}

impl Default for BrakeSettings {
    fn default() -> Self {
        Self {
            start_t: 0.0,
            requested_pressure: 1.0,
        }
    }
}

/// Thresholds for classifying an attack as effective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessThresholds {
    /// Fraction of `v_set`.
    pub velocity_error_fraction: f64,
    /// s
    pub velocity_error_sustain: f64,
    /// m
    pub lateral_deviation: f64,
    /// Ratio to the reference stopping distance.
    pub stopping_distance_ratio: f64,
}

impl Default for SuccessThresholds {
    fn default() -> Self {
        Self {
            velocity_error_fraction: 0.1,
            velocity_error_sustain: 1.0,
            lateral_deviation: 0.5,
            stopping_distance_ratio: 1.1,
        }
    }
}

impl SuccessThresholds {
    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.velocity_error_fraction, "velocity_error_fraction");
        v.non_negative(self.velocity_error_sustain, "velocity_error_sustain");
        v.positive(self.lateral_deviation, "lateral_deviation");
        v.positive(self.stopping_distance_ratio, "stopping_distance_ratio");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Plant step, s.
    pub dt: f64,
    /// s
    pub duration: f64,
    pub vehicle: VehicleParams,
    pub sensors: SensorConfig,
    pub controller: ControllerConfig,
    pub setpoints: Setpoints,
    pub scenario_kind: ScenarioKind,
    pub brake: BrakeSettings,
    pub thresholds: SuccessThresholds,
    pub attack: Option<AttackConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dt: 0.001,
            duration: 30.0,
            vehicle: VehicleParams::default(),
            sensors: SensorConfig::default(),
            controller: ControllerConfig::default(),
            setpoints: Setpoints::default(),
            scenario_kind: ScenarioKind::Cruise,
            brake: BrakeSettings::default(),
            thresholds: SuccessThresholds::default(),
            attack: None,
        }
    }
}

/// Whole-number ratio, if `x` is one.
fn whole(x: f64) -> Option<u64> {
    let r = x.round();
    (x.is_finite() && r >= 1.0 && (x - r).abs() <= RATIO_TOLERANCE * r).then_some(r as u64)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut v = Validator::new();
        v.positive(self.dt, "dt");
        v.positive(self.duration, "duration");
        v.nested("vehicle", |v| self.vehicle.validate(v));
        v.nested("sensors", |v| self.sensors.validate(v));
        v.nested("controller", |v| self.controller.validate(v));
        v.nested("setpoints", |v| self.setpoints.validate(v));
        v.nested("brake", |v| {
            v.non_negative(self.brake.start_t, "start_t");
            v.in_range(
                self.brake.requested_pressure,
                0.0,
                1.0,
                "requested_pressure",
            );
        });
        v.nested("thresholds", |v| self.thresholds.validate(v));
        if let Some(a) = &self.attack {
            v.nested("attack", |v| a.validate(v));
        }

        let fs = self.sensors.mems.sample_rate;
        let enc = self.sensors.encoder.sample_rate;
        if self.dt > 0.0
            && fs > 0.0
            && self.dt.is_finite()
            && fs.is_finite()
            && whole(1.0 / (fs * self.dt)).is_none()
        {
            v.fail(
                "dt",
                format!("control period 1/sample_rate must be a whole number of plant steps (sample_rate {fs} Hz, dt {})", self.dt),
            );
        }
        if fs > 0.0 && enc > 0.0 && fs.is_finite() && enc.is_finite() && whole(fs / enc).is_none() {
            v.fail(
                "sensors.encoder.sample_rate",
                format!("must divide the IMU sample rate {fs} Hz"),
            );
        }
        v.finish()
    }

    /// Plant steps per control tick. Only meaningful on a valid config.
    pub fn substeps(&self) -> u64 {
        whole(1.0 / (self.sensors.mems.sample_rate * self.dt)).unwrap_or(1)
    }

    /// Control ticks per encoder sample.
    pub fn encoder_ratio(&self) -> u64 {
        whole(self.sensors.mems.sample_rate / self.sensors.encoder.sample_rate).unwrap_or(1)
    }

    /// Index of the last record.
    pub fn last_index(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }

    pub fn record_count(&self) -> u64 {
        self.last_index() + 1
    }

    /// Time of record `i`, computed from the index so it never accumulates
    /// rounding.
    pub fn record_time(&self, i: u64) -> f64 {
        i as f64 / (self.sensors.mems.sample_rate * self.substeps() as f64)
    }

    pub fn without_attack(&self) -> Self {
        Self {
            attack: None,
            ..self.clone()
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(c.substeps(), 1);
        assert_eq!(c.encoder_ratio(), 20);
        assert_eq!(c.record_count(), 30_001);
        assert_eq!(c.record_time(1500), 1.5);
    }

    #[test]
    fn zero_dt_named() {
        let c = ScenarioConfig {
            dt: 0.0,
            ..ScenarioConfig::default()
        };
        let err = c.validate().unwrap_err();
        assert!(err.mentions("dt"), "{err}");
    }

    #[test]
    fn every_violation_listed() {
        let mut c = ScenarioConfig {
            duration: -1.0,
            ..ScenarioConfig::default()
        };
        c.vehicle.wheel_radius = 0.0;
        c.sensors.mems.q_factor = 0.1;
        c.attack = Some(AttackConfig {
            spl_at_source: 200.0,
            ..AttackConfig::default()
        });
        let err = c.validate().unwrap_err();
        for f in [
            "duration",
            "vehicle.wheel_radius",
            "sensors.mems.q_factor",
            "attack.spl_at_source",
        ] {
            assert!(err.mentions(f), "{f} missing: {err}");
        }
    }

    #[test]
    fn rate_ratios_must_be_whole() {
        let mut c = ScenarioConfig::default();
        c.sensors.mems.sample_rate = 300.0;
        assert!(c.validate().unwrap_err().mentions("dt"));
        let mut c = ScenarioConfig::default();
        c.sensors.encoder.sample_rate = 30.0;
        assert!(c
            .validate()
            .unwrap_err()
            .mentions("sensors.encoder.sample_rate"));
        let mut c = ScenarioConfig::default();
        c.sensors.mems.sample_rate = 100.0;
        c.validate().unwrap();
        assert_eq!(c.substeps(), 10);
        assert_eq!(c.encoder_ratio(), 2);
        assert_eq!(c.record_time(25), 0.025);
    }

    #[test]
    fn unknown_fields_rejected_and_defaults_filled() {
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"seed": 7, "setpoints": {"v_set": 5}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.setpoints.v_set, 5.0);
        assert_eq!(c.dt, 0.001);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
