//! Acoustic attacker: source level, placement, burst gating and carrier design.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::sensors::{alias_frequency, AcousticSignal};
use crate::validation::{ValidationError, Validator};

/// Reference pressure for SPL, Pa.
pub const SPL_REFERENCE_PA: f64 = 20e-6;
/// Distance at which the source SPL is specified, m.
pub const REFERENCE_DISTANCE: f64 = 1.0;
pub const MIN_DISTANCE: f64 = 0.1;
pub const SPL_MIN: f64 = 40.0;
pub const SPL_MAX: f64 = 140.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerType {
    /// Speaker mounted on the chassis; no propagation loss.
    #[default]
    Internal,
    /// Free-field source at `distance`.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub attacker_type: AttackerType,
    /// Hz
    pub carrier_freq: f64,
    /// dB re 20 µPa at 1 m.
    pub spl_at_source: f64,
    /// m, external attackers only.
    pub distance: f64,
    /// Bursts per second; 0 is continuous.
    pub trigger_rate: f64,
    /// Active fraction of each burst period.
    pub duty: f64,
    /// s; `None` starts at the next tick when applied to a live session.
    pub start_t: Option<f64>,
    /// s; `None` runs until the end of the session.
    pub duration: Option<f64>,
    /// rad, carrier phase at `start_t`.
    pub phase: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            attacker_type: AttackerType::Internal,
            carrier_freq: 5000.0,
            spl_at_source: 110.0,
            distance: REFERENCE_DISTANCE,
            trigger_rate: 0.0,
            duty: 0.5,
            start_t: None,
            duration: None,
            phase: PI / 2.0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.carrier_freq, "carrier_freq");
        v.in_range(self.spl_at_source, SPL_MIN, SPL_MAX, "spl_at_source");
        if self.attacker_type == AttackerType::External
            && v.finite(self.distance, "distance")
            && self.distance < MIN_DISTANCE
        {
            v.fail("distance", format!("must be >= {MIN_DISTANCE} m"));
        }
        v.non_negative(self.trigger_rate, "trigger_rate");
        if v.finite(self.duty, "duty") && !(self.duty > 0.0 && self.duty <= 1.0) {
            v.fail("duty", format!("must be in (0, 1] (got {})", self.duty));
        }
        if let Some(start) = self.start_t {
            v.non_negative(start, "start_t");
        }
        if let Some(d) = self.duration {
            // +inf is allowed and means the same as None
            if d.is_nan() || d < 0.0 {
                v.fail("duration", "must be >= 0");
            }
        }
        v.finite(self.phase, "phase");
    }

    pub fn check(&self) -> Result<(), ValidationError> {
        let mut v = Validator::new();
        self.validate(&mut v);
        v.finish()
    }

    /// Peak pressure at the sensor, Pa.
    pub fn pressure_amplitude(&self) -> Result<f64, ValidationError> {
        self.check()?;
        Ok(self.amplitude_unchecked())
    }

    fn amplitude_unchecked(&self) -> f64 {
        let at_source = SPL_REFERENCE_PA * 10f64.powf(self.spl_at_source / 20.0);
        match self.attacker_type {
            AttackerType::Internal => at_source,
            AttackerType::External => {
                at_source * REFERENCE_DISTANCE / self.distance.max(MIN_DISTANCE)
            }
        }
    }

    pub fn start(&self) -> f64 {
        self.start_t.unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.start() + self.duration.unwrap_or(f64::INFINITY)
    }

    /// Burst gate at `tau` seconds after the start.
    pub fn gate_open(&self, tau: f64) -> bool {
        if self.trigger_rate == 0.0 {
            return true;
        }
        frac(tau * self.trigger_rate) < self.duty
    }

    /// Pressure at the sensor at absolute time `t`, assuming a valid config.
    pub fn pressure_at(&self, t: f64) -> f64 {
        let start = self.start();
        if t < start || t > self.end() {
            return 0.0;
        }
        let tau = t - start;
        if !self.gate_open(tau) {
            return 0.0;
        }
        // Reducing the cycle count first keeps the phase exact for large t.
        let cycles = frac(self.carrier_freq * tau);
        self.amplitude_unchecked() * (2.0 * PI * cycles + self.phase).sin()
    }

    /// Same as this config with the start resolved.
    pub fn starting_at(mut self, t: f64) -> Self {
        self.start_t = Some(t);
        self
    }

    pub fn summary(&self) -> String {
        let kind = match self.attacker_type {
            AttackerType::Internal => "internal".to_string(),
            AttackerType::External => format!("external@{}m", self.distance),
        };
        format!(
            "{kind} {} Hz {} dB rate {} duty {}",
            self.carrier_freq, self.spl_at_source, self.trigger_rate, self.duty
        )
    }
}

impl AcousticSignal for AttackConfig {
    fn carrier_hz(&self) -> f64 {
        self.carrier_freq
    }

    fn pressure_at(&self, t: f64) -> f64 {
        AttackConfig::pressure_at(self, t)
    }
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("sample rate must be positive and finite (got {0})")]
    SampleRate(f64),
    #[error("resonance must be positive and finite (got {0})")]
    Resonance(f64),
    #[error("desired alias {alias} Hz outside [0, {nyquist}] Hz")]
    AliasOutOfBand { alias: f64, nyquist: f64 },
}

/// Carrier nearest `f_res` whose sampled image sits at `desired_alias`.
/// Ties go to the lower frequency.
pub fn design_attack_frequency(
    sample_rate: f64,
    f_res: f64,
    desired_alias: f64,
) -> Result<f64, DesignError> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(DesignError::SampleRate(sample_rate));
    }
    if !(f_res.is_finite() && f_res > 0.0) {
        return Err(DesignError::Resonance(f_res));
    }
    let nyquist = sample_rate / 2.0;
    if !(0.0..=nyquist).contains(&desired_alias) {
        return Err(DesignError::AliasOutOfBand {
            alias: desired_alias,
            nyquist,
        });
    }
    let n_max = (f_res / sample_rate).ceil() as u64 + 2;
    let mut best: Option<f64> = None;
    for n in 1..=n_max {
        let base = n as f64 * sample_rate;
        for f in [base - desired_alias, base + desired_alias] {
            if f <= 0.0 || alias_frequency(f, sample_rate) != desired_alias {
                continue;
            }
            best = match best {
                None => Some(f),
                Some(b) => {
                    let (db, df) = ((b - f_res).abs(), (f - f_res).abs());
                    if df < db || (df == db && f < b) {
                        Some(f)
                    } else {
                        Some(b)
                    }
                }
            };
        }
    }
    // Only reachable when rounding rejects every candidate; fall back to the
    // plain nearest multiple image.
    Ok(best.unwrap_or((f_res / sample_rate).round().max(1.0) * sample_rate + desired_alias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn internal(spl: f64) -> AttackConfig {
        AttackConfig {
            spl_at_source: spl,
            ..AttackConfig::default()
        }
    }

    #[test]
    fn amplitude_examples() {
        let p = internal(94.0).pressure_amplitude().unwrap();
        assert!((p - 1.0024).abs() < 1e-4, "{p}");
        let ext = AttackConfig {
            attacker_type: AttackerType::External,
            distance: 2.0,
            ..internal(94.0)
        };
        let q = ext.pressure_amplitude().unwrap();
        assert!((q - 0.5012).abs() < 1e-4, "{q}");
        let err = internal(0.0).pressure_amplitude().unwrap_err();
        assert!(err.mentions("spl_at_source"));
    }

    #[test]
    fn internal_ignores_distance() {
        let a = AttackConfig {
            distance: 0.0,
            ..internal(100.0)
        };
        assert!(a.check().is_ok());
        assert_eq!(
            a.pressure_amplitude().unwrap(),
            internal(100.0).pressure_amplitude().unwrap()
        );
    }

    #[test]
    fn invalid_fields_all_reported() {
        let bad = AttackConfig {
            attacker_type: AttackerType::External,
            carrier_freq: -1.0,
            spl_at_source: 200.0,
            distance: 0.05,
            trigger_rate: -2.0,
            duty: 0.0,
            ..AttackConfig::default()
        };
        let err = bad.check().unwrap_err();
        for f in [
            "carrier_freq",
            "spl_at_source",
            "distance",
            "trigger_rate",
            "duty",
        ] {
            assert!(err.mentions(f), "{f} missing from {err}");
        }
    }

    #[test]
    fn pressure_examples() {
        let a = AttackConfig {
            carrier_freq: 5000.0,
            spl_at_source: 93.979_400_086_720_37, // 1 Pa
            duty: 1.0,
            phase: 0.0,
            start_t: Some(3.0),
            ..AttackConfig::default()
        };
        assert_eq!(a.pressure_at(2.999), 0.0);
        let p = a.pressure_at(3.0 + 1.0 / 20_000.0);
        assert!((p - 1.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn burst_gating_grid() {
        let a = AttackConfig {
            trigger_rate: 2.0,
            duty: 0.5,
            carrier_freq: 1000.0,
            phase: PI / 2.0,
            start_t: Some(0.0),
            ..AttackConfig::default()
        };
        let active: Vec<bool> = [0.1, 0.3, 0.6, 0.8]
            .iter()
            .map(|&t| a.pressure_at(t) != 0.0)
            .collect();
        assert_eq!(active, vec![true, false, true, false]);
    }

    #[test]
    fn finite_duration_window() {
        let a = AttackConfig {
            start_t: Some(1.0),
            duration: Some(0.5),
            ..AttackConfig::default()
        };
        assert_eq!(a.pressure_at(1.6), 0.0);
        assert_ne!(a.pressure_at(1.2), 0.0);
        let forever = AttackConfig {
            duration: Some(f64::INFINITY),
            ..a
        };
        assert!(forever.check().is_ok());
        assert_ne!(forever.pressure_at(1e6), 0.0);
    }

    #[test]
    fn design_examples() {
        assert_eq!(design_attack_frequency(1000.0, 5200.0, 0.0), Ok(5000.0));
        assert_eq!(design_attack_frequency(1000.0, 5200.0, 50.0), Ok(5050.0));
        assert_eq!(design_attack_frequency(1000.0, 5500.0, 0.0), Ok(5000.0));
        assert!(matches!(
            design_attack_frequency(1000.0, 5200.0, 600.0),
            Err(DesignError::AliasOutOfBand { .. })
        ));
    }

    proptest! {
        #[test]
        fn pressure_bounded_by_amplitude(
            spl in 40.0f64..140.0,
            f in 1.0f64..20_000.0,
            rate in 0.0f64..50.0,
            duty in 0.01f64..1.0,
            t in 0.0f64..100.0,
        ) {
            let a = AttackConfig { spl_at_source: spl, carrier_freq: f, trigger_rate: rate, duty, start_t: Some(0.0), ..AttackConfig::default() };
            let amp = a.pressure_amplitude().unwrap();
            prop_assert!(a.pressure_at(t).abs() <= amp);
        }

        #[test]
        fn zero_when_gate_closed(rate in 0.5f64..50.0, duty in 0.01f64..0.99, t in 0.0f64..100.0) {
            let a = AttackConfig { trigger_rate: rate, duty, start_t: Some(0.0), ..AttackConfig::default() };
            if !a.gate_open(t) {
                prop_assert_eq!(a.pressure_at(t), 0.0);
            }
        }

        #[test]
        fn doubling_distance_halves_amplitude(spl in 40.0f64..140.0, d in 0.1f64..100.0) {
            let near = AttackConfig { attacker_type: AttackerType::External, distance: d, spl_at_source: spl, ..AttackConfig::default() };
            let far = AttackConfig { distance: 2.0 * d, ..near };
            let (pn, pf) = (near.pressure_amplitude().unwrap(), far.pressure_amplitude().unwrap());
            prop_assert!((pn / 2.0 - pf).abs() <= 1e-12 * pn.max(1.0));
        }

        // Dyadic rates and aliases keep every candidate exactly representable.
        #[test]
        fn design_alias_round_trip(
            fs_units in 1u32..4096,
            f_res in 1.0f64..50_000.0,
            alias_frac in 0u32..=1024,
        ) {
            let fs = fs_units as f64 * 0.5;
            let alias = (fs / 2.0) * alias_frac as f64 / 1024.0;
            let f = design_attack_frequency(fs, f_res, alias).unwrap();
            prop_assert_eq!(alias_frequency(f, fs), alias);
        }
    }
}
