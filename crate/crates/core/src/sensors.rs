//! MEMS IMU and wheel-encoder models.
//!
//! The IMU adds a deterministic bias ramp, white noise and an acoustic term
//! shaped by a second-order mechanical resonance. The acoustic pressure is
//! evaluated at the ADC sampling instants only and there is no anti-alias
//! filter, so out-of-band carriers fold into the baseband by themselves.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::validation::Validator;
use crate::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemsParams {
    /// Hz
    pub f_res_accel: f64,
    /// Hz
    pub f_res_gyro: f64,
    pub q_factor: f64,
    /// ADC sampling rate, Hz. The control loop runs at this rate.
    pub sample_rate: f64,
    /// (m/s²)/Pa
    pub coupling_accel: f64,
    /// (rad/s)/Pa
    pub coupling_gyro: f64,
    pub noise_std_accel: f64,
    pub noise_std_gyro: f64,
    /// (m/s²)/s
    pub drift_rate_accel: f64,
    /// Unit vector over (longitudinal, lateral, vertical).
    pub axis_coupling: [f64; 3],
}

impl Default for MemsParams {
    fn default() -> Self {
        Self {
            f_res_accel: 5200.0,
            f_res_gyro: 8100.0,
            q_factor: 20.0,
            sample_rate: 1000.0,
            coupling_accel: 0.005,
            coupling_gyro: 1e-5,
            noise_std_accel: 0.02,
            noise_std_gyro: 0.001,
            drift_rate_accel: 0.01,
            axis_coupling: [1.0, 0.0, 0.0],
        }
    }
}

impl MemsParams {
    /// Noise, drift and coupling all zero.
    pub fn ideal() -> Self {
        Self {
            coupling_accel: 0.0,
            coupling_gyro: 0.0,
            noise_std_accel: 0.0,
            noise_std_gyro: 0.0,
            drift_rate_accel: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.f_res_accel, "f_res_accel");
        v.positive(self.f_res_gyro, "f_res_gyro");
        if v.finite(self.q_factor, "q_factor") && self.q_factor <= 0.5 {
            v.fail("q_factor", "must be > 0.5");
        }
        v.positive(self.sample_rate, "sample_rate");
        v.non_negative(self.coupling_accel, "coupling_accel");
        v.non_negative(self.coupling_gyro, "coupling_gyro");
        v.non_negative(self.noise_std_accel, "noise_std_accel");
        v.non_negative(self.noise_std_gyro, "noise_std_gyro");
        v.non_negative(self.drift_rate_accel, "drift_rate_accel");
        let [a, b, c] = self.axis_coupling;
        if [a, b, c].iter().all(|x| x.is_finite()) {
            let norm = (a * a + b * b + c * c).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                v.fail(
                    "axis_coupling",
                    format!("must be a unit vector (norm {norm})"),
                );
            }
        } else {
            v.fail("axis_coupling", "must be finite");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderParams {
    /// 0 disables quantization.
    pub ticks_per_rev: u32,
    /// Hz; must divide the IMU sample rate.
    pub sample_rate: f64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self {
            ticks_per_rev: 100,
            sample_rate: 50.0,
        }
    }
}

impl EncoderParams {
    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.sample_rate, "sample_rate");
    }

    /// Velocity resolution of one tick per sampling interval, m/s.
    pub fn speed_quantum(&self, wheel_radius: f64) -> f64 {
        if self.ticks_per_rev == 0 {
            0.0
        } else {
            wheel_radius * rate_quantum(self.ticks_per_rev, self.sample_rate)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub mems: MemsParams,
    pub encoder: EncoderParams,
}

impl SensorConfig {
    pub fn validate(&self, v: &mut Validator) {
        v.nested("mems", |v| self.mems.validate(v));
        v.nested("encoder", |v| self.encoder.validate(v));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// (longitudinal, lateral, vertical), m/s²
    pub accel: [f64; 3],
    pub gyro_z: f64,
    /// Acoustic pressure was non-zero at this instant. Diagnostic only.
    pub injected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSample {
    pub t: f64,
    pub omega_left: f64,
    pub omega_right: f64,
    /// Wheel surface speed before quantization.
    pub v_ground_truth: f64,
}

impl WheelSample {
    /// Speed implied by the quantized wheel rates.
    pub fn measured_speed(&self, wheel_radius: f64) -> f64 {
        wheel_radius * (self.omega_left + self.omega_right) / 2.0
    }
}

/// True specific force and yaw rate at the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrueKinematics {
    pub a_long: f64,
    pub a_lat: f64,
    pub yaw_rate: f64,
}

impl TrueKinematics {
    pub fn of(state: &VehicleState) -> Self {
        Self {
            a_long: state.a_long,
            a_lat: state.v * state.yaw_rate,
            yaw_rate: state.yaw_rate,
        }
    }
}

/// Acoustic pressure at the sensor package.
pub trait AcousticSignal {
    /// Carrier frequency, Hz. Used for the resonance gain.
    fn carrier_hz(&self) -> f64;
    /// Instantaneous pressure, Pa.
    fn pressure_at(&self, t: f64) -> f64;
}

/// No acoustic excitation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silence;

impl AcousticSignal for Silence {
    fn carrier_hz(&self) -> f64 {
        0.0
    }

    fn pressure_at(&self, _t: f64) -> f64 {
        0.0
    }
}

impl<S: AcousticSignal> AcousticSignal for Option<S> {
    fn carrier_hz(&self) -> f64 {
        self.as_ref().map_or(0.0, |s| s.carrier_hz())
    }

    fn pressure_at(&self, t: f64) -> f64 {
        self.as_ref().map_or(0.0, |s| s.pressure_at(t))
    }
}

impl<S: AcousticSignal + ?Sized> AcousticSignal for &S {
    fn carrier_hz(&self) -> f64 {
        (**self).carrier_hz()
    }

    fn pressure_at(&self, t: f64) -> f64 {
        (**self).pressure_at(t)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("acoustic pressure at t={t} is not finite")]
    NonFinitePressure { t: f64 },
}

/// Magnitude of the second-order mechanical response, normalised to 1 at DC.
pub fn resonance_gain(f: f64, f_res: f64, q: f64) -> f64 {
    let r = f / f_res;
    let detune = 1.0 - r * r;
    1.0 / (detune * detune + (r / q) * (r / q)).sqrt()
}

/// Apparent frequency of `f` after sampling at `sample_rate`, in
/// `[0, sample_rate/2]`.
pub fn alias_frequency(f: f64, sample_rate: f64) -> f64 {
    (f - sample_rate * (f / sample_rate).round()).abs()
}

/// Noise channels. Each has its own ChaCha stream derived from the session
/// seed, so adding a channel never shifts the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum NoiseChannel {
    AccelLong = 0,
    AccelLat = 1,
    AccelVert = 2,
    GyroZ = 3,
}

#[derive(Debug, Clone)]
pub struct SensorRng {
    streams: [ChaCha8Rng; 4],
}

impl SensorRng {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |ch: NoiseChannel| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ch as u64);
            rng
        };
        Self {
            streams: [
                stream(NoiseChannel::AccelLong),
                stream(NoiseChannel::AccelLat),
                stream(NoiseChannel::AccelVert),
                stream(NoiseChannel::GyroZ),
            ],
        }
    }

    pub fn standard_normal(&mut self, channel: NoiseChannel) -> f64 {
        self.streams[channel as usize].sample(StandardNormal)
    }
}

pub fn sample_time(k: u64, sample_rate: f64) -> f64 {
    k as f64 / sample_rate
}

/// Produces the `k`-th IMU sample. One normal draw is taken per channel
/// whether or not the noise level is zero.
pub fn sample_imu<S: AcousticSignal>(
    kin: TrueKinematics,
    signal: &S,
    params: &MemsParams,
    k: u64,
    rng: &mut SensorRng,
) -> Result<ImuSample, SensorError> {
    let t = sample_time(k, params.sample_rate);
    let pressure = signal.pressure_at(t);
    if !pressure.is_finite() {
        return Err(SensorError::NonFinitePressure { t });
    }
    let carrier = signal.carrier_hz();
    let bias = params.drift_rate_accel * t;

    let accel_injection = if pressure == 0.0 {
        0.0
    } else {
        params.coupling_accel
            * resonance_gain(carrier, params.f_res_accel, params.q_factor)
            * pressure
    };
    let gyro_injection = if pressure == 0.0 {
        0.0
    } else {
        params.coupling_gyro
            * resonance_gain(carrier, params.f_res_gyro, params.q_factor)
            * pressure
    };

    let truth = [kin.a_long, kin.a_lat, 0.0];
    let channels = [
        NoiseChannel::AccelLong,
        NoiseChannel::AccelLat,
        NoiseChannel::AccelVert,
    ];
    let mut accel = [0.0; 3];
    for axis in 0..3 {
        let noise = params.noise_std_accel * rng.standard_normal(channels[axis]);
        accel[axis] = truth[axis] + bias + noise + accel_injection * params.axis_coupling[axis];
    }
    let gyro_noise = params.noise_std_gyro * rng.standard_normal(NoiseChannel::GyroZ);
    Ok(ImuSample {
        t,
        accel,
        gyro_z: kin.yaw_rate + gyro_noise + gyro_injection,
        injected: pressure != 0.0,
    })
}

/// Angular-rate resolution of one tick per interval, rad/s.
pub fn rate_quantum(ticks_per_rev: u32, sample_rate: f64) -> f64 {
    2.0 * PI / ticks_per_rev as f64 * sample_rate
}

/// Whole ticks passed since angle zero.
pub fn tick_count(angle: f64, ticks_per_rev: u32) -> i64 {
    (angle * ticks_per_rev as f64 / (2.0 * PI)).floor() as i64
}

/// Tick counters latched at the previous encoder sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncoderCounts {
    pub left: i64,
    pub right: i64,
}

/// Encoder sample `k`. With `previous` counts the rate is the number of whole
/// ticks in the last interval; without (the first sample) the instantaneous
/// rate is floored to a whole quantum.
pub fn sample_wheels(
    state: &VehicleState,
    previous: Option<EncoderCounts>,
    encoder: &EncoderParams,
    vehicle: &VehicleParams,
    k: u64,
) -> (WheelSample, EncoderCounts) {
    let t = sample_time(k, encoder.sample_rate);
    let v_ground_truth = state.wheel_surface_speed(vehicle);
    let n = encoder.ticks_per_rev;
    if n == 0 {
        let sample = WheelSample {
            t,
            omega_left: state.omega_wheel_left,
            omega_right: state.omega_wheel_right,
            v_ground_truth,
        };
        return (sample, EncoderCounts::default());
    }
    let counts = EncoderCounts {
        left: tick_count(state.wheel_angle_left, n),
        right: tick_count(state.wheel_angle_right, n),
    };
    let q = rate_quantum(n, encoder.sample_rate);
    let (omega_left, omega_right) = match previous {
        Some(prev) => (
            (counts.left - prev.left) as f64 * q,
            (counts.right - prev.right) as f64 * q,
        ),
        None => (
            (state.omega_wheel_left / q).floor() * q,
            (state.omega_wheel_right / q).floor() * q,
        ),
    };
    let sample = WheelSample {
        t,
        omega_left,
        omega_right,
        v_ground_truth,
    };
    (sample, counts)
}

/// Stateful wrapper around [`sample_wheels`].
#[derive(Debug, Clone)]
pub struct WheelEncoder {
    params: EncoderParams,
    previous: Option<EncoderCounts>,
    next_index: u64,
}

impl WheelEncoder {
    pub fn new(params: EncoderParams) -> Self {
        Self {
            params,
            previous: None,
            next_index: 0,
        }
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn sample(&mut self, state: &VehicleState, vehicle: &VehicleParams) -> WheelSample {
        let (sample, counts) =
            sample_wheels(state, self.previous, &self.params, vehicle, self.next_index);
        self.previous = Some(counts);
        self.next_index += 1;
        sample
    }
}

/// Open-loop dead reckoning of longitudinal speed.
pub fn integrate_imu_velocity(prev_v_est: f64, accel_long: f64, dt: f64) -> f64 {
    prev_v_est + accel_long * dt
}
