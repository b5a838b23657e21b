//! Victim controller: speed and heading PID loops, complementary velocity
//! fusion, slip detection and ABS pressure modulation.

use serde::{Deserialize, Serialize};

use crate::sensors::{ImuSample, WheelSample};
use crate::validation::Validator;
use crate::vehicle::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_min: f64,
    pub output_max: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self::speed()
    }
}

impl PidGains {
    /// Speed loop, output in m/s².
    pub fn speed() -> Self {
        Self {
            kp: 1.2,
            ki: 0.3,
            kd: 0.0,
            output_min: -3.0,
            output_max: 3.0,
        }
    }

    /// Heading loop, output in rad/s.
    pub fn heading() -> Self {
        Self {
            kp: 2.0,
            ki: 0.0,
            kd: 0.1,
            output_min: -1.0,
            output_max: 1.0,
        }
    }

    pub fn validate(&self, v: &mut Validator) {
        v.non_negative(self.kp, "kp");
        v.non_negative(self.ki, "ki");
        v.non_negative(self.kd, "kd");
        let lo = v.finite(self.output_min, "output_min");
        let hi = v.finite(self.output_max, "output_max");
        if lo && hi && self.output_min >= self.output_max {
            v.fail("output_min", "must be < output_max");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    /// `None` before the first step; the derivative term is then zero.
    pub prev_error: Option<f64>,
}

/// One PID update on an error value. The integrator only accepts the new
/// error when the unclamped output stays inside the bounds or the error
/// pushes it back towards them; otherwise it stops where the output reaches
/// the bound.
pub fn pid_step_error(gains: &PidGains, state: PidState, error: f64, dt: f64) -> (f64, PidState) {
    let derivative = match state.prev_error {
        Some(prev) if dt > 0.0 => (error - prev) / dt,
        _ => 0.0,
    };
    let candidate = state.integral + error * dt;
    let raw = gains.kp * error + gains.ki * candidate + gains.kd * derivative;
    let accept = (gains.output_min..=gains.output_max).contains(&raw)
        || (raw > gains.output_max && error < 0.0)
        || (raw < gains.output_min && error > 0.0);
    let integral = if accept {
        candidate
    } else {
        // Integrate only up to the point where the output meets the bound.
        let bound = if raw > gains.output_max {
            gains.output_max
        } else {
            gains.output_min
        };
        let at_bound = (bound - gains.kp * error - gains.kd * derivative) / gains.ki;
        let (lo, hi) = if candidate >= state.integral {
            (state.integral, candidate)
        } else {
            (candidate, state.integral)
        };
        if gains.ki > 0.0 && at_bound >= lo && at_bound <= hi {
            at_bound
        } else {
            state.integral
        }
    };
    let output = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let next = PidState {
        integral,
        prev_error: Some(error),
    };
    (output.clamp(gains.output_min, gains.output_max), next)
}

pub fn pid_step(
    gains: &PidGains,
    state: PidState,
    setpoint: f64,
    measurement: f64,
    dt: f64,
) -> (f64, PidState) {
    pid_step_error(gains, state, setpoint - measurement, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Weight on the wheel-speed velocity.
    pub alpha: f64,
    pub slip_threshold: f64,
    pub fusion_enabled: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.98,
            slip_threshold: 0.15,
            fusion_enabled: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self, v: &mut Validator) {
        v.in_range(self.alpha, 0.0, 1.0, "alpha");
        v.non_negative(self.slip_threshold, "slip_threshold");
    }
}

pub fn fuse_velocity(v_imu: f64, v_wheel: f64, cfg: &FusionConfig) -> f64 {
    if cfg.fusion_enabled {
        cfg.alpha * v_wheel + (1.0 - cfg.alpha) * v_imu
    } else {
        v_imu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlipState {
    pub slipping: bool,
    pub slip_ratio: f64,
}

/// Wheels are slipping when they run slower than the inertial estimate by
/// more than the threshold fraction.
pub fn detect_slip(v_est_imu: f64, v_wheel: f64, cfg: &FusionConfig) -> SlipState {
    let slip_ratio = (v_est_imu - v_wheel) / v_est_imu.max(0.1);
    SlipState {
        slipping: slip_ratio > cfg.slip_threshold,
        slip_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbsConfig {
    /// Pressure fraction per second.
    pub apply_rate: f64,
    pub release_rate: f64,
    /// Below this inertial speed the ABS stops releasing, m/s.
    pub min_speed: f64,
}

impl Default for AbsConfig {
    fn default() -> Self {
        Self {
            apply_rate: 2.0,
            release_rate: 4.0,
            min_speed: 1.0,
        }
    }
}

impl AbsConfig {
    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.apply_rate, "apply_rate");
        v.positive(self.release_rate, "release_rate");
        v.non_negative(self.min_speed, "min_speed");
    }
}

/// Rate-limited bang-bang pressure update.
pub fn abs_modulate(current: f64, requested: f64, slipping: bool, dt: f64, cfg: &AbsConfig) -> f64 {
    let next = if slipping {
        current - cfg.release_rate * dt
    } else if current < requested {
        (current + cfg.apply_rate * dt).min(requested)
    } else {
        (current - cfg.apply_rate * dt).max(requested)
    };
    next.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub speed: PidGains,
    pub heading: PidGains,
    pub fusion: FusionConfig,
    pub abs: AbsConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            speed: PidGains::speed(),
            heading: PidGains::heading(),
            fusion: FusionConfig::default(),
            abs: AbsConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self, v: &mut Validator) {
        v.nested("speed", |v| self.speed.validate(v));
        v.nested("heading", |v| self.heading.validate(v));
        v.nested("fusion", |v| self.fusion.validate(v));
        v.nested("abs", |v| self.abs.validate(v));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Setpoints {
    /// m/s
    pub v_set: f64,
    /// rad
    pub heading_set: f64,
}

impl Default for Setpoints {
    fn default() -> Self {
        Self {
            v_set: 13.89,
            heading_set: 0.0,
        }
    }
}

impl Setpoints {
    pub fn validate(&self, v: &mut Validator) {
        v.non_negative(self.v_set, "v_set");
        v.finite(self.heading_set, "heading_set");
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Cruise,
    /// Driver brake demand in [0, 1], modulated by the ABS.
    Braking {
        requested: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Commands {
    /// m/s²
    pub a_long: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// Brake pressure fraction.
    pub brake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Dead-reckoned speed from the accelerometer alone.
    pub v_imu: f64,
    /// One-step inertial prediction that was blended with the wheel speed.
    pub v_pred: f64,
    /// Latest measured wheel speed.
    pub v_wheel: f64,
    pub heading_est: f64,
    pub heading_error: f64,
    pub slip_ratio: f64,
    pub slipping: bool,
    pub missing_sample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub speed_pid: PidState,
    pub heading_pid: PidState,
    /// Speed estimate fed to the speed loop.
    pub v_est: f64,
    pub v_imu: f64,
    pub v_wheel: f64,
    pub heading_est: f64,
    pub brake_pressure: f64,
    pub braking_engaged: bool,
    pub last: Commands,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickOutput {
    pub commands: Commands,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    config: ControllerConfig,
    wheel_radius: f64,
    state: ControllerState,
}

impl Controller {
    /// Controller whose estimates start at the known initial speed and
    /// heading.
    pub fn new(config: ControllerConfig, wheel_radius: f64, v0: f64, heading0: f64) -> Self {
        Self {
            config,
            wheel_radius,
            state: ControllerState {
                v_est: v0,
                v_imu: v0,
                v_wheel: v0,
                heading_est: heading0,
                ..ControllerState::default()
            },
        }
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// One control period. `wheel` is `None` on ticks without a new encoder
    /// sample; the last measurement is held. A missing IMU sample holds the
    /// previous command.
    pub fn tick(
        &mut self,
        setpoints: &Setpoints,
        mode: Mode,
        imu: Option<&ImuSample>,
        wheel: Option<&WheelSample>,
        dt: f64,
    ) -> TickOutput {
        let cfg = self.config;
        let s = &mut self.state;
        if let Some(w) = wheel {
            s.v_wheel = w.measured_speed(self.wheel_radius);
        }
        let Some(imu) = imu else {
            return TickOutput {
                commands: s.last,
                diagnostics: Diagnostics {
                    v_imu: s.v_imu,
                    v_pred: s.v_est,
                    v_wheel: s.v_wheel,
                    heading_est: s.heading_est,
                    heading_error: wrap_angle(setpoints.heading_set - s.heading_est),
                    missing_sample: true,
                    ..Diagnostics::default()
                },
            };
        };

        let accel = imu.accel[0];
        s.v_imu += accel * dt;
        s.heading_est = wrap_angle(s.heading_est + imu.gyro_z * dt);
        let heading_error = wrap_angle(setpoints.heading_set - s.heading_est);
        let (yaw_rate, heading_pid) =
            pid_step_error(&cfg.heading, s.heading_pid, heading_error, dt);
        s.heading_pid = heading_pid;

        let mut diagnostics = Diagnostics {
            heading_error,
            ..Diagnostics::default()
        };

        let commands = match mode {
            Mode::Cruise => {
                let v_pred = s.v_est + accel * dt;
                let slip = detect_slip(v_pred, s.v_wheel, &cfg.fusion);
                // Wheels are not trusted while they slip.
                s.v_est = if slip.slipping {
                    v_pred
                } else {
                    fuse_velocity(v_pred, s.v_wheel, &cfg.fusion)
                };
                let (a_long, speed_pid) =
                    pid_step(&cfg.speed, s.speed_pid, setpoints.v_set, s.v_est, dt);
                s.speed_pid = speed_pid;
                diagnostics.v_pred = v_pred;
                diagnostics.slip_ratio = slip.slip_ratio;
                diagnostics.slipping = slip.slipping;
                Commands {
                    a_long,
                    yaw_rate,
                    brake: 0.0,
                }
            }
            Mode::Braking { requested } => {
                if !s.braking_engaged {
                    s.braking_engaged = true;
                    s.brake_pressure = requested;
                }
                // The slip reference is the inertial speed alone; wheel speed
                // is what is being judged.
                s.v_est = s.v_imu;
                let slip = detect_slip(s.v_imu.max(0.0), s.v_wheel, &cfg.fusion);
                let release = slip.slipping && s.v_imu > cfg.abs.min_speed;
                s.brake_pressure = abs_modulate(s.brake_pressure, requested, release, dt, &cfg.abs);
                diagnostics.v_pred = s.v_imu;
                diagnostics.slip_ratio = slip.slip_ratio;
                diagnostics.slipping = slip.slipping;
                Commands {
                    a_long: 0.0,
                    yaw_rate,
                    brake: s.brake_pressure,
                }
            }
        };
        diagnostics.v_imu = s.v_imu;
        diagnostics.v_wheel = s.v_wheel;
        diagnostics.heading_est = s.heading_est;
        s.last = commands;
        TickOutput {
            commands,
            diagnostics,
        }
    }
}
