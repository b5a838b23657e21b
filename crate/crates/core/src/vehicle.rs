//! Ground-truth kinematics of the victim vehicle.
//!
//! Lateral motion is kinematic (constant twist per step, integrated exactly
//! along a circular arc). Longitudinal motion is driven either by a commanded
//! acceleration or, while braking, by tyre friction as a function of slip.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::validation::Validator;

pub const GRAVITY: f64 = 9.81;

/// Yaw rates below this are integrated as straight lines.
pub const STRAIGHT_LINE_YAW_RATE: f64 = 1e-9;

/// Locked-wheel friction as a fraction of the peak.
pub const LOCKED_FRICTION_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// m
    pub wheel_radius: f64,
    /// m
    pub track_width: f64,
    /// kg
    pub mass: f64,
    /// m/s²
    pub max_accel: f64,
    /// Brake capacity expressed as a wheel-surface deceleration, m/s².
    pub max_brake_decel: f64,
    pub mu_peak: f64,
    /// Slip ratio at which friction peaks.
    pub slip_lock_threshold: f64,
    /// Rotational inertia of one wheel, kg·m². Four braked wheels share the
    /// vehicle mass.
    pub wheel_inertia: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl VehicleParams {
    pub fn full_scale() -> Self {
        Self {
            wheel_radius: 0.3,
            track_width: 1.6,
            mass: 1500.0,
            max_accel: 3.0,
            max_brake_decel: 9.0,
            mu_peak: 0.9,
            slip_lock_threshold: 0.15,
            wheel_inertia: 1.2,
        }
    }

    /// Desk-scale robot car.
    pub fn rc_scale() -> Self {
        Self {
            wheel_radius: 0.05,
            track_width: 0.2,
            mass: 3.0,
            max_accel: 2.0,
            max_brake_decel: 6.0,
            mu_peak: 0.9,
            slip_lock_threshold: 0.15,
            wheel_inertia: 6.7e-5,
        }
    }

    pub fn validate(&self, v: &mut Validator) {
        v.positive(self.wheel_radius, "wheel_radius");
        v.positive(self.track_width, "track_width");
        v.positive(self.mass, "mass");
        v.positive(self.max_accel, "max_accel");
        v.positive(self.max_brake_decel, "max_brake_decel");
        v.positive(self.mu_peak, "mu_peak");
        v.positive(self.wheel_inertia, "wheel_inertia");
        if v.finite(self.slip_lock_threshold, "slip_lock_threshold")
            && !(self.slip_lock_threshold > 0.0 && self.slip_lock_threshold < 1.0)
        {
            v.fail("slip_lock_threshold", "must be in (0, 1)");
        }
    }

    /// Ratio of the vehicle's translational inertia to one wheel's rotational
    /// inertia seen at the tyre contact patch.
    pub fn wheel_inertia_ratio(&self) -> f64 {
        self.mass * self.wheel_radius * self.wheel_radius / (4.0 * self.wheel_inertia)
    }

    /// Piecewise-linear friction curve: 0 at zero slip, `mu_peak` at
    /// `slip_lock_threshold`, `0.6 * mu_peak` at full lock.
    pub fn friction(&self, slip: f64) -> f64 {
        let slip = slip.clamp(0.0, 1.0);
        let peak = self.slip_lock_threshold;
        if slip <= peak {
            self.mu_peak * slip / peak
        } else {
            let locked = LOCKED_FRICTION_FRACTION * self.mu_peak;
            self.mu_peak + (locked - self.mu_peak) * (slip - peak) / (1.0 - peak)
        }
    }

    fn max_command(&self) -> f64 {
        self.max_accel.max(self.max_brake_decel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Wrapped to (-π, π].
    pub heading: f64,
    pub v: f64,
    pub yaw_rate: f64,
    /// Longitudinal acceleration applied over the last step.
    pub a_long: f64,
    pub omega_wheel_left: f64,
    pub omega_wheel_right: f64,
    /// Cumulative wheel rotation, rad. Encoders count ticks from these.
    pub wheel_angle_left: f64,
    pub wheel_angle_right: f64,
    pub braking: bool,
}

impl VehicleState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    /// Rolling straight ahead at `v` without slip.
    pub fn rolling(v: f64, params: &VehicleParams) -> Self {
        let w = wheel_speeds(v, 0.0, params);
        Self {
            v,
            omega_wheel_left: w.left,
            omega_wheel_right: w.right,
            ..Self::default()
        }
    }

    /// Mean wheel surface speed, m/s.
    pub fn wheel_surface_speed(&self, params: &VehicleParams) -> f64 {
        params.wheel_radius * (self.omega_wheel_left + self.omega_wheel_right) / 2.0
    }

    /// Longitudinal slip ratio in [0, 1]; zero at standstill.
    pub fn slip_ratio(&self, params: &VehicleParams) -> f64 {
        if self.v <= 0.0 {
            0.0
        } else {
            ((self.v - self.wheel_surface_speed(params)) / self.v).clamp(0.0, 1.0)
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.x,
            self.y,
            self.heading,
            self.v,
            self.yaw_rate,
            self.a_long,
            self.omega_wheel_left,
            self.omega_wheel_right,
            self.wheel_angle_left,
            self.wheel_angle_right,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionCommand {
    pub a_long: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VehicleError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("time step must be > 0 (got {0})")]
    NonPositiveStep(f64),
    #[error("commanded acceleration {command} exceeds ±{limit} m/s²")]
    AccelOutOfRange { command: f64, limit: f64 },
    #[error("brake pressure {0} outside [0, 1]")]
    PressureOutOfRange(f64),
    #[error("negative speed {0}")]
    NegativeSpeed(f64),
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid can return 2π for tiny negative inputs
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub fn wheel_speeds(v: f64, yaw_rate: f64, params: &VehicleParams) -> WheelSpeeds {
    let half = yaw_rate * params.track_width / 2.0;
    WheelSpeeds {
        left: (v - half) / params.wheel_radius,
        right: (v + half) / params.wheel_radius,
    }
}

struct Arc {
    x: f64,
    y: f64,
    heading: f64,
    v_end: f64,
    a_applied: f64,
    heading_change: f64,
    distance: f64,
}

/// Constant-twist pose update. Distance uses the mid-interval speed, clamped
/// so the vehicle stops rather than reverses.
fn advance_arc(state: &VehicleState, accel: f64, yaw_rate: f64, dt: f64) -> Arc {
    let v0 = state.v;
    let unclamped = v0 + accel * dt;
    let (v_end, distance) = if unclamped < 0.0 {
        // stops inside the step
        let t_stop = if accel < 0.0 { v0 / -accel } else { 0.0 };
        (0.0, v0 * t_stop / 2.0)
    } else {
        (unclamped, (v0 + accel * dt / 2.0) * dt)
    };
    let dtheta = yaw_rate * dt;
    let (dx, dy) = if yaw_rate.abs() < STRAIGHT_LINE_YAW_RATE {
        (
            distance * state.heading.cos(),
            distance * state.heading.sin(),
        )
    } else {
        // chord of the arc: 2R sin(Δθ/2) along the mid heading
        let half = dtheta / 2.0;
        let chord = distance * half.sin() / half;
        let mid = state.heading + half;
        (chord * mid.cos(), chord * mid.sin())
    };
    Arc {
        x: state.x + dx,
        y: state.y + dy,
        heading: wrap_angle(state.heading + dtheta),
        v_end,
        a_applied: (v_end - v0) / dt,
        heading_change: dtheta,
        distance,
    }
}

fn check_common(state: &VehicleState, dt: f64) -> Result<(), VehicleError> {
    if !dt.is_finite() {
        return Err(VehicleError::NonFinite("dt"));
    }
    if dt <= 0.0 {
        return Err(VehicleError::NonPositiveStep(dt));
    }
    if !state.is_finite() {
        return Err(VehicleError::NonFinite("state"));
    }
    if state.v < 0.0 {
        return Err(VehicleError::NegativeSpeed(state.v));
    }
    Ok(())
}

/// Advances the vehicle under a commanded acceleration and yaw rate, keeping
/// the wheels in pure rolling.
pub fn step_vehicle(
    state: &VehicleState,
    cmd: MotionCommand,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    check_common(state, dt)?;
    if !cmd.a_long.is_finite() {
        return Err(VehicleError::NonFinite("a_long"));
    }
    if !cmd.yaw_rate.is_finite() {
        return Err(VehicleError::NonFinite("yaw_rate"));
    }
    let limit = params.max_command();
    if cmd.a_long.abs() > limit {
        return Err(VehicleError::AccelOutOfRange {
            command: cmd.a_long,
            limit,
        });
    }
    let arc = advance_arc(state, cmd.a_long, cmd.yaw_rate, dt);
    let travel = arc.distance;
    Ok(finish_step(
        state,
        &arc,
        cmd.yaw_rate,
        arc.v_end,
        travel,
        dt,
        false,
        params,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish_step(
    state: &VehicleState,
    arc: &Arc,
    yaw_rate: f64,
    surface_speed_end: f64,
    travel: f64,
    dt: f64,
    braking: bool,
    params: &VehicleParams,
) -> VehicleState {
    let w = wheel_speeds(surface_speed_end, yaw_rate, params);
    let side = arc.heading_change * params.track_width / 2.0;
    VehicleState {
        t: state.t + dt,
        x: arc.x,
        y: arc.y,
        heading: arc.heading,
        v: arc.v_end,
        yaw_rate,
        a_long: arc.a_applied,
        omega_wheel_left: w.left,
        omega_wheel_right: w.right,
        wheel_angle_left: state.wheel_angle_left + (travel - side) / params.wheel_radius,
        wheel_angle_right: state.wheel_angle_right + (travel + side) / params.wheel_radius,
        braking,
    }
}

/// Advances the vehicle with brakes applied at `brake_pressure` (fraction of
/// capacity). The vehicle decelerates at `mu(slip)·g`; the wheel surface speed
/// follows `u' = κ·(mu(slip)·g − p·max_brake_decel)` with κ the
/// [`VehicleParams::wheel_inertia_ratio`], solved implicitly.
pub fn step_braking(
    state: &VehicleState,
    brake_pressure: f64,
    yaw_rate: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    check_common(state, dt)?;
    if !brake_pressure.is_finite() {
        return Err(VehicleError::NonFinite("brake_pressure"));
    }
    if !(0.0..=1.0).contains(&brake_pressure) {
        return Err(VehicleError::PressureOutOfRange(brake_pressure));
    }
    if !yaw_rate.is_finite() {
        return Err(VehicleError::NonFinite("yaw_rate"));
    }
    let u0 = state.wheel_surface_speed(params).clamp(0.0, state.v);
    let slip = state.slip_ratio(params);
    let decel = if state.v > 0.0 {
        params.friction(slip) * GRAVITY
    } else {
        0.0
    };
    let arc = advance_arc(state, -decel, yaw_rate, dt);
    let u1 = if arc.v_end <= 0.0 {
        0.0
    } else if brake_pressure == 0.0 && slip == 0.0 {
        // free rolling is a fixed point of the wheel equation
        arc.v_end
    } else {
        solve_wheel_speed(u0, arc.v_end, brake_pressure, dt, params)
    };
    let braking = brake_pressure > 0.0 || u1 < arc.v_end;
    Ok(finish_step(
        state,
        &arc,
        yaw_rate,
        u1,
        (u0 + u1) / 2.0 * dt,
        dt,
        braking,
        params,
    ))
}

/// Backward-Euler wheel update against the new vehicle speed `v`. The
/// friction curve is linear on each side of the peak, so each segment has a
/// closed-form candidate.
fn solve_wheel_speed(u0: f64, v: f64, pressure: f64, dt: f64, params: &VehicleParams) -> f64 {
    let c = dt * params.wheel_inertia_ratio();
    let brake = pressure * params.max_brake_decel;
    let peak = params.slip_lock_threshold;
    let u_peak = v * (1.0 - peak);

    // rising segment, slip in [0, peak]: mu·g = k·(v − u)/v
    let k = params.mu_peak * GRAVITY / peak;
    let rising = (u0 + c * (k - brake)) / (1.0 + c * k / v);
    if rising >= u_peak {
        return rising.min(v);
    }

    // falling segment, slip in [peak, 1]: mu·g = a0 + a1·u
    let s = (1.0 - LOCKED_FRICTION_FRACTION) * params.mu_peak / (1.0 - peak) * GRAVITY;
    let a0 = params.mu_peak * GRAVITY + s * peak - s;
    let a1 = s / v;
    let denom = 1.0 - c * a1;
    if denom > 0.0 {
        let falling = (u0 + c * (a0 - brake)) / denom;
        return falling.clamp(0.0, u_peak);
    }
    // very low speed: the implicit system is ill-posed, fall back to explicit
    let mu_g = params.friction((v - u0) / v) * GRAVITY;
    (u0 + c * (mu_g - brake)).clamp(0.0, v)
}
