//! Closed-loop simulation of acoustic injection attacks on the MEMS inertial
//! sensors of a speed- and heading-controlled vehicle.
//!
//! The crate is organised around the three parties of an attack experiment:
//!
//! * the victim: [`vehicle`] (ground-truth kinematics and braking),
//!   [`sensors`] (IMU with resonance-shaped injection, wheel encoders) and
//!   [`control`] (PID loops, complementary fusion, slip detection, ABS);
//! * the attacker: [`attacker`] (acoustic pressure at the sensor);
//! * the platform controller: [`session`] (fixed-step loop, logs, metrics,
//!   export and deterministic replay).
//!
//! Everything below [`session`] is a pure function over value types. A
//! [`session::Session`] is single threaded and fully determined by its
//! configuration, seed and attack event schedule.

pub mod attacker;
pub mod control;
pub mod sensors;
pub mod session;
pub mod validation;
pub mod vehicle;

pub use attacker::{AttackConfig, AttackerType};
pub use session::{
    compute_metrics, export_log, AttackSuccess, LogFormat, MetricsReport, ScenarioConfig,
    ScenarioKind, Session, SessionId, SessionLog, SessionState,
};
pub use validation::{ValidationError, Violation};
