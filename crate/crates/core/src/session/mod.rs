//! Fixed-step simulation sessions.
//!
//! Each record `i` is produced in a fixed order: attacker pressure, IMU and
//! encoder sampling (on control ticks), controller, log append, then the
//! plant step to record `i + 1`. The controller runs at the IMU sample rate;
//! the plant may be substepped under it.

mod config;
mod log;
mod metrics;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use config::{BrakeSettings, ScenarioConfig, ScenarioKind, SuccessThresholds};
pub use log::{
    export_log, parse_json_log, LogFormat, ParseLogError, SessionEvent, SessionLog, TickRecord,
    UnknownFormat, CSV_HEADER,
};
pub use metrics::{
    compute_metrics, discrepancy_envelope, AttackSuccess, MetricsError, MetricsReport,
};

use crate::attacker::AttackConfig;
use crate::control::{Controller, Mode, TickOutput};
use crate::sensors::{
    sample_imu, sample_time, AcousticSignal, ImuSample, SensorRng, TrueKinematics, WheelEncoder,
    WheelSample,
};
use crate::validation::ValidationError;
use crate::vehicle::{step_braking, step_vehicle, MotionCommand, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Issues strictly increasing session ids; safe to share between threads.
#[derive(Debug)]
pub struct SessionIds(AtomicU64);

impl Default for SessionIds {
    fn default() -> Self {
        Self(AtomicU64::new(1))
    }
}

impl SessionIds {
    pub fn next(&self) -> SessionId {
        SessionId(self.0.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Running,
    Paused,
    Completed,
    Faulted,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SessionState::Created => "created",
            SessionState::Running => "running",
            SessionState::Paused => "paused",
            SessionState::Completed => "completed",
            SessionState::Faulted => "faulted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    /// Index of the record that could not be produced.
    pub tick: u64,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("cannot {op} a {state} session")]
    IllegalState {
        op: &'static str,
        state: SessionState,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub state: SessionState,
    /// Time of the last record, s.
    pub sim_time: f64,
    pub records: u64,
}

/// Mutable simulation state between records.
#[derive(Debug, Clone)]
struct Runtime {
    vehicle: VehicleState,
    controller: Controller,
    rng: SensorRng,
    encoder: WheelEncoder,
    imu: ImuSample,
    wheel: WheelSample,
    output: TickOutput,
    braking: bool,
    attack: Option<AttackConfig>,
}

impl Runtime {
    fn new(config: &ScenarioConfig) -> Self {
        let (vehicle, v0) = match config.scenario_kind {
            ScenarioKind::Cruise => (VehicleState::at_rest(), 0.0),
            ScenarioKind::BrakeTest => (
                VehicleState::rolling(config.setpoints.v_set, &config.vehicle),
                config.setpoints.v_set,
            ),
        };
        Self {
            vehicle,
            controller: Controller::new(
                config.controller,
                config.vehicle.wheel_radius,
                v0,
                vehicle.heading,
            ),
            rng: SensorRng::from_seed(config.seed),
            encoder: WheelEncoder::new(config.sensors.encoder),
            imu: ImuSample::default(),
            wheel: WheelSample::default(),
            output: TickOutput::default(),
            braking: false,
            attack: config
                .attack
                .map(|a| a.starting_at(a.start_t.unwrap_or(0.0))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    id: SessionId,
    config: ScenarioConfig,
    state: SessionState,
    log: SessionLog,
    runtime: Runtime,
    next_index: u64,
    fault: Option<Fault>,
}

impl Session {
    pub fn new(id: SessionId, config: ScenarioConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        Ok(Self {
            id,
            runtime: Runtime::new(&config),
            log: SessionLog::new(config.clone()),
            config,
            state: SessionState::Created,
            next_index: 0,
            fault: None,
        })
    }

    /// Runs a fresh session to completion, applying the given events at
    /// their recorded indices.
    pub fn replay(config: ScenarioConfig, events: &[SessionEvent]) -> Result<Self, SessionError> {
        let mut s = Session::new(SessionId(0), config)?;
        for e in events {
            s.advance_to(e.index());
            if s.state == SessionState::Faulted {
                return Ok(s);
            }
            match e {
                SessionEvent::AttackApplied { attack, .. } => s.install_attack(*attack)?,
            }
        }
        s.run_to_end()?;
        Ok(s)
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn fault(&self) -> Option<&Fault> {
        self.fault.as_ref()
    }

    pub fn active_attack(&self) -> Option<&AttackConfig> {
        self.runtime.attack.as_ref()
    }

    /// Time of the last produced record, or 0 before the first.
    pub fn sim_time(&self) -> f64 {
        self.log.records.last().map_or(0.0, |r| r.t)
    }

    /// Time the next record will carry.
    pub fn next_time(&self) -> f64 {
        self.config.record_time(self.next_index)
    }

    pub fn records_produced(&self) -> u64 {
        self.next_index
    }

    pub fn progress(&self) -> Progress {
        Progress {
            state: self.state,
            sim_time: self.sim_time(),
            records: self.log.records.len() as u64,
        }
    }

    fn ensure_runnable(&self, op: &'static str) -> Result<(), SessionError> {
        match self.state {
            SessionState::Created | SessionState::Paused | SessionState::Running => Ok(()),
            state => Err(SessionError::IllegalState { op, state }),
        }
    }

    /// Produces every record with `t <= until_t` (capped at the duration).
    /// Leaves the session Paused, Completed or Faulted.
    pub fn run(&mut self, until_t: f64) -> Result<Progress, SessionError> {
        self.ensure_runnable("run")?;
        self.state = SessionState::Running;
        while self.next_index <= self.config.last_index()
            && self.config.record_time(self.next_index) <= until_t
        {
            if !self.produce_record() {
                break;
            }
        }
        self.settle();
        Ok(self.progress())
    }

    pub fn run_to_end(&mut self) -> Result<Progress, SessionError> {
        self.run(f64::INFINITY)
    }

    /// Produces at most `n` records.
    pub fn step_records(&mut self, n: u64) -> Result<Progress, SessionError> {
        self.ensure_runnable("run")?;
        self.state = SessionState::Running;
        let stop = self.next_index.saturating_add(n);
        self.advance_to(stop);
        Ok(self.progress())
    }

    fn advance_to(&mut self, index: u64) {
        self.state = SessionState::Running;
        while self.next_index < index && self.next_index <= self.config.last_index() {
            if !self.produce_record() {
                break;
            }
        }
        self.settle();
    }

    fn settle(&mut self) {
        if self.state == SessionState::Running {
            self.state = if self.next_index > self.config.last_index() {
                SessionState::Completed
            } else {
                SessionState::Paused
            };
        }
    }

    pub fn pause(&mut self) -> Result<(), SessionError> {
        match self.state {
            SessionState::Running | SessionState::Paused => {
                self.state = SessionState::Paused;
                Ok(())
            }
            state => Err(SessionError::IllegalState { op: "pause", state }),
        }
    }

    /// Fresh session with the same id, config and seed.
    pub fn reset(&mut self) {
        *self = Session::new(self.id, self.config.clone()).expect("config was validated");
    }

    /// Installs `attack` from the next record on, replacing any active one.
    pub fn apply_attack(&mut self, attack: AttackConfig) -> Result<AttackConfig, SessionError> {
        match self.state {
            SessionState::Running | SessionState::Paused => {}
            state => {
                return Err(SessionError::IllegalState {
                    op: "attack",
                    state,
                })
            }
        }
        attack.check()?;
        let resolved = attack.starting_at(attack.start_t.unwrap_or(self.next_time()));
        self.install_attack(resolved)?;
        Ok(resolved)
    }

    fn install_attack(&mut self, attack: AttackConfig) -> Result<(), SessionError> {
        attack.check()?;
        self.runtime.attack = Some(attack);
        self.log.events.push(SessionEvent::AttackApplied {
            index: self.next_index,
            attack,
        });
        Ok(())
    }

    fn enter_fault(&mut self, tick: u64, reason: String) {
        self.fault = Some(Fault {
            tick,
            t: self.config.record_time(tick),
            reason,
        });
        self.state = SessionState::Faulted;
    }

    /// Produces record `next_index` and steps the plant. Returns false on
    /// fault.
    fn produce_record(&mut self) -> bool {
        match self.tick() {
            Ok(()) => true,
            Err((tick, reason)) => {
                self.enter_fault(tick, reason);
                false
            }
        }
    }

    fn tick(&mut self) -> Result<(), (u64, String)> {
        let cfg = &self.config;
        let i = self.next_index;
        let t = cfg.record_time(i);
        let substeps = cfg.substeps();
        let rt = &mut self.runtime;

        let pressure;
        if i.is_multiple_of(substeps) {
            let k = i / substeps;
            let mems = &cfg.sensors.mems;
            let dt_control = 1.0 / mems.sample_rate;
            pressure = rt.attack.pressure_at(sample_time(k, mems.sample_rate));
            match sample_imu(
                TrueKinematics::of(&rt.vehicle),
                &rt.attack,
                mems,
                k,
                &mut rt.rng,
            ) {
                Ok(s) => rt.imu = s,
                Err(e) => return Err((i, e.to_string())),
            }
            let new_wheel = if k.is_multiple_of(cfg.encoder_ratio()) {
                rt.wheel = rt.encoder.sample(&rt.vehicle, &cfg.vehicle);
                Some(rt.wheel)
            } else {
                None
            };
            let mode = match cfg.scenario_kind {
                ScenarioKind::BrakeTest if t >= cfg.brake.start_t => Mode::Braking {
                    requested: cfg.brake.requested_pressure,
                },
                _ => Mode::Cruise,
            };
            rt.braking = matches!(mode, Mode::Braking { .. });
            rt.output = rt.controller.tick(
                &cfg.setpoints,
                mode,
                Some(&rt.imu),
                new_wheel.as_ref(),
                dt_control,
            );
        } else {
            pressure = rt.attack.pressure_at(t);
        }

        let record = TickRecord {
            t,
            state: rt.vehicle,
            imu: rt.imu,
            wheel: rt.wheel,
            v_est: rt.controller.state().v_est,
            commands: rt.output.commands,
            pressure,
            diagnostics: rt.output.diagnostics,
        };
        if !record.is_finite() {
            return Err((i, "non-finite value in tick record".into()));
        }
        self.log.records.push(record);
        self.next_index += 1;

        if i < cfg.last_index() {
            let cmd = rt.output.commands;
            let next = if rt.braking {
                step_braking(&rt.vehicle, cmd.brake, cmd.yaw_rate, cfg.dt, &cfg.vehicle)
            } else {
                // actuator saturation
                let a = cmd
                    .a_long
                    .clamp(-cfg.vehicle.max_brake_decel, cfg.vehicle.max_accel);
                step_vehicle(
                    &rt.vehicle,
                    MotionCommand {
                        a_long: a,
                        yaw_rate: cmd.yaw_rate,
                    },
                    cfg.dt,
                    &cfg.vehicle,
                )
            };
            match next {
                Ok(mut s) if s.is_finite() => {
                    // keep the plant clock on the record grid
                    s.t = cfg.record_time(i + 1);
                    rt.vehicle = s;
                }
                Ok(_) => return Err((i + 1, "vehicle state became non-finite".into())),
                Err(e) => return Err((i + 1, e.to_string())),
            }
        }
        Ok(())
    }
}

/// Creates, runs to completion and returns the log of a session.
pub fn run_scenario(config: ScenarioConfig) -> Result<Session, SessionError> {
    let mut s = Session::new(SessionId(0), config)?;
    s.run_to_end()?;
    Ok(s)
}
