//! One worker thread per session.
//!
//! The worker owns the [`Session`] and is the only code that touches it.
//! Requests arrive on a single ordered channel and are handled between
//! simulation chunks, so commands, attacks and telemetry for a session are
//! totally ordered.

use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::sync::oneshot;

use mems_testbed::session::{Fault, Session, SessionLog};
use mems_testbed::{AttackConfig, ScenarioConfig, SessionId, SessionState, ValidationError};

use crate::api::{ApiError, ApiSession, AttackSummary, LifecycleCommand};
use crate::config::GatewayConfig;
use crate::telemetry::{Frame, FrameKind, Subscriber, TickFrame};

/// Records produced between command checks when unpaced.
const CHUNK: u64 = 250;
/// Longest sleep while waiting for paced simulation time to catch up.
const MAX_IDLE: Duration = Duration::from_millis(20);

pub struct LogSnapshot {
    pub state: SessionState,
    pub log: SessionLog,
}

enum Command {
    Lifecycle(
        LifecycleCommand,
        oneshot::Sender<Result<ApiSession, ApiError>>,
    ),
    Attack(
        AttackConfig,
        oneshot::Sender<Result<(AttackConfig, ApiSession), ApiError>>,
    ),
    Subscribe {
        decimation: u64,
        capacity: usize,
        reply: oneshot::Sender<Arc<Subscriber>>,
    },
    Log(oneshot::Sender<LogSnapshot>),
}

#[derive(Serialize)]
struct LifecyclePayload {
    state: SessionState,
    sim_time: f64,
}

#[derive(Serialize)]
struct AttackPayload {
    index: u64,
    attack: AttackConfig,
}

#[derive(Serialize)]
struct SnapshotPayload<'a> {
    session: &'a ApiSession,
    last: Option<TickFrame>,
}

#[derive(Serialize)]
struct EndPayload<'a> {
    state: SessionState,
    sim_time: f64,
    fault: Option<&'a Fault>,
}

/// Cheap handle to a session worker.
#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Command>,
    summary: Arc<Mutex<ApiSession>>,
}

impl SessionHandle {
    pub fn spawn(
        id: SessionId,
        config: ScenarioConfig,
        gateway: &GatewayConfig,
    ) -> Result<Self, ValidationError> {
        let session = Session::new(id, config)?;
        let summary = Arc::new(Mutex::new(ApiSession {
            id,
            state: SessionState::Created,
            sim_time: 0.0,
            config_digest: session.config().digest(),
            active_attack: session.active_attack().map(AttackSummary::of),
            fault: None,
        }));
        let (tx, rx) = mpsc::channel();
        let worker = Worker {
            session,
            running: false,
            pace: gateway.pace,
            anchor: (Instant::now(), 0.0),
            subscribers: Vec::new(),
            published: 0,
            seq: 0,
            summary: summary.clone(),
            rx,
        };
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || worker.run())
            .expect("spawn session worker");
        Ok(Self { tx, summary })
    }

    pub fn summary(&self) -> ApiSession {
        self.summary.lock().expect("summary lock").clone()
    }

    async fn request<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Command,
    ) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(make(reply))
            .map_err(|_| ApiError::Unavailable)?;
        rx.await.map_err(|_| ApiError::Unavailable)
    }

    pub async fn lifecycle(&self, cmd: LifecycleCommand) -> Result<ApiSession, ApiError> {
        self.request(|r| Command::Lifecycle(cmd, r)).await?
    }

    pub async fn attack(
        &self,
        attack: AttackConfig,
    ) -> Result<(AttackConfig, ApiSession), ApiError> {
        self.request(|r| Command::Attack(attack, r)).await?
    }

    pub async fn subscribe(
        &self,
        decimation: u64,
        capacity: usize,
    ) -> Result<Arc<Subscriber>, ApiError> {
        self.request(|reply| Command::Subscribe {
            decimation,
            capacity,
            reply,
        })
        .await
    }

    pub async fn log(&self) -> Result<LogSnapshot, ApiError> {
        self.request(Command::Log).await
    }
}

struct Worker {
    session: Session,
    running: bool,
    pace: f64,
    /// Wall clock and simulation time when pacing last (re)started.
    anchor: (Instant, f64),
    subscribers: Vec<Arc<Subscriber>>,
    published: usize,
    seq: u64,
    summary: Arc<Mutex<ApiSession>>,
    rx: mpsc::Receiver<Command>,
}

impl Worker {
    fn run(mut self) {
        loop {
            if self.running {
                loop {
                    match self.rx.try_recv() {
                        Ok(cmd) => self.handle(cmd),
                        Err(TryRecvError::Empty) => break,
                        Err(TryRecvError::Disconnected) => return,
                    }
                }
                if self.running {
                    self.advance();
                }
            } else {
                match self.rx.recv() {
                    Ok(cmd) => self.handle(cmd),
                    Err(_) => return,
                }
            }
        }
    }

    fn state(&self) -> SessionState {
        if self.running {
            SessionState::Running
        } else {
            self.session.state()
        }
    }

    fn api_session(&self) -> ApiSession {
        let mut s = self.summary.lock().expect("summary lock");
        s.state = self.state();
        s.sim_time = self.session.sim_time();
        s.active_attack = self.session.active_attack().map(AttackSummary::of);
        s.fault = self.session.fault().cloned();
        s.clone()
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn broadcast(&mut self, kind: FrameKind, payload: &impl Serialize) {
        self.subscribers.retain(|s| Arc::strong_count(s) > 1);
        if self.subscribers.is_empty() {
            return;
        }
        let frame = Arc::new(Frame::new(kind, Some(self.next_seq()), payload));
        for s in &self.subscribers {
            s.push(frame.clone());
        }
    }

    fn publish_lifecycle(&mut self) {
        let payload = LifecyclePayload {
            state: self.state(),
            sim_time: self.session.sim_time(),
        };
        self.broadcast(FrameKind::Lifecycle, &payload);
    }

    fn publish_records(&mut self) {
        self.subscribers.retain(|s| Arc::strong_count(s) > 1);
        let records = &self.session.log().records;
        for (i, record) in records.iter().enumerate().skip(self.published) {
            let mut frame: Option<Arc<Frame>> = None;
            for s in &self.subscribers {
                if s.wants_tick(i as u64) {
                    let f = frame.get_or_insert_with(|| {
                        self.seq += 1;
                        Arc::new(Frame::new(
                            FrameKind::Tick,
                            Some(self.seq),
                            &TickFrame::from_record(i as u64, record),
                        ))
                    });
                    s.push(f.clone());
                }
            }
        }
        self.published = records.len();
    }

    fn finish_if_done(&mut self) {
        if matches!(
            self.session.state(),
            SessionState::Completed | SessionState::Faulted
        ) {
            self.running = false;
            self.publish_lifecycle();
            let fault = self.session.fault().cloned();
            let payload = EndPayload {
                state: self.session.state(),
                sim_time: self.session.sim_time(),
                fault: fault.as_ref(),
            };
            self.broadcast(FrameKind::End, &payload);
            self.subscribers.clear();
        }
    }

    fn advance(&mut self) {
        if self.pace == 0.0 {
            self.session
                .step_records(CHUNK)
                .expect("running session steps");
        } else {
            let (wall, sim) = self.anchor;
            let target = sim + wall.elapsed().as_secs_f64() * self.pace;
            let next = self.session.next_time();
            if next <= target {
                let cap = next + CHUNK as f64 * self.session.config().dt;
                self.session
                    .run(target.min(cap))
                    .expect("running session steps");
            } else {
                let wait = Duration::from_secs_f64((next - target) / self.pace).min(MAX_IDLE);
                match self.rx.recv_timeout(wait) {
                    Ok(cmd) => self.handle(cmd),
                    Err(RecvTimeoutError::Timeout) => {}
                    // the loop notices the closed channel on its next poll
                    Err(RecvTimeoutError::Disconnected) => {}
                }
                return;
            }
        }
        self.publish_records();
        self.finish_if_done();
        self.api_session();
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Lifecycle(c, reply) => {
                let result = self.lifecycle(c);
                let _ = reply.send(result);
            }
            Command::Attack(attack, reply) => {
                let result = self.attack(attack);
                let _ = reply.send(result);
            }
            Command::Subscribe {
                decimation,
                capacity,
                reply,
            } => {
                let sub = self.subscribe(decimation, capacity);
                let _ = reply.send(sub);
            }
            Command::Log(reply) => {
                let _ = reply.send(LogSnapshot {
                    state: self.state(),
                    log: self.session.log().clone(),
                });
            }
        }
    }

    fn conflict(&self, op: &str) -> ApiError {
        ApiError::Conflict(format!("cannot {op} a {} session", self.state()))
    }

    fn lifecycle(&mut self, cmd: LifecycleCommand) -> Result<ApiSession, ApiError> {
        match cmd {
            LifecycleCommand::Start => {
                if self.running
                    || !matches!(
                        self.session.state(),
                        SessionState::Created | SessionState::Paused
                    )
                {
                    return Err(self.conflict("start"));
                }
                // Moves a fresh session into the paused state without
                // producing a record, so attacks can be installed.
                self.session.step_records(0)?;
                self.running = true;
                self.anchor = (Instant::now(), self.session.next_time());
                self.publish_lifecycle();
            }
            LifecycleCommand::Pause => {
                if !self.running {
                    return Err(self.conflict("pause"));
                }
                self.running = false;
                self.session.pause()?;
                self.publish_lifecycle();
            }
            LifecycleCommand::Reset => {
                self.session.reset();
                self.running = false;
                self.published = 0;
                self.publish_lifecycle();
            }
        }
        Ok(self.api_session())
    }

    fn attack(&mut self, attack: AttackConfig) -> Result<(AttackConfig, ApiSession), ApiError> {
        attack.check()?;
        if !self.running && self.session.state() != SessionState::Paused {
            return Err(self.conflict("attack"));
        }
        let index = self.session.records_produced();
        let applied = self.session.apply_attack(attack)?;
        self.broadcast(
            FrameKind::Attack,
            &AttackPayload {
                index,
                attack: applied,
            },
        );
        Ok((applied, self.api_session()))
    }

    fn subscribe(&mut self, decimation: u64, capacity: usize) -> Arc<Subscriber> {
        let sub = Subscriber::new(decimation, capacity);
        let summary = self.api_session();
        let last = self
            .session
            .log()
            .records
            .last()
            .map(|r| TickFrame::from_record(self.session.log().records.len() as u64 - 1, r));
        sub.push(Arc::new(Frame::new(
            FrameKind::Snapshot,
            None,
            &SnapshotPayload {
                session: &summary,
                last,
            },
        )));
        if matches!(
            self.session.state(),
            SessionState::Completed | SessionState::Faulted
        ) {
            let fault = self.session.fault().cloned();
            sub.push(Arc::new(Frame::new(
                FrameKind::End,
                Some(self.next_seq()),
                &EndPayload {
                    state: self.session.state(),
                    sim_time: self.session.sim_time(),
                    fault: fault.as_ref(),
                },
            )));
        } else {
            self.subscribers.push(sub.clone());
        }
        sub
    }
}
