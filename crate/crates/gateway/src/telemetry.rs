//! Per-subscriber telemetry queues.
//!
//! The session actor is the only producer. Each subscriber owns a bounded
//! queue; when it is full the oldest tick frame is dropped, so a slow
//! client loses resolution but never sees frames out of order or twice.
//! Lifecycle, attack and terminal frames are never dropped.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use tokio::sync::Notify;

use mems_testbed::session::TickRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Snapshot,
    Tick,
    Lifecycle,
    Attack,
    /// Last frame of a stream.
    End,
}

impl FrameKind {
    pub fn event_name(self) -> &'static str {
        match self {
            FrameKind::Snapshot => "snapshot",
            FrameKind::Tick => "tick",
            FrameKind::Lifecycle => "lifecycle",
            FrameKind::Attack => "attack",
            FrameKind::End => "end",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub kind: FrameKind,
    /// Session-wide sequence number; snapshots have none.
    pub seq: Option<u64>,
    pub data: String,
}

impl Frame {
    pub fn new<T: Serialize>(kind: FrameKind, seq: Option<u64>, payload: &T) -> Self {
        Self {
            kind,
            seq,
            data: serde_json::to_string(payload).expect("telemetry payload serializes"),
        }
    }
}

/// Decimated tick payload.
#[derive(Debug, Clone, Serialize)]
pub struct TickFrame {
    pub index: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v_true: f64,
    pub v_est: f64,
    pub v_wheel: f64,
    pub ax_imu: f64,
    pub pressure: f64,
    pub cmd_a: f64,
    pub cmd_yaw: f64,
    pub brake: f64,
}

impl TickFrame {
    pub fn from_record(index: u64, r: &TickRecord) -> Self {
        Self {
            index,
            t: r.t,
            x: r.state.x,
            y: r.state.y,
            heading: r.state.heading,
            v_true: r.state.v,
            v_est: r.v_est,
            v_wheel: r.diagnostics.v_wheel,
            ax_imu: r.imu.accel[0],
            pressure: r.pressure,
            cmd_a: r.commands.a_long,
            cmd_yaw: r.commands.yaw_rate,
            brake: r.commands.brake,
        }
    }
}

#[derive(Debug, Default)]
struct Inner {
    frames: VecDeque<Arc<Frame>>,
    closed: bool,
    dropped: u64,
}

#[derive(Debug)]
pub struct Subscriber {
    decimation: u64,
    capacity: usize,
    inner: Mutex<Inner>,
    notify: Notify,
}

impl Subscriber {
    pub fn new(decimation: u64, capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            decimation: decimation.max(1),
            capacity: capacity.max(1),
            inner: Mutex::new(Inner::default()),
            notify: Notify::new(),
        })
    }

    pub fn wants_tick(&self, index: u64) -> bool {
        index.is_multiple_of(self.decimation)
    }

    pub fn push(&self, frame: Arc<Frame>) {
        let mut inner = self.inner.lock().expect("subscriber lock");
        if inner.closed {
            return;
        }
        if frame.kind == FrameKind::Tick && inner.frames.len() >= self.capacity {
            if let Some(pos) = inner.frames.iter().position(|f| f.kind == FrameKind::Tick) {
                inner.frames.remove(pos);
                inner.dropped += 1;
            }
        }
        if frame.kind == FrameKind::End {
            inner.closed = true;
        }
        inner.frames.push_back(frame);
        drop(inner);
        self.notify.notify_one();
    }

    /// Number of tick frames discarded because the consumer fell behind.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("subscriber lock").dropped
    }

    /// Next frame, or `None` once the terminal frame has been delivered.
    pub async fn next(&self) -> Option<Arc<Frame>> {
        loop {
            {
                let mut inner = self.inner.lock().expect("subscriber lock");
                if let Some(f) = inner.frames.pop_front() {
                    return Some(f);
                }
                if inner.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }
}
