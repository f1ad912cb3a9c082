//! Authoritative simulation sessions.
//!
//! A [`Session`] owns one lattice and its maneuver history. [`SessionHandle`]
//! runs a session on its own thread; every mutation goes through that thread,
//! so at most one maneuver is ever in flight. Event timestamps are simulation
//! time. With a finite animation speed they are released at
//! `sim delta / speed` of wall time; headless sessions settle immediately.

mod protocol;
mod server;

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{compile_timeline, CodecError, CommandTimeline};
use crate::lattice::{Cube, GridAddress, LatticeState};
use crate::planner::{
    resolve_maneuver_with, ManeuverKind, ManeuverPlan, ManeuverRequest, PhaseKind, PhaseTimings, PlanError,
};
use crate::scenario::{Scenario, ScenarioError};

pub use protocol::{Op, Request, Service, PROTOCOL_VERSION};
pub use server::{serve, ServerHandle};

pub type SessionId = u64;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ServiceError {
    #[error("{error}")]
    Plan { error: PlanError },
    #[error("a maneuver is already in flight")]
    RejectedBusy,
    #[error("history range {from}..{to} is outside 0..{len}")]
    RangeInvalid { from: usize, to: usize, len: usize },
    #[error("{error}")]
    Scenario { error: ScenarioError },
    #[error("no session {session}")]
    UnknownSession { session: SessionId },
    #[error("bad request: {message}")]
    BadRequest { message: String },
    #[error("unsupported protocol version {v}")]
    UnsupportedVersion { v: u32 },
    #[error("timeline compilation failed: {message}")]
    Codec { message: String },
    #[error("session closed")]
    Closed,
}

impl From<PlanError> for ServiceError {
    fn from(error: PlanError) -> Self {
        ServiceError::Plan { error }
    }
}

impl From<CodecError> for ServiceError {
    fn from(e: CodecError) -> Self {
        ServiceError::Codec { message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFidelity {
    Full,
    Proxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    /// Simulation seconds per wall-clock second.
    pub animation_speed: f64,
    /// Settle maneuvers without waiting on wall-clock time.
    pub headless: bool,
    pub render_fidelity: RenderFidelity,
    pub show_ids: bool,
    pub occupancy_overlay: bool,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings {
            animation_speed: 1.0,
            headless: true,
            render_fidelity: RenderFidelity::Full,
            show_ids: false,
            occupancy_overlay: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsPatch {
    pub animation_speed: Option<f64>,
    pub headless: Option<bool>,
    pub render_fidelity: Option<RenderFidelity>,
    pub show_ids: Option<bool>,
    pub occupancy_overlay: Option<bool>,
}

impl SessionSettings {
    pub fn apply(&mut self, p: &SettingsPatch) -> Result<(), ServiceError> {
        if let Some(s) = p.animation_speed {
            if !(s.is_finite() && s > 0.0) {
                return Err(ServiceError::BadRequest { message: "animation_speed must be positive".into() });
            }
            self.animation_speed = s;
        }
        self.headless = p.headless.unwrap_or(self.headless);
        self.render_fidelity = p.render_fidelity.unwrap_or(self.render_fidelity);
        self.show_ids = p.show_ids.unwrap_or(self.show_ids);
        self.occupancy_overlay = p.occupancy_overlay.unwrap_or(self.occupancy_overlay);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub request: ManeuverRequest,
    pub kind: ManeuverKind,
    pub traveler: crate::lattice::CubeId,
    pub origin: crate::lattice::CubeId,
    pub destination: crate::lattice::CubeId,
    pub landing: GridAddress,
    pub total_ms: u32,
    pub warnings: Vec<String>,
}

impl From<&ManeuverPlan> for PlanSummary {
    fn from(p: &ManeuverPlan) -> Self {
        PlanSummary {
            request: p.request,
            kind: p.kind,
            traveler: p.traveler,
            origin: p.origin,
            destination: p.destination,
            landing: p.landing,
            total_ms: p.total_ms(),
            warnings: p.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EventBody {
    Accepted { plan: PlanSummary },
    Launch { duration_ms: u32 },
    Travel { duration_ms: u32 },
    Catch { duration_ms: u32 },
    Settled { state_hash: String, history_len: usize },
    Error { error: ServiceError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub session: SessionId,
    pub seq: u64,
    pub sim_time_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub session: SessionId,
    pub name: String,
    pub sim_time_ms: u64,
    pub busy: bool,
    pub state_hash: String,
    pub history_len: usize,
    pub cubes: Vec<Cube>,
    pub settings: SessionSettings,
}

/// Single-threaded session state.
#[derive(Debug, Clone)]
pub struct Session {
    id: SessionId,
    name: String,
    initial: LatticeState,
    state: LatticeState,
    history: Vec<ManeuverPlan>,
    timings: PhaseTimings,
    settings: SessionSettings,
    sim_time_ms: u64,
    seq: u64,
    in_flight: Option<ManeuverPlan>,
}

impl Session {
    pub fn new(id: SessionId, scenario: &Scenario, settings: SessionSettings) -> Session {
        let initial = scenario.initial_state();
        Session {
            id,
            name: scenario.name.clone(),
            state: initial.clone(),
            initial,
            history: Vec::new(),
            timings: scenario.timings,
            settings,
            sim_time_ms: 0,
            seq: 0,
            in_flight: None,
        }
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn history(&self) -> &[ManeuverPlan] {
        &self.history
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    fn event(&mut self, sim_time_ms: u64, body: EventBody) -> Event {
        self.seq += 1;
        Event { session: self.id, seq: self.seq, sim_time_ms, body }
    }

    /// Plan `req` and mark it in flight. Returns the accepted and phase events
    /// with their simulation times; [`Session::settle`] finishes the maneuver.
    /// A rejected request yields a single error event.
    pub fn begin(&mut self, req: &ManeuverRequest) -> Result<Vec<Event>, Event> {
        let t0 = self.sim_time_ms;
        if self.in_flight.is_some() {
            return Err(self.event(t0, EventBody::Error { error: ServiceError::RejectedBusy }));
        }
        let plan = match resolve_maneuver_with(&self.state, req, &self.timings) {
            Ok(p) => p,
            Err(e) => return Err(self.event(t0, EventBody::Error { error: e.into() })),
        };
        let mut events = vec![self.event(t0, EventBody::Accepted { plan: PlanSummary::from(&plan) })];
        let mut t = t0;
        for phase in &plan.phases {
            let d = phase.duration_ms;
            let body = match phase.kind {
                PhaseKind::Launch => EventBody::Launch { duration_ms: d },
                PhaseKind::Travel => EventBody::Travel { duration_ms: d },
                PhaseKind::Catch => EventBody::Catch { duration_ms: d },
            };
            events.push(self.event(t, body));
            t += d as u64;
        }
        self.in_flight = Some(plan);
        Ok(events)
    }

    /// Sim time at which the in-flight maneuver settles.
    pub fn settle_time_ms(&self) -> Option<u64> {
        self.in_flight.as_ref().map(|p| self.sim_time_ms + p.total_ms() as u64)
    }

    /// Apply the in-flight maneuver and advance simulation time.
    pub fn settle(&mut self) -> Option<Event> {
        let plan = self.in_flight.take()?;
        let t = self.sim_time_ms + plan.total_ms() as u64;
        match plan.apply(&self.state) {
            Ok(next) => {
                self.state = next;
                self.history.push(plan);
                self.sim_time_ms = t;
                let body = EventBody::Settled { state_hash: self.state.state_hash(), history_len: self.history.len() };
                Some(self.event(t, body))
            }
            Err(e) => Some(self.event(t, EventBody::Error { error: e.into() })),
        }
    }

    /// Rebuild the current state from the initial state and history.
    pub fn replay(&self) -> Result<LatticeState, PlanError> {
        let mut s = self.initial.clone();
        for plan in &self.history {
            let again = resolve_maneuver_with(&s, &plan.request, &self.timings)?;
            s = again.apply(&s)?;
        }
        Ok(s)
    }

    /// Concatenate compiled timelines for `range` of the history, `gap_ms`
    /// apart.
    pub fn export_timeline(&self, range: Range<usize>, gap_ms: u32) -> Result<CommandTimeline, ServiceError> {
        if range.start > range.end || range.end > self.history.len() {
            return Err(ServiceError::RangeInvalid { from: range.start, to: range.end, len: self.history.len() });
        }
        let mut out = CommandTimeline::default();
        for plan in &self.history[range] {
            let tl = compile_timeline(plan, &self.timings)?;
            if out.is_empty() {
                out = tl;
            } else {
                out.append(&tl, gap_ms);
            }
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            session: self.id,
            name: self.name.clone(),
            sim_time_ms: self.sim_time_ms,
            busy: self.is_busy(),
            state_hash: self.state.state_hash(),
            history_len: self.history.len(),
            cubes: self.state.cubes().copied().collect(),
            settings: self.settings,
        }
    }
}

type Reply<T> = Sender<T>;

enum Command {
    Maneuver(ManeuverRequest, Reply<Result<PlanSummary, ServiceError>>),
    Snapshot(Reply<Snapshot>),
    Export(Range<usize>, u32, Reply<Result<CommandTimeline, ServiceError>>),
    Subscribe(Sender<Event>),
    Settings(SettingsPatch, Reply<Result<SessionSettings, ServiceError>>),
    Replay(Reply<Result<bool, ServiceError>>),
    Shutdown,
}

enum Pending {
    Emit(Event),
    Settle,
}

struct Actor {
    session: Session,
    subscribers: Vec<Sender<Event>>,
    pending: VecDeque<(Instant, Pending)>,
}

impl Actor {
    fn broadcast(&mut self, e: &Event) {
        self.subscribers.retain(|s| s.send(e.clone()).is_ok());
    }

    fn wall_offset(&self, sim_delta_ms: u64) -> Duration {
        Duration::from_secs_f64(sim_delta_ms as f64 / 1000.0 / self.session.settings.animation_speed)
    }

    fn run_pending(&mut self, all: bool) {
        let now = Instant::now();
        while let Some((due, _)) = self.pending.front() {
            if !all && *due > now {
                break;
            }
            let (_, p) = self.pending.pop_front().unwrap();
            match p {
                Pending::Emit(e) => self.broadcast(&e),
                Pending::Settle => {
                    if let Some(e) = self.session.settle() {
                        self.broadcast(&e);
                    }
                }
            }
        }
    }

    fn maneuver(&mut self, req: ManeuverRequest) -> Result<PlanSummary, ServiceError> {
        let t0 = self.session.sim_time_ms;
        let events = match self.session.begin(&req) {
            Ok(events) => events,
            Err(e) => {
                self.broadcast(&e);
                let EventBody::Error { error } = e.body else { unreachable!() };
                return Err(error);
            }
        };
        let summary = match &events[0].body {
            EventBody::Accepted { plan } => plan.clone(),
            _ => unreachable!("first event is the acceptance"),
        };
        let start = Instant::now();
        for e in events {
            let due = start + self.wall_offset(e.sim_time_ms - t0);
            self.pending.push_back((due, Pending::Emit(e)));
        }
        let settle_at = self.session.settle_time_ms().unwrap_or(t0);
        self.pending.push_back((start + self.wall_offset(settle_at - t0), Pending::Settle));
        let headless = self.session.settings.headless;
        self.run_pending(headless);
        Ok(summary)
    }

    fn handle(&mut self, cmd: Command) -> bool {
        match cmd {
            Command::Maneuver(req, reply) => {
                let r = self.maneuver(req);
                let _ = reply.send(r);
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(self.session.snapshot());
            }
            Command::Export(range, gap, reply) => {
                let _ = reply.send(self.session.export_timeline(range, gap));
            }
            Command::Subscribe(tx) => self.subscribers.push(tx),
            Command::Settings(patch, reply) => {
                let mut s = self.session.settings;
                let r = s.apply(&patch).map(|_| {
                    self.session.settings = s;
                    s
                });
                let _ = reply.send(r);
            }
            Command::Replay(reply) => {
                let r = self.session.replay().map(|s| s == self.session.state).map_err(ServiceError::from);
                let _ = reply.send(r);
            }
            Command::Shutdown => return false,
        }
        true
    }

    fn run(mut self, rx: Receiver<Command>) {
        loop {
            let cmd = match self.pending.front() {
                Some((due, _)) => match rx.recv_timeout(due.saturating_duration_since(Instant::now())) {
                    Ok(c) => Some(c),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => break,
                },
                None => match rx.recv() {
                    Ok(c) => Some(c),
                    Err(_) => break,
                },
            };
            if let Some(c) = cmd {
                if !self.handle(c) {
                    break;
                }
            }
            let headless = self.session.settings.headless;
            self.run_pending(headless);
        }
    }
}

/// Cloneable handle to a session running on its own thread. The thread exits
/// when every handle is dropped or [`SessionHandle::shutdown`] is called.
#[derive(Debug, Clone)]
pub struct SessionHandle {
    id: SessionId,
    tx: Sender<Command>,
}

impl std::fmt::Debug for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Command")
    }
}

impl SessionHandle {
    pub fn spawn(id: SessionId, scenario: &Scenario, settings: SessionSettings) -> SessionHandle {
        let (tx, rx) = mpsc::channel();
        let actor = Actor {
            session: Session::new(id, scenario, settings),
            subscribers: Vec::new(),
            pending: VecDeque::new(),
        };
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || actor.run(rx))
            .expect("spawn session thread");
        SessionHandle { id, tx }
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    fn call<T>(&self, make: impl FnOnce(Sender<T>) -> Command) -> Result<T, ServiceError> {
        let (tx, rx) = mpsc::channel();
        self.tx.send(make(tx)).map_err(|_| ServiceError::Closed)?;
        rx.recv().map_err(|_| ServiceError::Closed)
    }

    /// Returns once the maneuver is accepted (headless: once it has settled).
    pub fn request_maneuver(&self, req: ManeuverRequest) -> Result<PlanSummary, ServiceError> {
        self.call(|tx| Command::Maneuver(req, tx))?
    }

    pub fn snapshot(&self) -> Result<Snapshot, ServiceError> {
        self.call(Command::Snapshot)
    }

    pub fn export_timeline(&self, range: Range<usize>, gap_ms: u32) -> Result<CommandTimeline, ServiceError> {
        self.call(|tx| Command::Export(range, gap_ms, tx))?
    }

    pub fn subscribe(&self) -> Result<Receiver<Event>, ServiceError> {
        let (tx, rx) = mpsc::channel();
        self.tx.send(Command::Subscribe(tx)).map_err(|_| ServiceError::Closed)?;
        Ok(rx)
    }

    pub fn update_settings(&self, patch: SettingsPatch) -> Result<SessionSettings, ServiceError> {
        self.call(|tx| Command::Settings(patch, tx))?
    }

    /// True when replaying the history reproduces the current state.
    pub fn verify_replay(&self) -> Result<bool, ServiceError> {
        self.call(Command::Replay)?
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Command::Shutdown);
    }
}
