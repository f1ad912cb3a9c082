//! Line-delimited JSON messages.
//!
//! Requests: `{"v":1,"id":7,"op":"maneuver","session":1,"step":"2 y ccw"}`.
//! Responses echo `id` with `"ok":true,"result":...` or
//! `"ok":false,"error":{"kind":...,"message":...}`. After `subscribe`, the
//! connection also carries event lines `{"v":1,"session":1,"seq":..,
//! "sim_time_ms":..,"event":"launch",...}`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Event, ServiceError, SessionHandle, SessionId, SessionSettings, SettingsPatch};
use crate::scenario::{load_scenario, parse_step, Scenario};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimelineFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    /// Scenario text in the scenario file format; the server default if absent.
    CreateSession {
        scenario: Option<String>,
        settings: Option<SettingsPatch>,
    },
    Maneuver {
        session: SessionId,
        step: String,
    },
    Snapshot {
        session: SessionId,
    },
    ExportTimeline {
        session: SessionId,
        from: Option<usize>,
        to: Option<usize>,
        gap_ms: Option<u32>,
        #[serde(default)]
        format: TimelineFormat,
    },
    Subscribe {
        session: SessionId,
    },
    Settings {
        session: SessionId,
        settings: SettingsPatch,
    },
    CloseSession {
        session: SessionId,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Request {
    pub v: u32,
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub op: Op,
}

/// Default gap between exported maneuvers.
pub const DEFAULT_GAP_MS: u32 = 100;

/// Session registry shared by all connections.
pub struct Service {
    sessions: Mutex<BTreeMap<SessionId, SessionHandle>>,
    next_id: AtomicU64,
    default_scenario: Option<Scenario>,
    default_settings: SessionSettings,
}

impl Service {
    pub fn new(default_scenario: Option<Scenario>, default_settings: SessionSettings) -> Self {
        Service {
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            default_scenario,
            default_settings,
        }
    }

    pub fn session(&self, id: SessionId) -> Result<SessionHandle, ServiceError> {
        self.sessions
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or(ServiceError::UnknownSession { session: id })
    }

    pub fn create_session(
        &self,
        scenario: Option<&str>,
        settings: Option<&SettingsPatch>,
    ) -> Result<SessionHandle, ServiceError> {
        let scenario = match scenario {
            Some(text) => load_scenario(text).map_err(|error| ServiceError::Scenario { error })?,
            None => self
                .default_scenario
                .clone()
                .ok_or(ServiceError::BadRequest { message: "no scenario given and no server default".into() })?,
        };
        let mut s = self.default_settings;
        if let Some(p) = settings {
            s.apply(p)?;
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let handle = SessionHandle::spawn(id, &scenario, s);
        self.sessions.lock().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    /// Handle one request. A subscription also returns the event receiver.
    pub fn dispatch(&self, req: Request) -> (Result<Value, ServiceError>, Option<Receiver<Event>>) {
        if req.v != PROTOCOL_VERSION {
            return (Err(ServiceError::UnsupportedVersion { v: req.v }), None);
        }
        let result = match req.op {
            Op::CreateSession { scenario, settings } => self
                .create_session(scenario.as_deref(), settings.as_ref())
                .and_then(|h| h.snapshot())
                .map(|s| to_value(&s)),
            Op::Maneuver { session, step } => parse_step(&step)
                .map_err(|message| ServiceError::BadRequest { message })
                .and_then(|r| self.session(session)?.request_maneuver(r))
                .map(|p| to_value(&p)),
            Op::Snapshot { session } => self.session(session).and_then(|h| h.snapshot()).map(|s| to_value(&s)),
            Op::ExportTimeline { session, from, to, gap_ms, format } => (|| {
                let h = self.session(session)?;
                let len = h.snapshot()?.history_len;
                let range = from.unwrap_or(0)..to.unwrap_or(len);
                let tl = h.export_timeline(range, gap_ms.unwrap_or(DEFAULT_GAP_MS))?;
                Ok(match format {
                    TimelineFormat::Text => json!({ "entries": tl.len(), "text": tl.to_text() }),
                    TimelineFormat::Json => to_value(&tl),
                })
            })(),
            Op::Subscribe { session } => match self.session(session).and_then(|h| h.subscribe()) {
                Ok(rx) => return (Ok(json!({ "subscribed": session })), Some(rx)),
                Err(e) => Err(e),
            },
            Op::Settings { session, settings } => {
                self.session(session).and_then(|h| h.update_settings(settings)).map(|s| to_value(&s))
            }
            Op::CloseSession { session } => match self.sessions.lock().unwrap().remove(&session) {
                Some(h) => {
                    h.shutdown();
                    Ok(json!({ "closed": session }))
                }
                None => Err(ServiceError::UnknownSession { session }),
            },
        };
        (result, None)
    }

    /// Parse and dispatch one line; the response is a single JSON line.
    pub fn handle_line(&self, line: &str) -> (String, Option<Receiver<Event>>) {
        let raw: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return (response(None, Err(ServiceError::BadRequest { message: e.to_string() })), None),
        };
        let id = raw.get("id").and_then(Value::as_u64);
        match serde_json::from_value::<Request>(raw) {
            Ok(req) => {
                let (r, rx) = self.dispatch(req);
                (response(id, r), rx)
            }
            Err(e) => (response(id, Err(ServiceError::BadRequest { message: e.to_string() })), None),
        }
    }
}

pub fn response(id: Option<u64>, result: Result<Value, ServiceError>) -> String {
    let v = match result {
        Ok(result) => json!({ "v": PROTOCOL_VERSION, "id": id, "ok": true, "result": result }),
        Err(e) => {
            let mut err = serde_json::to_value(&e).unwrap_or_else(|_| json!({}));
            err["message"] = json!(e.to_string());
            json!({ "v": PROTOCOL_VERSION, "id": id, "ok": false, "error": err })
        }
    };
    v.to_string()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response serializes")
}

pub fn event_line(e: &Event) -> String {
    let mut v = serde_json::to_value(e).expect("events serialize");
    v["v"] = json!(PROTOCOL_VERSION);
    v.to_string()
}
