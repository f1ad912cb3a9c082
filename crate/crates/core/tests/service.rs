use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde_json::Value;
use voxmag_core::planner::ManeuverRequest;
use voxmag_core::scenario::{load_scenario, parse_step, CORPUS_FURNITURE, CORPUS_TWO_CUBE};
use voxmag_core::service::{serve, EventBody, Service, ServiceError, SessionHandle, SessionSettings};

fn step(s: &str) -> ManeuverRequest {
    parse_step(s).unwrap()
}

#[test]
fn headless_session_emits_phase_events_in_order() {
    let scenario = load_scenario(CORPUS_TWO_CUBE).unwrap();
    let h = SessionHandle::spawn(7, &scenario, SessionSettings { headless: true, ..Default::default() });
    let events = h.subscribe().unwrap();
    let plan = h.request_maneuver(step("2 y ccw")).unwrap();
    assert_eq!(plan.total_ms, 1530);
    let names: Vec<&str> = (0..5)
        .map(|_| match events.recv_timeout(Duration::from_secs(5)).unwrap().body {
            EventBody::Accepted { .. } => "accepted",
            EventBody::Launch { .. } => "launch",
            EventBody::Travel { .. } => "travel",
            EventBody::Catch { .. } => "catch",
            EventBody::Settled { .. } => "settled",
            EventBody::Error { .. } => "error",
        })
        .collect();
    assert_eq!(names, ["accepted", "launch", "travel", "catch", "settled"]);
    let snap = h.snapshot().unwrap();
    assert_eq!(snap.sim_time_ms, 1530);
    assert_eq!(snap.history_len, 1);
    assert!(h.verify_replay().unwrap());
    h.shutdown();
}

#[test]
fn rejected_request_leaves_state_unchanged() {
    let scenario = load_scenario(CORPUS_TWO_CUBE).unwrap();
    let h = SessionHandle::spawn(1, &scenario, SessionSettings { headless: true, ..Default::default() });
    let before = h.snapshot().unwrap().state_hash;
    assert!(matches!(h.request_maneuver(step("1 z cw")), Err(ServiceError::Plan { .. })));
    assert_eq!(h.snapshot().unwrap().state_hash, before);
    assert!(matches!(h.export_timeline(0..3, 100), Err(ServiceError::RangeInvalid { .. })));
    h.shutdown();
}

#[test]
fn exported_furniture_timeline_matches_history() {
    let scenario = load_scenario(CORPUS_FURNITURE).unwrap();
    let h = SessionHandle::spawn(1, &scenario, SessionSettings { headless: true, ..Default::default() });
    for req in scenario.requests() {
        h.request_maneuver(*req).unwrap();
    }
    let snap = h.snapshot().unwrap();
    assert_eq!(snap.history_len, 62);
    let tl = h.export_timeline(0..62, 100).unwrap();
    tl.validate().unwrap();
    assert_eq!(tl.segments.len(), 62);
    assert!(h.verify_replay().unwrap());
    h.shutdown();
}

#[test]
fn tcp_protocol_round_trip() {
    let service = Service::new(Some(load_scenario(CORPUS_TWO_CUBE).unwrap()), SessionSettings::default());
    let server = serve("127.0.0.1:0", service).unwrap();
    let stream = TcpStream::connect(server.local_addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut call = |line: &str| -> Value {
        writeln!(writer, "{line}").unwrap();
        let mut buf = String::new();
        reader.read_line(&mut buf).unwrap();
        serde_json::from_str(&buf).unwrap()
    };
    let r = call(r#"{"v":1,"id":1,"op":"create_session","settings":{"headless":true}}"#);
    assert_eq!(r["ok"], true, "{r}");
    let sid = r["result"]["session"].as_u64().unwrap();
    let r = call(&format!(r#"{{"v":1,"id":2,"op":"maneuver","session":{sid},"step":"2 y ccw"}}"#));
    assert_eq!(r["result"]["kind"], "pivot");
    let r = call(&format!(r#"{{"v":1,"id":3,"op":"export_timeline","session":{sid},"format":"json"}}"#));
    assert_eq!(r["result"]["entries"].as_array().unwrap().len(), 12);
    let r = call(r#"{"v":1,"id":4,"op":"snapshot","session":999}"#);
    assert_eq!(r["error"]["kind"], "unknown-session");
    server.shutdown();
}
