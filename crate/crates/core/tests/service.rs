use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gemini_core::engine::{InputEvent, Session};
use gemini_core::harness::live::handshake_line;
use gemini_core::harness::standing_posture;
use gemini_core::mapper::scheme::parse_scheme;
use gemini_core::service::{serve, ServiceConfig, ServiceHandle};
use gemini_core::skeleton::{encode_frame, JointId};
use gemini_core::SkeletonFrame;
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn scheme_text() -> String {
    fs::read_to_string(fixtures().join("skyrim.scheme.json")).unwrap()
}

fn start(inputs: bool) -> ServiceHandle {
    let session = Session::new(parse_scheme(&scheme_text()).unwrap()).unwrap();
    let mut config = ServiceConfig::on_port(0).with_fixtures(fixtures());
    if !inputs {
        config = config.without_inputs();
    }
    serve(session, config).unwrap()
}

fn url(h: &ServiceHandle, path: &str) -> String {
    format!("http://{}{path}", h.http_addr)
}

fn get(h: &ServiceHandle, path: &str) -> (i32, String) {
    let r = minreq::get(url(h, path)).with_timeout(5).send().unwrap();
    (r.status_code, r.as_str().unwrap().to_string())
}

fn send(h: &ServiceHandle, method: minreq::Method, path: &str, body: &str) -> (i32, Value) {
    let r = minreq::Request::new(method, url(h, path))
        .with_body(body)
        .with_timeout(5)
        .send()
        .unwrap();
    let v = serde_json::from_str(r.as_str().unwrap()).unwrap_or(Value::Null);
    (r.status_code, v)
}

fn post(h: &ServiceHandle, path: &str, body: &str) -> (i32, Value) {
    send(h, minreq::Method::Post, path, body)
}

/// Standing frame with the right foot forward when `step` is set.
fn frame(t: u64, step: bool) -> SkeletonFrame {
    let mut f = SkeletonFrame::new(t, standing_posture()).unwrap();
    if step {
        let mut p = f[JointId::FootRight];
        p.z -= 0.4;
        f.set_joint(JointId::FootRight, p);
    }
    f
}

struct Subscriber {
    lines: BufReader<TcpStream>,
}

impl Subscriber {
    fn connect(h: &ServiceHandle) -> (Self, Value) {
        let stream = TcpStream::connect(h.live_addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(3))).unwrap();
        let mut s = Subscriber {
            lines: BufReader::new(stream),
        };
        let hello = s.next().expect("handshake");
        assert_eq!(hello, json!({"stream": "livestate", "format_version": 1}));
        let snapshot = s.next().expect("snapshot");
        (s, snapshot)
    }

    fn next(&mut self) -> Option<Value> {
        let mut line = String::new();
        match self.lines.read_line(&mut line) {
            Ok(n) if n > 0 => Some(serde_json::from_str(&line).unwrap()),
            _ => None,
        }
    }

    /// Reads until a message carries a pose event; returns it and the wait.
    fn until_pose_event(&mut self) -> (Value, Duration) {
        let started = Instant::now();
        loop {
            let msg = self.next().expect("stream ended");
            if let Some(e) = msg["pose_events"].as_array().and_then(|a| a.first()) {
                return (e.clone(), started.elapsed());
            }
        }
    }
}

#[test]
fn scheme_routes() {
    let h = start(false);
    let (code, body) = get(&h, "/scheme");
    assert_eq!(code, 200);
    assert_eq!(body, scheme_text());

    let (code, body) = send(&h, minreq::Method::Put, "/scheme", r#"{"format_version":1,"name":"x","poses":[{"pose_id":"a","constraints":[]}]}"#);
    assert_eq!(code, 400);
    assert_eq!(body["errors"][0]["code"], "InvalidPose");
    assert_eq!(body["errors"][0]["path"], "poses[0].constraints");

    let (code, body) = post(&h, "/scheme/validate", "{");
    assert_eq!(code, 200);
    assert_eq!(body["ok"], false);
    assert_eq!(body["errors"][0]["code"], "ParseError");

    let mut doc: Value = serde_json::from_str(&scheme_text()).unwrap();
    doc["name"] = json!("renamed");
    let (code, body) = send(&h, minreq::Method::Put, "/scheme", &doc.to_string());
    assert_eq!(code, 200);
    assert_eq!(body["name"], "renamed");
    assert_eq!(get(&h, "/scheme").1, parse_scheme(&doc.to_string()).unwrap().to_canonical_json());

    let (code, body) = get(&h, "/poses/lean_left");
    assert_eq!(code, 200);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["pose_id"], "lean_left");
    let (code, body) = get(&h, "/poses/flying");
    assert_eq!(code, 404);
    assert!(serde_json::from_str::<Value>(&body).unwrap()["error"]["code"].is_string());

    assert_eq!(get(&h, "/nowhere").0, 404);
    assert_eq!(send(&h, minreq::Method::Delete, "/scheme", "").0, 405);
}

#[test]
fn mode_transitions_and_recording() {
    let h = start(false);
    let (code, body) = post(&h, "/recording/finish", "");
    assert_eq!(code, 409);
    assert_eq!(body["error"]["code"], "IllegalTransition");

    assert_eq!(post(&h, "/session/stop", "").0, 200);
    assert_eq!(post(&h, "/recording/start", r#"{"pose_id":"wave"}"#).0, 409);
    let (code, body) = post(&h, "/session/start", "");
    assert_eq!(code, 200);
    assert_eq!(body["mode"]["name"], "running");

    assert_eq!(post(&h, "/recording/start", r#"{"pose_id":"lean_left"}"#).0, 409);
    assert_eq!(post(&h, "/recording/start", "not json").0, 400);
    assert_eq!(post(&h, "/recording/start", r#"{"pose_id":"step_again"}"#).0, 200);

    // Three seconds still, two stepping forward.
    for i in 0..150u64 {
        assert!(h.engine().push(InputEvent::Frame(frame(i * 33 + 1, i >= 60))));
    }
    let (code, body) = post(&h, "/recording/finish", "");
    assert_eq!(code, 200, "{body}");
    assert_eq!(body["pose"]["pose_id"], "step_again");
    let (code, _) = get(&h, "/poses/step_again");
    assert_eq!(code, 200);
    let (_, state) = get(&h, "/state");
    let state: Value = serde_json::from_str(&state).unwrap();
    assert_eq!(state["mode"]["name"], "running");
}

#[test]
fn subscriber_sees_activation_quickly() {
    let h = start(false);
    let (mut sub, snapshot) = Subscriber::connect(&h);
    assert_eq!(snapshot["poses"].as_array().unwrap().len(), 8);
    assert!(snapshot["pose_events"].as_array().unwrap().is_empty());

    h.engine().push(InputEvent::Frame(frame(0, true)));
    h.engine().push(InputEvent::Frame(frame(33, true)));
    let (event, waited) = sub.until_pose_event();
    assert_eq!(event["pose_id"], "step_forward");
    assert_eq!(event["kind"], "activated");
    assert_eq!(event["timestamp_ms"], 33);
    assert!(waited <= Duration::from_millis(250), "waited {waited:?}");
}

#[test]
fn subscribers_share_one_sequence() {
    let h = start(false);
    let (mut a, _) = Subscriber::connect(&h);
    let (mut b, _) = Subscriber::connect(&h);
    let mut t = 0;
    for _ in 0..3 {
        for step in [true, true, false, false] {
            h.engine().push(InputEvent::Frame(frame(t, step)));
            t += 33;
        }
    }
    let collect = |s: &mut Subscriber| {
        let mut events = Vec::new();
        while events.len() < 12 {
            let msg = s.next().expect("stream ended");
            events.extend(msg["pose_events"].as_array().unwrap().iter().cloned());
        }
        events
    };
    let ea = collect(&mut a);
    let eb = collect(&mut b);
    assert_eq!(ea, eb);
    let kinds: Vec<&str> = ea
        .iter()
        .filter(|e| e["pose_id"] == "step_forward")
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["activated", "deactivated"].repeat(3));
}

#[test]
fn idle_stream_sends_heartbeats() {
    let h = start(false);
    let (mut sub, _) = Subscriber::connect(&h);
    let started = Instant::now();
    let beat = sub.next().expect("heartbeat");
    let waited = started.elapsed();
    assert!(waited < Duration::from_millis(1500), "waited {waited:?}");
    assert!(beat["pose_events"].as_array().unwrap().is_empty());
    assert!(beat["metrics"].is_object());
}

#[test]
fn skeleton_socket_feeds_the_engine() {
    let h = start(true);
    let (mut sub, _) = Subscriber::connect(&h);
    let mut input = TcpStream::connect(h.skeleton_addr.unwrap()).unwrap();
    writeln!(input, "{}", handshake_line("skeleton")).unwrap();
    writeln!(input, "{}", encode_frame(&frame(0, true))).unwrap();
    writeln!(input, "not a frame").unwrap();
    writeln!(input, "{}", encode_frame(&frame(33, true))).unwrap();
    input.flush().unwrap();
    let (event, _) = sub.until_pose_event();
    assert_eq!(event["pose_id"], "step_forward");
    let (_, state) = get(&h, "/state");
    let state: Value = serde_json::from_str(&state).unwrap();
    assert_eq!(state["metrics"]["frames"], 2);
}

#[test]
fn fixtures_are_listed_and_served() {
    let h = start(false);
    let (code, body) = get(&h, "/fixtures");
    assert_eq!(code, 200);
    let list: Value = serde_json::from_str(&body).unwrap();
    assert!(list["fixtures"].as_array().unwrap().iter().any(|n| n == "skyrim.words.jsonl"));
    let (code, body) = get(&h, "/fixtures/skyrim.words.jsonl");
    assert_eq!(code, 200);
    assert_eq!(body, fs::read_to_string(fixtures().join("skyrim.words.jsonl")).unwrap());
    assert_eq!(get(&h, "/fixtures/..%2Fsecret").0, 404);
}
