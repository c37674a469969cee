use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gemini_core::harness::scenarios::{idle_script, Scenario};

fn gemini(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gemini"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gemini(&[]).status.code(), Some(2));
    assert_eq!(gemini(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gemini(&["validate"]).status.code(), Some(2));
    assert_eq!(gemini(&["validate", "--scheme", "/nonexistent/scheme.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("out.jsonl");
    let o = gemini(&[
        "run",
        "--scheme",
        s(&fixture("skyrim.scheme.json")),
        "--skeleton",
        s(&fixture("skyrim.skel.jsonl")),
        "--sink",
        s(&sink),
        "--speed-factor",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn validate_reports_ok_and_errors() {
    let o = gemini(&["validate", "--scheme", s(&fixture("skyrim.scheme.json"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "ok");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("skyrim.scheme.json")).unwrap()).unwrap();
    doc["mappings"][0]["trigger"] = serde_json::json!({"pose": "fly"});
    doc["poses"][1]["pose_id"] = serde_json::json!("step_forward");
    fs::write(&bad, doc.to_string()).unwrap();
    let o = gemini(&["validate", "--scheme", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("DuplicateId at poses[1].pose_id"), "{err}");
    assert!(err.contains("UnknownReference at mappings[0].trigger"), "{err}");

    let o = gemini(&["--json", "validate", "--scheme", s(&bad)]);
    let lines: Vec<serde_json::Value> = stderr(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["code"], "DuplicateId");
    assert_eq!(lines[0]["path"], "poses[1].pose_id");
}

fn write_script(dir: &Path, name: &str, script: &gemini_core::harness::MotionScript) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(script).unwrap()).unwrap();
    p
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "s.json", &Scenario::by_name("crouch").unwrap().script(1.0));
    let out = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let o = gemini(&["generate", "--script", s(&script), "--seed", seed, "--out", s(&p)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(p).unwrap()
    };
    let a = out("a.jsonl", "4");
    let b = out("b.jsonl", "4");
    let c = out("c.jsonl", "5");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 150);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"duration_ms": 0}"#).unwrap();
    let o = gemini(&["generate", "--script", s(&bad), "--out", s(&dir.path().join("x.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn infer_adds_pose_and_refuses_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "s.json", &Scenario::by_name("raise_right_arm").unwrap().script(1.0));
    let rec = dir.path().join("rec.skel.jsonl");
    assert!(gemini(&["generate", "--script", s(&script), "--seed", "1", "--out", s(&rec)]).status.success());
    let scheme = dir.path().join("mine.scheme.json");

    let o = gemini(&["infer", "--recording", s(&rec), "--pose-id", "raise", "--out", s(&scheme)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("raise ("));
    let doc = fs::read_to_string(&scheme).unwrap();
    let parsed = gemini_core::mapper::scheme::load_scheme(&doc).unwrap();
    assert_eq!(parsed.name, "mine");
    assert_eq!(parsed.poses.len(), 1);
    assert_eq!(parsed.to_canonical_json(), doc);

    let o = gemini(&["infer", "--recording", s(&rec), "--pose-id", "raise", "--out", s(&scheme)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DuplicateId"));

    let o = gemini(&[
        "infer", "--recording", s(&rec), "--pose-id", "raise2", "--out", s(&scheme), "--config", "nonsense=1",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = gemini(&[
        "infer", "--recording", s(&rec), "--pose-id", "raise2", "--out", s(&scheme), "--config",
        "band_tolerance_m=0.12",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn infer_on_idle_recording_fails() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "idle.json", &idle_script());
    let rec = dir.path().join("idle.skel.jsonl");
    assert!(gemini(&["generate", "--script", s(&script), "--seed", "2", "--out", s(&rec)]).status.success());
    let o = gemini(&[
        "infer",
        "--recording",
        s(&rec),
        "--pose-id",
        "nothing",
        "--out",
        s(&dir.path().join("x.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("no relevant motion"), "{}", stderr(&o));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn run_reproduces_golden_log() {
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("events.jsonl");
    let o = gemini(&[
        "run",
        "--scheme",
        s(&fixture("skyrim.scheme.json")),
        "--skeleton",
        s(&fixture("skyrim.skel.jsonl")),
        "--transcript",
        s(&fixture("skyrim.words.jsonl")),
        "--sink",
        s(&sink),
        "--virtual-time",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("frames=600 tokens=9 "), "{}", stdout(&o));
    assert_eq!(
        fs::read(&sink).unwrap(),
        fs::read(fixture("skyrim.golden.events.jsonl")).unwrap()
    );
}

#[test]
fn run_with_buttons_moves_the_mouse() {
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("events.jsonl");
    let o = gemini(&[
        "--json",
        "run",
        "--scheme",
        s(&fixture("skyrim.scheme.json")),
        "--skeleton",
        s(&fixture("skyrim.skel.jsonl")),
        "--buttons",
        s(&fixture("skyrim.buttons.jsonl")),
        "--sink",
        s(&sink),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["metrics"]["device_events"], 6);
    let log = fs::read_to_string(&sink).unwrap();
    let moved: i64 = log
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["kind"] == "mouse_delta" && v["t"].as_u64().unwrap() <= 1500)
        .map(|v| v["dx"].as_i64().unwrap())
        .sum();
    // Full right deflection at 600 px/s for one second.
    assert_eq!(moved, 600);
    assert!(log.contains(r#""kind":"mouse_down","button":"mouse_right""#));
}

#[test]
fn run_reports_bad_record() {
    let dir = tempfile::tempdir().unwrap();
    let skel = dir.path().join("cut.skel.jsonl");
    let text = fs::read_to_string(fixture("skyrim.skel.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().take(20).collect();
    let broken = &lines[11][..40];
    lines[11] = broken;
    fs::write(&skel, lines.join("\n")).unwrap();
    let o = gemini(&[
        "run",
        "--scheme",
        s(&fixture("skyrim.scheme.json")),
        "--skeleton",
        s(&skel),
        "--sink",
        s(&dir.path().join("e.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DecodeError"), "{}", stderr(&o));
}
