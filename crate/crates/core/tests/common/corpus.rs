//! Malformed documents, each paired with the structured error it must yield.

use gemini_core::grammar::TranscriptToken;
use gemini_core::harness::records::StreamRecord;
use gemini_core::harness::DeviceEvent;
use gemini_core::mapper::scheme::validate_document;
use gemini_core::mapper::OutputEvent;
use gemini_core::skeleton::{decode_stream, DecodeError, StreamError};
use serde_json::{json, Value};

pub enum Expect {
    /// Scheme error code and document path.
    Scheme(&'static str, &'static str),
    /// Skeleton error code and 1-based record.
    Skeleton(&'static str, usize),
    Transcript,
    Buttons,
    Event,
}

pub struct Case {
    pub name: &'static str,
    pub document: String,
    pub expect: Expect,
}

pub fn base_scheme() -> Value {
    json!({
        "format_version": 1,
        "name": "corpus",
        "poses": [
            {"pose_id": "raise", "constraints": [
                {"type": "above_of", "a": "hand_right", "b": "head", "margin": 0.1}
            ]},
            {"pose_id": "step", "constraints": [
                {"type": "in_front", "a": "foot_right", "b": "foot_left", "margin": 0.2}
            ]}
        ],
        "phrases": [
            {"phrase_id": "buy", "words": ["buy"]},
            {"phrase_id": "see_you", "words": ["see", "you"]}
        ],
        "devices": [{"device_id": "pad", "buttons": ["a"], "analog": true}],
        "mappings": [
            {"trigger": {"pose": "step"},
             "on_activate": [{"action": "key_hold_start", "key": "w", "repeat_hz": 10}],
             "on_deactivate": [{"action": "key_hold_stop", "key": "w"}]},
            {"trigger": {"phrase": ["buy"]},
             "on_activate": [{"action": "key_press", "key": "enter"}]}
        ]
    })
}

fn scheme(name: &'static str, edit: impl FnOnce(&mut Value), code: &'static str, path: &'static str) -> Case {
    let mut doc = base_scheme();
    edit(&mut doc);
    Case {
        name,
        document: doc.to_string(),
        expect: Expect::Scheme(code, path),
    }
}

fn skeleton_line(t: u64) -> Value {
    let names = [
        "head", "shoulder_center", "shoulder_left", "shoulder_right", "elbow_left", "elbow_right",
        "wrist_left", "wrist_right", "hand_left", "hand_right", "spine", "hip_center", "hip_left",
        "hip_right", "knee_left", "knee_right", "ankle_left", "ankle_right", "foot_left", "foot_right",
    ];
    let joints: serde_json::Map<String, Value> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), json!([0.01 * i as f64, 1.0, 2.0])))
        .collect();
    json!({"t": t, "joints": joints})
}

fn skeleton(name: &'static str, lines: Vec<String>, code: &'static str, record: usize) -> Case {
    Case {
        name,
        document: lines.join("\n") + "\n",
        expect: Expect::Skeleton(code, record),
    }
}

pub fn cases() -> Vec<Case> {
    let good = |t| skeleton_line(t).to_string();
    let with_joints = |edit: &dyn Fn(&mut serde_json::Map<String, Value>)| {
        let mut v = skeleton_line(100);
        edit(v["joints"].as_object_mut().unwrap());
        v.to_string()
    };
    vec![
        Case {
            name: "scheme_not_json",
            document: "{\"format_version\": 1,".into(),
            expect: Expect::Scheme("ParseError", ""),
        },
        scheme("scheme_future_version", |d| d["format_version"] = json!(2), "UnsupportedVersion", "format_version"),
        scheme(
            "scheme_missing_name",
            |d| {
                d.as_object_mut().unwrap().remove("name");
            },
            "ParseError",
            "",
        ),
        scheme("scheme_unknown_field", |d| d["colour"] = json!("red"), "ParseError", "colour"),
        scheme(
            "constraint_unknown_joint",
            |d| d["poses"][0]["constraints"][0]["a"] = json!("tail"),
            "ParseError",
            "poses[0].constraints[0]",
        ),
        scheme(
            "constraint_unknown_type",
            |d| d["poses"][0]["constraints"][0]["type"] = json!("beside"),
            "ParseError",
            "poses[0].constraints[0].type",
        ),
        scheme(
            "distance_band_inverted",
            |d| {
                d["poses"][0]["constraints"][0] =
                    json!({"type": "distance", "a": "hand_left", "b": "hand_right", "min": 0.5, "max": 0.2})
            },
            "InvalidConstraint",
            "poses[0].constraints[0]",
        ),
        scheme(
            "negative_margin",
            |d| d["poses"][1]["constraints"][0]["margin"] = json!(-0.1),
            "InvalidConstraint",
            "poses[1].constraints[0]",
        ),
        scheme(
            "constraint_same_joint",
            |d| d["poses"][0]["constraints"][0]["b"] = json!("hand_right"),
            "InvalidConstraint",
            "poses[0].constraints[0]",
        ),
        scheme("duplicate_pose_id", |d| d["poses"][1]["pose_id"] = json!("raise"), "DuplicateId", "poses[1].pose_id"),
        scheme("pose_without_constraints", |d| d["poses"][0]["constraints"] = json!([]), "InvalidPose", "poses[0].constraints"),
        scheme("zero_activate_frames", |d| d["poses"][0]["activate_frames"] = json!(0), "InvalidPose", "poses[0]"),
        scheme(
            "mapping_unknown_pose",
            |d| d["mappings"][0]["trigger"] = json!({"pose": "fly"}),
            "UnknownReference",
            "mappings[0].trigger",
        ),
        scheme(
            "mapping_unknown_button",
            |d| {
                d["mappings"][1]["trigger"] = json!({"button": {"device": "pad", "button": "b"}});
            },
            "UnknownReference",
            "mappings[1].trigger",
        ),
        scheme(
            "action_unknown_key",
            |d| d["mappings"][1]["on_activate"][0]["key"] = json!("hyper"),
            "ParseError",
            "mappings[1].on_activate[0]",
        ),
        scheme(
            "repeat_rate_too_high",
            |d| d["mappings"][0]["on_activate"][0]["repeat_hz"] = json!(500),
            "InvalidAction",
            "mappings[0].on_activate[0]",
        ),
        scheme(
            "hold_never_stopped",
            |d| d["mappings"][0]["on_deactivate"] = json!([]),
            "UnbalancedHold",
            "mappings[0].on_activate",
        ),
        scheme(
            "phrase_release_actions",
            |d| d["mappings"][1]["on_deactivate"] = json!([{"action": "key_press", "key": "a"}]),
            "InvalidMapping",
            "mappings[1].on_deactivate",
        ),
        scheme(
            "empty_phrase_list",
            |d| d["mappings"][1]["trigger"] = json!({"phrase": []}),
            "InvalidMapping",
            "mappings[1].trigger",
        ),
        scheme(
            "duplicate_phrase_words",
            |d| d["phrases"][1]["words"] = json!(["BUY"]),
            "DuplicatePhraseWords",
            "phrases[1].words",
        ),
        scheme(
            "phrase_too_long",
            |d| d["phrases"][1]["words"] = json!(["a", "b", "c", "d", "e", "f"]),
            "InvalidPhrase",
            "phrases[1]",
        ),
        scheme(
            "inference_overlap_too_large",
            |d| d["inference"] = json!({"window_ms": 1000, "window_overlap_ms": 1000}),
            "InvalidInference",
            "inference",
        ),
        skeleton("skeleton_truncated", vec![good(0), "{\"t\":33,\"joints\":{\"head\":[0".into()], "MalformedRecord", 2),
        skeleton(
            "skeleton_missing_joint",
            vec![with_joints(&|j| {
                j.remove("foot_left");
            })],
            "MissingJoint",
            1,
        ),
        skeleton(
            "skeleton_unknown_joint",
            vec![with_joints(&|j| {
                j.insert("tail".into(), json!([0.0, 0.0, 2.0]));
            })],
            "UnknownJoint",
            1,
        ),
        skeleton(
            "skeleton_duplicate_joint",
            vec![good(0), good(33), skeleton_line(66).to_string().replacen("\"head\"", "\"spine\":[0,1,2],\"head\"", 1)],
            "DuplicateJoint",
            3,
        ),
        skeleton(
            "skeleton_overflowing_coordinate",
            vec![good(0).replacen("[0.0,1.0,2.0]", "[1e400,1.0,2.0]", 1)],
            "NonFiniteCoordinate",
            1,
        ),
        skeleton(
            "skeleton_two_component_coordinate",
            vec![good(0).replacen("[0.0,1.0,2.0]", "[0.0,1.0]", 1)],
            "MalformedRecord",
            1,
        ),
        skeleton("skeleton_time_goes_back", vec![good(100), good(50)], "NonMonotonic", 2),
        skeleton("skeleton_repeated_timestamp", vec![good(100), good(100)], "NonMonotonic", 2),
        Case {
            name: "transcript_missing_word",
            document: r#"{"t":10}"#.into(),
            expect: Expect::Transcript,
        },
        Case {
            name: "buttons_bad_state",
            document: r#"{"t":10,"device":"pad","button":"a","state":"pressed"}"#.into(),
            expect: Expect::Buttons,
        },
        Case {
            name: "buttons_button_and_analog",
            document: r#"{"t":10,"device":"pad","button":"a","state":"down","analog":[0.0,1.0]}"#.into(),
            expect: Expect::Buttons,
        },
        Case {
            name: "event_unknown_kind",
            document: r#"{"t":10,"kind":"key_tap","key":"w"}"#.into(),
            expect: Expect::Event,
        },
        Case {
            name: "event_key_down_without_key",
            document: r#"{"t":10,"kind":"key_down"}"#.into(),
            expect: Expect::Event,
        },
    ]
}

fn skeleton_code(e: &DecodeError) -> &'static str {
    e.code()
}

/// `Ok` when the case yields exactly its designated error.
pub fn check(case: &Case) -> Result<(), String> {
    match case.expect {
        Expect::Scheme(code, path) => match validate_document(&case.document) {
            Ok(_) => Err("document was accepted".into()),
            Err(errors) => {
                let first = &errors[0];
                if first.code.as_str() == code && first.path == path {
                    Ok(())
                } else {
                    Err(format!("got {} at `{}`: {}", first.code, first.path, first.message))
                }
            }
        },
        Expect::Skeleton(code, record) => match decode_stream(&case.document) {
            Ok(_) => Err("stream was accepted".into()),
            Err(e) => {
                let got = match &e {
                    StreamError::Decode { source, .. } => skeleton_code(source),
                    StreamError::NonMonotonic { .. } => "NonMonotonic",
                };
                if got == code && e.record() == record {
                    Ok(())
                } else {
                    Err(format!("got {got} at record {}: {e}", e.record()))
                }
            }
        },
        Expect::Transcript => TranscriptToken::decode_record(&case.document)
            .map(|t| Err(format!("accepted {t:?}")))
            .unwrap_or(Ok(())),
        Expect::Buttons => DeviceEvent::decode_record(&case.document)
            .map(|t| Err(format!("accepted {t:?}")))
            .unwrap_or(Ok(())),
        Expect::Event => OutputEvent::decode(&case.document)
            .map(|t| Err(format!("accepted {t:?}")))
            .unwrap_or(Ok(())),
    }
}
