//! Interaction scheme documents (`.scheme.json`): parsing, validation and
//! canonical serialization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::keys::{Key, MouseButton};
use crate::constraint::PoseDefinition;
use crate::grammar::Phrase;
use crate::inference::InferenceConfig;

pub const FORMAT_VERSION: u32 = 1;

fn is_false(b: &bool) -> bool {
    !*b
}

fn default_scale() -> f64 {
    1.0
}

/// One output action. `repeat_hz` 0 holds the key down without repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    KeyPress {
        key: Key,
    },
    KeyHoldStart {
        key: Key,
        repeat_hz: u32,
    },
    KeyHoldStop {
        key: Key,
    },
    /// Sets the mouse velocity to `(dx, dy) * scale` pixels per second. For
    /// analog triggers the stick position multiplies `dx` and `dy`.
    MouseMove {
        dx: f64,
        dy: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    MouseButtonPress {
        button: MouseButton,
    },
    MouseButtonHoldStart {
        button: MouseButton,
    },
    MouseButtonHoldStop {
        button: MouseButton,
    },
}

pub const MAX_REPEAT_HZ: u32 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TriggerPattern {
    Pose(String),
    /// Any of the listed phrases.
    Phrase(Vec<String>),
    Button { device: String, button: String },
    Analog { device: String },
}

impl TriggerPattern {
    /// Whether the trigger has a release half (pose deactivation, button up).
    pub fn has_release(&self) -> bool {
        matches!(self, TriggerPattern::Pose(_) | TriggerPattern::Button { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mapping {
    pub trigger: TriggerPattern,
    #[serde(default)]
    pub on_activate: Vec<Action>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_deactivate: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub device_id: String,
    #[serde(default)]
    pub buttons: Vec<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub analog: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionScheme {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub poses: Vec<PoseDefinition>,
    #[serde(default)]
    pub phrases: Vec<Phrase>,
    #[serde(default)]
    pub devices: Vec<Device>,
    #[serde(default)]
    pub mappings: Vec<Mapping>,
    #[serde(default)]
    pub inference: InferenceConfig,
}

impl InteractionScheme {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            name: name.into(),
            poses: Vec::new(),
            phrases: Vec::new(),
            devices: Vec::new(),
            mappings: Vec::new(),
            inference: InferenceConfig::default(),
        }
    }

    pub fn pose(&self, pose_id: &str) -> Option<&PoseDefinition> {
        self.poses.iter().find(|p| p.pose_id == pose_id)
    }

    /// Canonical pretty-printed document, newline terminated.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scheme serializes");
        s.push('\n');
        s
    }

    /// Every structural problem, in document order.
    pub fn validate(&self) -> Vec<SchemeError> {
        validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SchemeErrorCode {
    ParseError,
    UnsupportedVersion,
    DuplicateId,
    UnknownReference,
    UnbalancedHold,
    InvalidPose,
    InvalidConstraint,
    InvalidPhrase,
    DuplicatePhraseWords,
    InvalidAction,
    InvalidMapping,
    InvalidInference,
}

impl SchemeErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeErrorCode::ParseError => "ParseError",
            SchemeErrorCode::UnsupportedVersion => "UnsupportedVersion",
            SchemeErrorCode::DuplicateId => "DuplicateId",
            SchemeErrorCode::UnknownReference => "UnknownReference",
            SchemeErrorCode::UnbalancedHold => "UnbalancedHold",
            SchemeErrorCode::InvalidPose => "InvalidPose",
            SchemeErrorCode::InvalidConstraint => "InvalidConstraint",
            SchemeErrorCode::InvalidPhrase => "InvalidPhrase",
            SchemeErrorCode::DuplicatePhraseWords => "DuplicatePhraseWords",
            SchemeErrorCode::InvalidAction => "InvalidAction",
            SchemeErrorCode::InvalidMapping => "InvalidMapping",
            SchemeErrorCode::InvalidInference => "InvalidInference",
        }
    }
}

impl fmt::Display for SchemeErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validation failure with its location in the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{code} at {path}: {message}")]
pub struct SchemeError {
    pub code: SchemeErrorCode,
    pub path: String,
    pub message: String,
}

impl SchemeError {
    fn new(code: SchemeErrorCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Parses a document without cross-reference validation.
pub fn parse_scheme(document: &str) -> Result<InteractionScheme, SchemeError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let scheme: InteractionScheme = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." || path == "?" { String::new() } else { path };
        SchemeError::new(SchemeErrorCode::ParseError, path, e.into_inner().to_string())
    })?;
    if scheme.format_version != FORMAT_VERSION {
        return Err(SchemeError::new(
            SchemeErrorCode::UnsupportedVersion,
            "format_version",
            format!("format_version {} is not supported (expected {FORMAT_VERSION})", scheme.format_version),
        ));
    }
    Ok(scheme)
}

/// Parses and validates a scheme document, reporting the first error.
pub fn load_scheme(document: &str) -> Result<InteractionScheme, SchemeError> {
    let scheme = parse_scheme(document)?;
    match validate(&scheme).into_iter().next() {
        Some(err) => Err(err),
        None => Ok(scheme),
    }
}

/// Parses and validates a scheme document, reporting every error.
pub fn validate_document(document: &str) -> Result<InteractionScheme, Vec<SchemeError>> {
    let scheme = parse_scheme(document).map_err(|e| vec![e])?;
    let errors = validate(&scheme);
    if errors.is_empty() {
        Ok(scheme)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Holdable {
    Key(Key),
    Button(MouseButton),
}

impl fmt::Display for Holdable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holdable::Key(k) => write!(f, "{k}"),
            Holdable::Button(b) => write!(f, "{b}"),
        }
    }
}

enum HoldOp {
    Start(Holdable),
    Stop(Holdable),
}

fn hold_op(action: &Action) -> Option<HoldOp> {
    match *action {
        Action::KeyHoldStart { key, .. } => Some(HoldOp::Start(Holdable::Key(key))),
        Action::KeyHoldStop { key } => Some(HoldOp::Stop(Holdable::Key(key))),
        Action::MouseButtonHoldStart { button } => Some(HoldOp::Start(Holdable::Button(button))),
        Action::MouseButtonHoldStop { button } => Some(HoldOp::Stop(Holdable::Button(button))),
        _ => None,
    }
}

fn check_action(action: &Action, path: &str, errors: &mut Vec<SchemeError>) {
    match *action {
        Action::KeyHoldStart { repeat_hz, .. } if repeat_hz > MAX_REPEAT_HZ => {
            errors.push(SchemeError::new(
                SchemeErrorCode::InvalidAction,
                path,
                format!("repeat_hz {repeat_hz} outside 0 (continuous) or 1..={MAX_REPEAT_HZ}"),
            ));
        }
        Action::MouseMove { dx, dy, scale } if !(dx.is_finite() && dy.is_finite() && scale.is_finite()) => {
            errors.push(SchemeError::new(
                SchemeErrorCode::InvalidAction,
                path,
                "mouse_move parameters must be finite",
            ));
        }
        _ => {}
    }
}

fn check_holds(m: &Mapping, path: &str, errors: &mut Vec<SchemeError>) {
    let unbalanced = |list: &str, what: Holdable, why: &str| {
        SchemeError::new(
            SchemeErrorCode::UnbalancedHold,
            format!("{path}.{list}"),
            format!("hold on `{what}` {why}"),
        )
    };
    let mut held: BTreeMap<Holdable, ()> = BTreeMap::new();
    for action in &m.on_activate {
        match hold_op(action) {
            Some(HoldOp::Start(h)) => {
                if held.insert(h, ()).is_some() {
                    errors.push(unbalanced("on_activate", h, "is started twice"));
                    return;
                }
            }
            Some(HoldOp::Stop(h)) => {
                if held.remove(&h).is_none() {
                    errors.push(unbalanced("on_activate", h, "is stopped without being started"));
                    return;
                }
            }
            None => {}
        }
    }
    if !m.trigger.has_release() {
        if let Some(h) = held.keys().next() {
            errors.push(unbalanced("on_activate", *h, "is never stopped"));
        }
        return;
    }
    for action in &m.on_deactivate {
        match hold_op(action) {
            Some(HoldOp::Start(h)) => {
                errors.push(unbalanced("on_deactivate", h, "is started on release"));
                return;
            }
            Some(HoldOp::Stop(h)) => {
                if held.remove(&h).is_none() {
                    errors.push(unbalanced("on_deactivate", h, "is stopped without being started"));
                    return;
                }
            }
            None => {}
        }
    }
    if let Some(h) = held.keys().next() {
        errors.push(unbalanced("on_activate", *h, "has no matching stop in on_deactivate"));
    }
}

fn validate(s: &InteractionScheme) -> Vec<SchemeError> {
    use SchemeErrorCode::*;
    let mut errors = Vec::new();

    let mut pose_ids = HashSet::new();
    for (i, pose) in s.poses.iter().enumerate() {
        let path = format!("poses[{i}]");
        if pose.pose_id.is_empty() {
            errors.push(SchemeError::new(InvalidPose, format!("{path}.pose_id"), "empty pose id"));
        } else if !pose_ids.insert(pose.pose_id.as_str()) {
            errors.push(SchemeError::new(
                DuplicateId,
                format!("{path}.pose_id"),
                format!("duplicate pose id `{}`", pose.pose_id),
            ));
        }
        if pose.constraints.is_empty() {
            errors.push(SchemeError::new(
                InvalidPose,
                format!("{path}.constraints"),
                "a pose needs at least one constraint",
            ));
        }
        if pose.activate_frames == 0 || pose.release_frames == 0 {
            errors.push(SchemeError::new(
                InvalidPose,
                path.clone(),
                "activate_frames and release_frames must be positive",
            ));
        }
        for (j, c) in pose.constraints.iter().enumerate() {
            if let Err(e) = c.validate() {
                errors.push(SchemeError::new(
                    InvalidConstraint,
                    format!("{path}.constraints[{j}]"),
                    e.to_string(),
                ));
            }
        }
    }

    let mut phrase_ids = HashSet::new();
    let mut phrase_words: HashMap<Vec<String>, &str> = HashMap::new();
    for (i, phrase) in s.phrases.iter().enumerate() {
        let path = format!("phrases[{i}]");
        if let Err(e) = phrase.validate() {
            errors.push(SchemeError::new(InvalidPhrase, path, e.to_string()));
            continue;
        }
        if !phrase_ids.insert(phrase.phrase_id.as_str()) {
            errors.push(SchemeError::new(
                DuplicateId,
                format!("{path}.phrase_id"),
                format!("duplicate phrase id `{}`", phrase.phrase_id),
            ));
        }
        let words: Vec<String> = phrase.words.iter().map(|w| w.to_lowercase()).collect();
        if let Some(other) = phrase_words.insert(words, &phrase.phrase_id) {
            errors.push(SchemeError::new(
                DuplicatePhraseWords,
                format!("{path}.words"),
                format!("same words as phrase `{other}`"),
            ));
        }
    }

    let mut devices: HashMap<&str, &Device> = HashMap::new();
    for (i, device) in s.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        if devices.insert(&device.device_id, device).is_some() {
            errors.push(SchemeError::new(
                DuplicateId,
                format!("{path}.device_id"),
                format!("duplicate device id `{}`", device.device_id),
            ));
        }
        let mut buttons = HashSet::new();
        for (j, b) in device.buttons.iter().enumerate() {
            if !buttons.insert(b) {
                errors.push(SchemeError::new(
                    DuplicateId,
                    format!("{path}.buttons[{j}]"),
                    format!("duplicate button `{b}`"),
                ));
            }
        }
    }

    for (i, m) in s.mappings.iter().enumerate() {
        let path = format!("mappings[{i}]");
        let trigger_path = format!("{path}.trigger");
        let unknown = |what: String| SchemeError::new(UnknownReference, trigger_path.clone(), what);
        match &m.trigger {
            TriggerPattern::Pose(id) => {
                if !pose_ids.contains(id.as_str()) {
                    errors.push(unknown(format!("unknown pose `{id}`")));
                }
            }
            TriggerPattern::Phrase(ids) => {
                if ids.is_empty() {
                    errors.push(SchemeError::new(InvalidMapping, trigger_path.clone(), "empty phrase list"));
                }
                for id in ids {
                    if !phrase_ids.contains(id.as_str()) {
                        errors.push(unknown(format!("unknown phrase `{id}`")));
                    }
                }
            }
            TriggerPattern::Button { device, button } => match devices.get(device.as_str()) {
                None => errors.push(unknown(format!("unknown device `{device}`"))),
                Some(d) if !d.buttons.contains(button) => {
                    errors.push(unknown(format!("device `{device}` has no button `{button}`")))
                }
                Some(_) => {}
            },
            TriggerPattern::Analog { device } => match devices.get(device.as_str()) {
                None => errors.push(unknown(format!("unknown device `{device}`"))),
                Some(d) if !d.analog => {
                    errors.push(unknown(format!("device `{device}` has no analog input")))
                }
                Some(_) => {}
            },
        }
        for (k, a) in m.on_activate.iter().enumerate() {
            check_action(a, &format!("{path}.on_activate[{k}]"), &mut errors);
        }
        for (k, a) in m.on_deactivate.iter().enumerate() {
            check_action(a, &format!("{path}.on_deactivate[{k}]"), &mut errors);
        }
        if !m.trigger.has_release() && !m.on_deactivate.is_empty() {
            errors.push(SchemeError::new(
                InvalidMapping,
                format!("{path}.on_deactivate"),
                "phrase and analog triggers have no release",
            ));
        } else {
            check_holds(m, &path, &mut errors);
        }
    }

    if let Err(e) = s.inference.validate() {
        errors.push(SchemeError::new(InvalidInference, "inference", e.to_string()));
    }
    errors
}
