//! Trigger to keyboard/mouse translation.
//!
//! [`InputMapper`] resolves triggers against an [`InteractionScheme`];
//! [`SchedulerState`] owns held keys, repeat timers and mouse velocity. All
//! time is virtual: it enters through `now_ms` arguments only.

pub mod keys;
pub mod scheme;
pub mod sink;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use keys::{Key, MouseButton};
pub use scheme::{
    load_scheme, parse_scheme, validate_document, Action, Device, InteractionScheme, Mapping,
    SchemeError, SchemeErrorCode, TriggerPattern, FORMAT_VERSION,
};

/// A logical input event.
#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    PoseActivated(String),
    PoseDeactivated(String),
    Command(String),
    ButtonDown { device: String, button: String },
    ButtonUp { device: String, button: String },
    AnalogMove { device: String, x: f64, y: f64 },
}

impl Trigger {
    /// Analog move with components clamped to [-1, 1]; NaN becomes 0.
    pub fn analog(device: impl Into<String>, x: f64, y: f64) -> Self {
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Trigger::AnalogMove {
            device: device.into(),
            x: clamp(x),
            y: clamp(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    KeyDown(Key),
    KeyUp(Key),
    MouseDelta { dx: i64, dy: i64 },
    MouseButtonDown(MouseButton),
    MouseButtonUp(MouseButton),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputEvent {
    pub timestamp_ms: u64,
    pub kind: OutputKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    t: u64,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    key: Option<Key>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    button: Option<MouseButton>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    dx: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    dy: Option<i64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed event record: {0}")]
pub struct EventDecodeError(pub String);

impl OutputEvent {
    pub fn new(timestamp_ms: u64, kind: OutputKind) -> Self {
        Self { timestamp_ms, kind }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OutputKind::KeyDown(_) => "key_down",
            OutputKind::KeyUp(_) => "key_up",
            OutputKind::MouseDelta { .. } => "mouse_delta",
            OutputKind::MouseButtonDown(_) => "mouse_down",
            OutputKind::MouseButtonUp(_) => "mouse_up",
        }
    }

    /// One `.events.jsonl` line, without the newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(&self.record()).expect("event serializes")
    }

    fn record(&self) -> EventRecord {
        let mut rec = EventRecord {
            t: self.timestamp_ms,
            kind: self.kind_name().to_string(),
            key: None,
            button: None,
            dx: None,
            dy: None,
        };
        match self.kind {
            OutputKind::KeyDown(k) | OutputKind::KeyUp(k) => rec.key = Some(k),
            OutputKind::MouseButtonDown(b) | OutputKind::MouseButtonUp(b) => rec.button = Some(b),
            OutputKind::MouseDelta { dx, dy } => {
                rec.dx = Some(dx);
                rec.dy = Some(dy);
            }
        }
        rec
    }

    pub fn decode(line: &str) -> Result<Self, EventDecodeError> {
        let rec: EventRecord =
            serde_json::from_str(line).map_err(|e| EventDecodeError(e.to_string()))?;
        let missing = |what: &str| EventDecodeError(format!("{} needs `{what}`", rec.kind));
        let kind = match rec.kind.as_str() {
            "key_down" => OutputKind::KeyDown(rec.key.ok_or_else(|| missing("key"))?),
            "key_up" => OutputKind::KeyUp(rec.key.ok_or_else(|| missing("key"))?),
            "mouse_down" => OutputKind::MouseButtonDown(rec.button.ok_or_else(|| missing("button"))?),
            "mouse_up" => OutputKind::MouseButtonUp(rec.button.ok_or_else(|| missing("button"))?),
            "mouse_delta" => OutputKind::MouseDelta {
                dx: rec.dx.ok_or_else(|| missing("dx"))?,
                dy: rec.dy.ok_or_else(|| missing("dy"))?,
            },
            other => return Err(EventDecodeError(format!("unknown kind `{other}`"))),
        };
        Ok(OutputEvent::new(rec.t, kind))
    }
}

impl Serialize for OutputEvent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.record().serialize(serializer)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("clock went backwards: {now_ms} ms after {last_ms} ms")]
    ClockRegression { now_ms: u64, last_ms: u64 },
}

#[derive(Debug, Clone, PartialEq)]
struct KeyHold {
    count: u32,
    repeat_hz: u32,
    started_ms: u64,
    repeats: u64,
}

/// Held keys and buttons, repeat timers, and mouse motion state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchedulerState {
    now_ms: Option<u64>,
    key_holds: BTreeMap<Key, KeyHold>,
    button_holds: BTreeMap<MouseButton, u32>,
    velocity: (f64, f64),
    mouse_last_ms: u64,
    remainder: (f64, f64),
    unmapped: u64,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> Option<u64> {
        self.now_ms
    }

    /// Triggers that matched no mapping.
    pub fn unmapped_triggers(&self) -> u64 {
        self.unmapped
    }

    pub fn held_keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.key_holds.keys().copied()
    }

    pub fn held_buttons(&self) -> impl Iterator<Item = MouseButton> + '_ {
        self.button_holds.keys().copied()
    }

    /// Current mouse velocity in pixels per second.
    pub fn mouse_velocity(&self) -> (f64, f64) {
        self.velocity
    }

    /// Emits everything due up to `now_ms`: hold repeats in timestamp order,
    /// then one integrated mouse delta.
    pub fn advance(&mut self, now_ms: u64) -> Result<Vec<OutputEvent>, SchedulerError> {
        if let Some(last_ms) = self.now_ms {
            if now_ms < last_ms {
                return Err(SchedulerError::ClockRegression { now_ms, last_ms });
            }
        } else {
            self.mouse_last_ms = now_ms;
        }
        self.now_ms = Some(now_ms);

        let mut repeats: Vec<(u64, Key)> = Vec::new();
        for (key, hold) in self.key_holds.iter_mut() {
            if hold.repeat_hz == 0 {
                continue;
            }
            let hz = hold.repeat_hz as u64;
            let due = (now_ms - hold.started_ms) * hz / 1000;
            for k in hold.repeats + 1..=due {
                repeats.push((hold.started_ms + k * 1000 / hz, *key));
            }
            hold.repeats = hold.repeats.max(due);
        }
        repeats.sort();
        let mut out = Vec::with_capacity(repeats.len() * 2 + 1);
        for (t, key) in repeats {
            out.push(OutputEvent::new(t, OutputKind::KeyUp(key)));
            out.push(OutputEvent::new(t, OutputKind::KeyDown(key)));
        }

        let elapsed_s = (now_ms - self.mouse_last_ms) as f64 / 1000.0;
        self.mouse_last_ms = now_ms;
        let x = self.velocity.0 * elapsed_s + self.remainder.0;
        let y = self.velocity.1 * elapsed_s + self.remainder.1;
        let (dx, dy) = (x.trunc(), y.trunc());
        self.remainder = (x - dx, y - dy);
        if dx != 0.0 || dy != 0.0 {
            out.push(OutputEvent::new(
                now_ms,
                OutputKind::MouseDelta {
                    dx: dx as i64,
                    dy: dy as i64,
                },
            ));
        }
        Ok(out)
    }

    fn apply(&mut self, action: &Action, analog: Option<(f64, f64)>, now: u64, out: &mut Vec<OutputEvent>) {
        let ev = |kind| OutputEvent::new(now, kind);
        match *action {
            Action::KeyPress { key } => {
                if self.key_holds.contains_key(&key) {
                    out.push(ev(OutputKind::KeyUp(key)));
                    out.push(ev(OutputKind::KeyDown(key)));
                } else {
                    out.push(ev(OutputKind::KeyDown(key)));
                    out.push(ev(OutputKind::KeyUp(key)));
                }
            }
            Action::KeyHoldStart { key, repeat_hz } => match self.key_holds.get_mut(&key) {
                Some(hold) => hold.count += 1,
                None => {
                    self.key_holds.insert(
                        key,
                        KeyHold {
                            count: 1,
                            repeat_hz,
                            started_ms: now,
                            repeats: 0,
                        },
                    );
                    out.push(ev(OutputKind::KeyDown(key)));
                }
            },
            Action::KeyHoldStop { key } => {
                if let Some(hold) = self.key_holds.get_mut(&key) {
                    hold.count -= 1;
                    if hold.count == 0 {
                        self.key_holds.remove(&key);
                        out.push(ev(OutputKind::KeyUp(key)));
                    }
                }
            }
            Action::MouseMove { dx, dy, scale } => {
                let (ax, ay) = analog.unwrap_or((1.0, 1.0));
                self.velocity = (ax * dx * scale, ay * dy * scale);
                if self.velocity.0 == 0.0 {
                    self.remainder.0 = 0.0;
                }
                if self.velocity.1 == 0.0 {
                    self.remainder.1 = 0.0;
                }
            }
            Action::MouseButtonPress { button } => {
                if self.button_holds.contains_key(&button) {
                    out.push(ev(OutputKind::MouseButtonUp(button)));
                    out.push(ev(OutputKind::MouseButtonDown(button)));
                } else {
                    out.push(ev(OutputKind::MouseButtonDown(button)));
                    out.push(ev(OutputKind::MouseButtonUp(button)));
                }
            }
            Action::MouseButtonHoldStart { button } => {
                let count = self.button_holds.entry(button).or_insert(0);
                *count += 1;
                if *count == 1 {
                    out.push(ev(OutputKind::MouseButtonDown(button)));
                }
            }
            Action::MouseButtonHoldStop { button } => {
                if let Some(count) = self.button_holds.get_mut(&button) {
                    *count -= 1;
                    if *count == 0 {
                        self.button_holds.remove(&button);
                        out.push(ev(OutputKind::MouseButtonUp(button)));
                    }
                }
            }
        }
    }

    /// Releases every held key and button and stops the mouse.
    pub fn release_all(&mut self, now_ms: u64) -> Result<Vec<OutputEvent>, SchedulerError> {
        let mut out = self.advance(now_ms)?;
        for key in std::mem::take(&mut self.key_holds).into_keys() {
            out.push(OutputEvent::new(now_ms, OutputKind::KeyUp(key)));
        }
        for button in std::mem::take(&mut self.button_holds).into_keys() {
            out.push(OutputEvent::new(now_ms, OutputKind::MouseButtonUp(button)));
        }
        self.velocity = (0.0, 0.0);
        self.remainder = (0.0, 0.0);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum TriggerKey {
    Pose(String),
    Phrase(String),
    Button(String, String),
    Analog(String),
}

/// A validated scheme with its trigger lookup tables.
#[derive(Debug, Clone)]
pub struct InputMapper {
    scheme: InteractionScheme,
    index: HashMap<TriggerKey, Vec<usize>>,
}

impl InputMapper {
    /// Validates the scheme; returns every error on failure.
    pub fn new(scheme: InteractionScheme) -> Result<Self, Vec<SchemeError>> {
        let errors = scheme.validate();
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut index: HashMap<TriggerKey, Vec<usize>> = HashMap::new();
        for (i, m) in scheme.mappings.iter().enumerate() {
            let keys = match &m.trigger {
                TriggerPattern::Pose(p) => vec![TriggerKey::Pose(p.clone())],
                TriggerPattern::Phrase(ps) => ps.iter().cloned().map(TriggerKey::Phrase).collect(),
                TriggerPattern::Button { device, button } => {
                    vec![TriggerKey::Button(device.clone(), button.clone())]
                }
                TriggerPattern::Analog { device } => vec![TriggerKey::Analog(device.clone())],
            };
            for k in keys {
                index.entry(k).or_default().push(i);
            }
        }
        Ok(Self { scheme, index })
    }

    pub fn from_document(document: &str) -> Result<Self, Vec<SchemeError>> {
        let scheme = validate_document(document)?;
        Self::new(scheme)
    }

    pub fn scheme(&self) -> &InteractionScheme {
        &self.scheme
    }

    pub fn into_scheme(self) -> InteractionScheme {
        self.scheme
    }

    /// Applies the actions mapped to `trig` at `now_ms`. Due repeats and
    /// mouse motion up to `now_ms` are emitted first.
    pub fn dispatch(
        &self,
        sched: &mut SchedulerState,
        trig: &Trigger,
        now_ms: u64,
    ) -> Result<Vec<OutputEvent>, SchedulerError> {
        let mut out = sched.advance(now_ms)?;
        let (key, release, analog) = match trig {
            Trigger::PoseActivated(p) => (TriggerKey::Pose(p.clone()), false, None),
            Trigger::PoseDeactivated(p) => (TriggerKey::Pose(p.clone()), true, None),
            Trigger::Command(p) => (TriggerKey::Phrase(p.clone()), false, None),
            Trigger::ButtonDown { device, button } => {
                (TriggerKey::Button(device.clone(), button.clone()), false, None)
            }
            Trigger::ButtonUp { device, button } => {
                (TriggerKey::Button(device.clone(), button.clone()), true, None)
            }
            Trigger::AnalogMove { device, x, y } => {
                (TriggerKey::Analog(device.clone()), false, Some((*x, *y)))
            }
        };
        let Some(mappings) = self.index.get(&key) else {
            sched.unmapped += 1;
            return Ok(out);
        };
        for &i in mappings {
            let m = &self.scheme.mappings[i];
            let actions = if release { &m.on_deactivate } else { &m.on_activate };
            for action in actions {
                sched.apply(action, analog, now_ms, &mut out);
            }
        }
        Ok(out)
    }

    /// Emits due hold repeats and mouse motion.
    pub fn tick(&self, sched: &mut SchedulerState, now_ms: u64) -> Result<Vec<OutputEvent>, SchedulerError> {
        sched.advance(now_ms)
    }
}
