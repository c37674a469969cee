//! Record types carried by replay files and live sockets.

use serde::{Deserialize, Serialize};

use crate::grammar::TranscriptToken;
use crate::mapper::Trigger;
use crate::skeleton::{decode_frame, encode_frame, SkeletonFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Skeleton,
    Transcript,
    Buttons,
}

impl StreamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamKind::Skeleton => "skeleton",
            StreamKind::Transcript => "transcript",
            StreamKind::Buttons => "buttons",
        }
    }
}

/// A newline-delimited record with a millisecond timestamp.
pub trait StreamRecord: Sized + Send + 'static {
    const KIND: StreamKind;
    /// Whether timestamps must strictly increase (otherwise non-decreasing).
    const STRICT: bool;

    fn decode_record(line: &str) -> Result<Self, String>;
    fn encode_record(&self) -> String;
    fn timestamp_ms(&self) -> u64;
}

impl StreamRecord for SkeletonFrame {
    const KIND: StreamKind = StreamKind::Skeleton;
    const STRICT: bool = true;

    fn decode_record(line: &str) -> Result<Self, String> {
        decode_frame(line).map_err(|e| e.to_string())
    }

    fn encode_record(&self) -> String {
        encode_frame(self)
    }

    fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }
}

impl StreamRecord for TranscriptToken {
    const KIND: StreamKind = StreamKind::Transcript;
    const STRICT: bool = false;

    fn decode_record(line: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            t: u64,
            word: String,
        }
        let raw: Raw = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok(TranscriptToken::new(raw.t, raw.word))
    }

    fn encode_record(&self) -> String {
        serde_json::to_string(self).expect("token serializes")
    }

    fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceInput {
    Button { button: String, down: bool },
    Analog { x: f64, y: f64 },
}

/// One auxiliary device sample (`.buttons.jsonl`).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEvent {
    pub timestamp_ms: u64,
    pub device: String,
    pub input: DeviceInput,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeviceEvent {
    t: u64,
    device: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    button: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    analog: Option<[f64; 2]>,
}

impl DeviceEvent {
    pub fn to_trigger(&self) -> Trigger {
        let device = self.device.clone();
        match &self.input {
            DeviceInput::Button { button, down: true } => Trigger::ButtonDown {
                device,
                button: button.clone(),
            },
            DeviceInput::Button { button, down: false } => Trigger::ButtonUp {
                device,
                button: button.clone(),
            },
            DeviceInput::Analog { x, y } => Trigger::analog(device, *x, *y),
        }
    }
}

impl StreamRecord for DeviceEvent {
    const KIND: StreamKind = StreamKind::Buttons;
    const STRICT: bool = false;

    fn decode_record(line: &str) -> Result<Self, String> {
        let raw: RawDeviceEvent = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let input = match (raw.button, raw.state.as_deref(), raw.analog) {
            (Some(button), Some("down"), None) => DeviceInput::Button { button, down: true },
            (Some(button), Some("up"), None) => DeviceInput::Button { button, down: false },
            (None, None, Some([x, y])) => DeviceInput::Analog { x, y },
            _ => {
                return Err(
                    "expected either `button` with `state` down/up, or `analog`: [x, y]".into(),
                )
            }
        };
        Ok(DeviceEvent {
            timestamp_ms: raw.t,
            device: raw.device,
            input,
        })
    }

    fn encode_record(&self) -> String {
        let mut raw = RawDeviceEvent {
            t: self.timestamp_ms,
            device: self.device.clone(),
            button: None,
            state: None,
            analog: None,
        };
        match &self.input {
            DeviceInput::Button { button, down } => {
                raw.button = Some(button.clone());
                raw.state = Some(if *down { "down" } else { "up" }.into());
            }
            DeviceInput::Analog { x, y } => raw.analog = Some([*x, *y]),
        }
        serde_json::to_string(&raw).expect("device event serializes")
    }

    fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }
}
