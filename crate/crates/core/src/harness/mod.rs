//! Input sources: file replay, live socket ingestion and synthetic skeleton
//! generation.

pub mod generator;
pub mod live;
pub mod queue;
pub mod records;
pub mod replay;
pub mod scenarios;

use thiserror::Error;

pub use generator::{generate, standing_posture, Keyframe, MotionScript};
pub use live::{listen, listen_persistent, LiveSource};
pub use queue::BoundedQueue;
pub use records::{DeviceEvent, DeviceInput, StreamKind, StreamRecord};
pub use replay::{decode_records, replay, read_all, ReplayMode, Replay};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid motion script: {0}")]
    InvalidScript(String),
    #[error("cannot bind port {port}: {source}")]
    BindFailure {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("speed factor {0} must be finite and positive")]
    InvalidSpeed(f64),
    #[error("record {record}: {message}")]
    Decode { record: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Replay { path: std::path::PathBuf, speed_factor: f64 },
    Socket { port: u16 },
    Synthetic { script: MotionScript, seed: u64 },
}

impl SourceSpec {
    /// Parses `tcp:PORT` or a file path.
    pub fn parse(s: &str) -> Result<Self, String> {
        if let Some(port) = s.strip_prefix("tcp:") {
            let port = port.parse().map_err(|_| format!("invalid port in `{s}`"))?;
            return Ok(SourceSpec::Socket { port });
        }
        if s.is_empty() {
            return Err("empty source".into());
        }
        Ok(SourceSpec::Replay {
            path: s.into(),
            speed_factor: 1.0,
        })
    }
}
