//! Output event sinks.

use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::OutputEvent;

/// First line of every `.events.jsonl` log.
pub const EVENT_LOG_HEADER: &str = r#"{"format_version":1,"stream":"events"}"#;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("sink is closed")]
    SinkClosed,
    #[error("sink i/o: {0}")]
    Io(#[from] io::Error),
}

/// Destination for synthesized events. OS-level injection would be another
/// implementation of this trait.
pub trait EventSink: Send {
    fn emit(&mut self, events: &[OutputEvent]) -> Result<(), SinkError>;

    fn close(&mut self) -> Result<(), SinkError>;
}

/// Writes the canonical event log.
pub struct EventLogSink<W: Write + Send> {
    writer: Option<W>,
}

impl<W: Write + Send> EventLogSink<W> {
    pub fn new(mut writer: W) -> Result<Self, SinkError> {
        writeln!(writer, "{EVENT_LOG_HEADER}")?;
        Ok(Self {
            writer: Some(writer),
        })
    }

    pub fn into_inner(mut self) -> Option<W> {
        self.writer.take()
    }
}

impl<W: Write + Send> EventSink for EventLogSink<W> {
    fn emit(&mut self, events: &[OutputEvent]) -> Result<(), SinkError> {
        let writer = self.writer.as_mut().ok_or(SinkError::SinkClosed)?;
        let mut sorted = events.to_vec();
        sorted.sort_by_key(|e| e.timestamp_ms);
        for e in &sorted {
            writeln!(writer, "{}", e.encode())?;
        }
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        match self.writer.as_mut() {
            Some(w) => {
                w.flush()?;
                self.writer = None;
                Ok(())
            }
            None => Err(SinkError::SinkClosed),
        }
    }
}

/// Discards events.
#[derive(Debug, Default)]
pub struct NullSink {
    closed: bool,
    pub count: u64,
}

impl EventSink for NullSink {
    fn emit(&mut self, events: &[OutputEvent]) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::SinkClosed);
        }
        self.count += events.len() as u64;
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        if std::mem::replace(&mut self.closed, true) {
            return Err(SinkError::SinkClosed);
        }
        Ok(())
    }
}

/// Collects events in memory; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct CaptureSink {
    events: Arc<Mutex<Vec<OutputEvent>>>,
    closed: bool,
}

impl CaptureSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<OutputEvent> {
        self.events.lock().expect("capture lock").clone()
    }
}

impl EventSink for CaptureSink {
    fn emit(&mut self, events: &[OutputEvent]) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::SinkClosed);
        }
        let mut buf = self.events.lock().expect("capture lock");
        let start = buf.len();
        buf.extend_from_slice(events);
        buf[start..].sort_by_key(|e| e.timestamp_ms);
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        if std::mem::replace(&mut self.closed, true) {
            return Err(SinkError::SinkClosed);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{Key, OutputKind};

    fn three() -> Vec<OutputEvent> {
        vec![
            OutputEvent::new(1, OutputKind::KeyDown(Key::Char('a'))),
            OutputEvent::new(1, OutputKind::KeyUp(Key::Char('a'))),
            OutputEvent::new(2, OutputKind::MouseDelta { dx: 1, dy: 0 }),
        ]
    }

    #[test]
    fn log_lines_in_order() {
        let mut sink = EventLogSink::new(Vec::new()).unwrap();
        sink.emit(&three()).unwrap();
        let text = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], EVENT_LOG_HEADER);
        assert!(lines[1].contains("key_down") && lines[2].contains("key_up"));
    }

    #[test]
    fn closed_sinks_refuse_events() {
        let mut log = EventLogSink::new(Vec::new()).unwrap();
        log.close().unwrap();
        assert!(matches!(log.emit(&three()), Err(SinkError::SinkClosed)));
        let mut null = NullSink::default();
        null.close().unwrap();
        assert!(matches!(null.emit(&three()), Err(SinkError::SinkClosed)));
        let mut cap = CaptureSink::new();
        let view = cap.clone();
        cap.emit(&three()).unwrap();
        cap.close().unwrap();
        assert!(matches!(cap.emit(&three()), Err(SinkError::SinkClosed)));
        assert_eq!(view.events().len(), 3);
    }
}
