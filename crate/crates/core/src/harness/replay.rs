//! File replay in virtual or wall-clock time.

use std::fs;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use super::{HarnessError, StreamRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplayMode {
    /// Deliver records as fast as they are consumed.
    Virtual,
    /// Pace delivery at `timestamp / speed_factor` of wall-clock time.
    Realtime { speed_factor: f64 },
}

impl ReplayMode {
    pub fn realtime(speed_factor: f64) -> Result<Self, HarnessError> {
        if !speed_factor.is_finite() || speed_factor <= 0.0 {
            return Err(HarnessError::InvalidSpeed(speed_factor));
        }
        Ok(ReplayMode::Realtime { speed_factor })
    }
}

/// Decodes newline-delimited records; errors name the 1-based record index.
/// Blank lines are ignored but still counted.
pub fn decode_records<R: StreamRecord>(text: &str) -> Result<Vec<R>, HarnessError> {
    let mut out: Vec<R> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r = R::decode_record(line).map_err(|message| HarnessError::Decode { record, message })?;
        if let Some(prev) = out.last() {
            let (p, t) = (prev.timestamp_ms(), r.timestamp_ms());
            if t < p || (R::STRICT && t == p) {
                return Err(HarnessError::Decode {
                    record,
                    message: format!("timestamp {t} does not follow {p}"),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_all<R: StreamRecord>(path: &Path) -> Result<Vec<R>, HarnessError> {
    decode_records(&fs::read_to_string(path)?)
}

/// Iterator over a decoded file.
pub struct Replay<R> {
    records: std::vec::IntoIter<R>,
    mode: ReplayMode,
    origin: Option<(Instant, u64)>,
}

impl<R: StreamRecord> Replay<R> {
    pub fn new(records: Vec<R>, mode: ReplayMode) -> Self {
        Self {
            records: records.into_iter(),
            mode,
            origin: None,
        }
    }
}

impl<R: StreamRecord> Iterator for Replay<R> {
    type Item = R;

    fn next(&mut self) -> Option<R> {
        let r = self.records.next()?;
        if let ReplayMode::Realtime { speed_factor } = self.mode {
            let t = r.timestamp_ms();
            let (start, t0) = *self.origin.get_or_insert((Instant::now(), t));
            let offset = Duration::from_secs_f64((t - t0) as f64 / 1000.0 / speed_factor);
            let due = start + offset;
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.records.size_hint()
    }
}

/// Opens and fully decodes `path`, then yields its records in `mode`.
pub fn replay<R: StreamRecord>(path: &Path, mode: ReplayMode) -> Result<Replay<R>, HarnessError> {
    Ok(Replay::new(read_all(path)?, mode))
}
