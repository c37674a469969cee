//! Drives a [`Session`] from input sources into an event sink.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use thiserror::Error;

use crate::engine::{merge_inputs, EngineError, InputEvent, MetricsSummary, Session};
use crate::harness::queue::{BoundedQueue, DEFAULT_CAPACITY};
use crate::harness::{
    generate, listen, read_all, DeviceEvent, HarnessError, LiveSource, Replay, ReplayMode, SourceSpec,
    StreamRecord,
};
use crate::mapper::sink::{EventSink, SinkError};
use crate::grammar::TranscriptToken;
use crate::skeleton::SkeletonFrame;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stream} source: {source}")]
    Source {
        stream: &'static str,
        #[source]
        source: HarnessError,
    },
    #[error("{stream} source: synthetic scripts only produce skeleton frames")]
    UnsupportedSource { stream: &'static str },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sink(#[from] SinkError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMode {
    /// Inputs are merged by timestamp and processed as fast as possible.
    Virtual,
    /// File sources are paced against the wall clock; scheduler ticks follow
    /// wall time between inputs.
    Realtime { speed_factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub skeleton: SourceSpec,
    pub transcript: Option<SourceSpec>,
    pub buttons: Option<SourceSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub metrics: MetricsSummary,
    pub output_events: u64,
}

/// Feeds pre-merged inputs through the session and closes the sink.
pub fn run_inputs(
    session: &mut Session,
    inputs: impl IntoIterator<Item = InputEvent>,
    sink: &mut dyn EventSink,
) -> Result<RunSummary, PipelineError> {
    let mut emitted = 0u64;
    for input in inputs {
        let step = session.on_input(input)?;
        emitted += step.outputs.len() as u64;
        sink.emit(&step.outputs)?;
    }
    let step = session.finish()?;
    emitted += step.outputs.len() as u64;
    sink.emit(&step.outputs)?;
    sink.close()?;
    Ok(RunSummary {
        metrics: session.metrics_summary(),
        output_events: emitted,
    })
}

fn collect<R: StreamRecord>(spec: &SourceSpec) -> Result<Vec<R>, HarnessError> {
    match spec {
        SourceSpec::Replay { path, .. } => read_all(path),
        SourceSpec::Socket { port } => Ok(listen::<R>(*port)?.collect()),
        SourceSpec::Synthetic { .. } => unreachable!("checked by caller"),
    }
}

fn skeleton_records(spec: &SourceSpec) -> Result<Vec<SkeletonFrame>, PipelineError> {
    let wrap = |source| PipelineError::Source {
        stream: "skeleton",
        source,
    };
    match spec {
        SourceSpec::Synthetic { script, seed } => Ok(generate(script, *seed).map_err(wrap)?.frames),
        other => collect(other).map_err(wrap),
    }
}

fn aux_records<R: StreamRecord>(spec: Option<&SourceSpec>) -> Result<Vec<R>, PipelineError> {
    let stream = R::KIND.as_str();
    match spec {
        None => Ok(Vec::new()),
        Some(SourceSpec::Synthetic { .. }) => Err(PipelineError::UnsupportedSource { stream }),
        Some(s) => collect(s).map_err(|source| PipelineError::Source { stream, source }),
    }
}

/// Runs every source to completion.
pub fn run(
    session: &mut Session,
    sources: &Sources,
    mode: TimeMode,
    sink: &mut dyn EventSink,
) -> Result<RunSummary, PipelineError> {
    match mode {
        TimeMode::Virtual => {
            let frames = skeleton_records(&sources.skeleton)?;
            let tokens = aux_records::<TranscriptToken>(sources.transcript.as_ref())?;
            let devices = aux_records::<DeviceEvent>(sources.buttons.as_ref())?;
            run_inputs(session, merge_inputs(frames, tokens, devices), sink)
        }
        TimeMode::Realtime { speed_factor } => run_realtime(session, sources, speed_factor, sink),
    }
}

type Feed = Box<dyn Iterator<Item = InputEvent> + Send>;

struct Opened {
    feed: Feed,
    dropped: Option<Arc<dyn Fn() -> u64 + Send + Sync>>,
}

fn open<R: StreamRecord>(
    spec: &SourceSpec,
    speed_factor: f64,
    wrap: fn(R) -> InputEvent,
) -> Result<Opened, HarnessError> {
    match spec {
        SourceSpec::Replay { path, speed_factor: own } => {
            let factor = if *own != 1.0 { *own } else { speed_factor };
            let mode = ReplayMode::realtime(factor)?;
            Ok(Opened {
                feed: Box::new(Replay::new(read_all::<R>(path)?, mode).map(wrap)),
                dropped: None,
            })
        }
        SourceSpec::Socket { port } => {
            let live: LiveSource<R> = listen(*port)?;
            let dropped = Arc::new(live.dropped_handle());
            Ok(Opened {
                feed: Box::new(live.map(wrap)),
                dropped: Some(dropped),
            })
        }
        SourceSpec::Synthetic { .. } => unreachable!("checked by caller"),
    }
}

fn run_realtime(
    session: &mut Session,
    sources: &Sources,
    speed_factor: f64,
    sink: &mut dyn EventSink,
) -> Result<RunSummary, PipelineError> {
    let mut opened = Vec::new();
    let skel = match &sources.skeleton {
        SourceSpec::Synthetic { script, seed } => {
            let frames = generate(script, *seed)
                .map_err(|source| PipelineError::Source { stream: "skeleton", source })?
                .frames;
            let mode = ReplayMode::realtime(speed_factor)
                .map_err(|source| PipelineError::Source { stream: "skeleton", source })?;
            Opened {
                feed: Box::new(Replay::new(frames, mode).map(InputEvent::Frame)),
                dropped: None,
            }
        }
        spec => open::<SkeletonFrame>(spec, speed_factor, InputEvent::Frame)
            .map_err(|source| PipelineError::Source { stream: "skeleton", source })?,
    };
    opened.push(skel);
    if let Some(spec) = &sources.transcript {
        if matches!(spec, SourceSpec::Synthetic { .. }) {
            return Err(PipelineError::UnsupportedSource { stream: "transcript" });
        }
        opened.push(
            open::<TranscriptToken>(spec, speed_factor, InputEvent::Token)
                .map_err(|source| PipelineError::Source { stream: "transcript", source })?,
        );
    }
    if let Some(spec) = &sources.buttons {
        if matches!(spec, SourceSpec::Synthetic { .. }) {
            return Err(PipelineError::UnsupportedSource { stream: "buttons" });
        }
        opened.push(
            open::<DeviceEvent>(spec, speed_factor, InputEvent::Device)
                .map_err(|source| PipelineError::Source { stream: "buttons", source })?,
        );
    }

    let queue = Arc::new(BoundedQueue::new(DEFAULT_CAPACITY * opened.len()));
    let remaining = Arc::new(AtomicUsize::new(opened.len()));
    let mut counters = Vec::new();
    let mut workers = Vec::new();
    for Opened { feed, dropped } in opened {
        counters.extend(dropped);
        let queue = Arc::clone(&queue);
        let remaining = Arc::clone(&remaining);
        workers.push(thread::spawn(move || {
            for item in feed {
                if !queue.push(item) {
                    break;
                }
            }
            if remaining.fetch_sub(1, Ordering::SeqCst) == 1 {
                queue.close();
            }
        }));
    }

    let mut emitted = 0u64;
    let mut last_input: Option<(Instant, u64)> = None;
    let result = (|| -> Result<(), PipelineError> {
        loop {
            match queue.pop_timeout(Duration::from_millis(10)) {
                Some(input) => {
                    let t = input.timestamp_ms();
                    match session.on_input(input) {
                        Ok(step) => {
                            emitted += step.outputs.len() as u64;
                            sink.emit(&step.outputs)?;
                        }
                        Err(EngineError::StaleFrame { timestamp_ms, last_ms }) => {
                            warn!("skipping stale frame at {timestamp_ms} ms (last {last_ms} ms)");
                            session.add_dropped_frames(1);
                        }
                        Err(e) => return Err(e.into()),
                    }
                    let now = session.now_ms().unwrap_or(t);
                    last_input = Some((Instant::now(), now));
                }
                None if queue.is_closed() => return Ok(()),
                None => {
                    if let Some((at, t)) = last_input {
                        let elapsed = at.elapsed().as_secs_f64() * 1000.0 * speed_factor;
                        let step = session.tick(t + elapsed as u64)?;
                        emitted += step.outputs.len() as u64;
                        sink.emit(&step.outputs)?;
                    }
                }
            }
        }
    })();
    queue.close();
    let dropped = queue.dropped() + counters.iter().map(|c| c()).sum::<u64>();
    session.add_dropped_frames(dropped);
    for w in workers {
        if w.is_finished() {
            let _ = w.join();
        }
    }
    result?;
    let step = session.finish()?;
    emitted += step.outputs.len() as u64;
    sink.emit(&step.outputs)?;
    sink.close()?;
    Ok(RunSummary {
        metrics: session.metrics_summary(),
        output_events: emitted,
    })
}
