//! Session state machine tying detector, grammar and mapper together.
//!
//! A [`Session`] is single-writer: every mutation goes through `on_frame`,
//! `on_token`, `on_device` or one of the control operations. Output time is
//! taken from input timestamps, so replaying the same inputs reproduces the
//! same outputs.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{DetectorState, PoseDefinition, PoseEvent, PoseEventKind};
use crate::grammar::{CommandEvent, Grammar, MatchState, TranscriptToken, DEFAULT_MAX_GAP_MS};
use crate::harness::DeviceEvent;
use crate::inference::{infer, InferenceError, Recording};
use crate::mapper::{InputMapper, InteractionScheme, OutputEvent, SchedulerError, SchedulerState, SchemeError, Trigger};
use crate::skeleton::{SkeletonFrame, SkeletonStream};

pub const OUTPUT_RING: usize = 256;
const EVENT_RING: usize = 64;
const LATENCY_SAMPLES: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Mode {
    Running,
    Recording { pose_id: String, started_ms: u64 },
    Paused,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Running => "running",
            Mode::Recording { .. } => "recording",
            Mode::Paused => "paused",
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("stale frame: {timestamp_ms} ms is not after {last_ms} ms")]
    StaleFrame { timestamp_ms: u64, last_ms: u64 },
    #[error("cannot {operation} while {mode}")]
    IllegalTransition { operation: &'static str, mode: &'static str },
    #[error("pose `{0}` already exists")]
    DuplicatePose(String),
    #[error("invalid pose id `{0}`")]
    InvalidPoseId(String),
    #[error("scheme rejected with {} error(s)", .0.len())]
    InvalidScheme(Vec<SchemeError>),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Clock(#[from] SchedulerError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::StaleFrame { .. } => "StaleFrame",
            EngineError::IllegalTransition { .. } => "IllegalTransition",
            EngineError::DuplicatePose(_) => "DuplicatePose",
            EngineError::InvalidPoseId(_) => "InvalidPoseId",
            EngineError::InvalidScheme(_) => "InvalidScheme",
            EngineError::Inference(e) => e.code(),
            EngineError::Clock(_) => "ClockRegression",
        }
    }
}

/// Events produced by one engine step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub outputs: Vec<OutputEvent>,
    pub pose_events: Vec<PoseEvent>,
    pub commands: Vec<CommandEvent>,
}

impl Step {
    fn outputs(outputs: Vec<OutputEvent>) -> Self {
        Step {
            outputs,
            ..Step::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty() && self.pose_events.is_empty() && self.commands.is_empty()
    }
}

/// Per-frame processing time and input counters.
#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub frames: u64,
    pub tokens: u64,
    pub device_events: u64,
    pub dropped_frames: u64,
    latencies_us: VecDeque<u64>,
}

impl Metrics {
    fn record_latency(&mut self, us: u64) {
        if self.latencies_us.len() == LATENCY_SAMPLES {
            self.latencies_us.pop_front();
        }
        self.latencies_us.push_back(us);
    }

    /// Nearest-rank percentile of recent frame latencies, in microseconds.
    pub fn latency_percentile_us(&self, q: f64) -> Option<u64> {
        if self.latencies_us.is_empty() {
            return None;
        }
        let mut v: Vec<u64> = self.latencies_us.iter().copied().collect();
        v.sort_unstable();
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Some(v[rank - 1])
    }

    pub fn latency_samples(&self) -> usize {
        self.latencies_us.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub frames: u64,
    pub tokens: u64,
    pub device_events: u64,
    pub p50_latency_us: Option<u64>,
    pub p99_latency_us: Option<u64>,
    pub dropped_frames: u64,
    pub unmapped_triggers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseStatus {
    pub pose_id: String,
    pub satisfied_now: bool,
    pub active: bool,
    pub satisfy_run: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordingProgress {
    pub pose_id: String,
    pub frames: usize,
    pub duration_ms: u64,
}

/// Everything the live view shows, taken at one point between steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiveStateSnapshot {
    /// Number of engine steps applied so far.
    pub tick: u64,
    pub mode: Mode,
    pub now_ms: Option<u64>,
    pub frame: Option<serde_json::Value>,
    pub poses: Vec<PoseStatus>,
    pub recording: Option<RecordingProgress>,
    pub pose_events: Vec<PoseEvent>,
    pub commands: Vec<CommandEvent>,
    pub outputs: Vec<OutputEvent>,
    pub metrics: MetricsSummary,
}

/// Sequence numbers of the last events a subscriber has seen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Cursor {
    pub pose_events: u64,
    pub commands: u64,
    pub outputs: u64,
}

/// Fixed-capacity history with running sequence numbers.
#[derive(Debug, Clone)]
struct Ring<T> {
    items: VecDeque<T>,
    capacity: usize,
    total: u64,
}

impl<T: Clone> Ring<T> {
    fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            total: 0,
        }
    }

    fn extend(&mut self, items: &[T]) {
        for item in items {
            if self.items.len() == self.capacity {
                self.items.pop_front();
            }
            self.items.push_back(item.clone());
            self.total += 1;
        }
    }

    fn all(&self) -> Vec<T> {
        self.items.iter().cloned().collect()
    }

    fn since(&self, seen: u64) -> Vec<T> {
        let new = self.total.saturating_sub(seen).min(self.items.len() as u64) as usize;
        self.items.iter().skip(self.items.len() - new).cloned().collect()
    }
}

pub struct Session {
    mapper: InputMapper,
    grammar: Option<Grammar>,
    detector: DetectorState,
    matcher: MatchState,
    scheduler: SchedulerState,
    mode: Mode,
    buffer: Vec<SkeletonFrame>,
    last_frame: Option<SkeletonFrame>,
    satisfied: Vec<bool>,
    clock: Option<u64>,
    tick: u64,
    metrics: Metrics,
    pose_log: Ring<PoseEvent>,
    command_log: Ring<CommandEvent>,
    output_log: Ring<OutputEvent>,
}

fn build_grammar(scheme: &InteractionScheme) -> Option<Grammar> {
    // Validated schemes only fail here with an empty vocabulary.
    Grammar::new(&scheme.phrases, DEFAULT_MAX_GAP_MS).ok()
}

impl Session {
    /// A running session over a scheme; returns every validation error.
    pub fn new(scheme: InteractionScheme) -> Result<Self, Vec<SchemeError>> {
        let mapper = InputMapper::new(scheme)?;
        let scheme = mapper.scheme();
        Ok(Self {
            grammar: build_grammar(scheme),
            detector: DetectorState::new(&scheme.poses),
            satisfied: vec![false; scheme.poses.len()],
            mapper,
            matcher: MatchState::new(),
            scheduler: SchedulerState::new(),
            mode: Mode::Running,
            buffer: Vec::new(),
            last_frame: None,
            clock: None,
            tick: 0,
            metrics: Metrics::default(),
            pose_log: Ring::new(EVENT_RING),
            command_log: Ring::new(EVENT_RING),
            output_log: Ring::new(OUTPUT_RING),
        })
    }

    pub fn scheme(&self) -> &InteractionScheme {
        self.mapper.scheme()
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn detector(&self) -> &DetectorState {
        &self.detector
    }

    pub fn now_ms(&self) -> Option<u64> {
        self.clock
    }

    pub fn add_dropped_frames(&mut self, n: u64) {
        self.metrics.dropped_frames += n;
    }

    fn advance_clock(&mut self, t: u64) -> u64 {
        let now = self.clock.map_or(t, |c| c.max(t));
        self.clock = Some(now);
        now
    }

    fn record(&mut self, step: &Step) {
        self.tick += 1;
        self.pose_log.extend(&step.pose_events);
        self.command_log.extend(&step.commands);
        self.output_log.extend(&step.outputs);
    }

    fn dispatch(&mut self, trigger: &Trigger, now: u64, out: &mut Vec<OutputEvent>) -> Result<(), EngineError> {
        out.extend(self.mapper.dispatch(&mut self.scheduler, trigger, now)?);
        Ok(())
    }

    fn dispatch_commands(&mut self, commands: &[CommandEvent], now: u64, out: &mut Vec<OutputEvent>) -> Result<(), EngineError> {
        for c in commands {
            self.dispatch(&Trigger::Command(c.phrase_id.clone()), now, out)?;
        }
        Ok(())
    }

    /// Detector, then mapper, then scheduler tick, all at the frame's time.
    /// While recording, the frame is buffered and only satisfaction flags
    /// are refreshed.
    pub fn on_frame(&mut self, frame: SkeletonFrame) -> Result<Step, EngineError> {
        let started = Instant::now();
        let t = frame.timestamp_ms;
        if let Some(last) = self.last_frame.as_ref().map(|f| f.timestamp_ms) {
            if t <= last {
                return Err(EngineError::StaleFrame {
                    timestamp_ms: t,
                    last_ms: last,
                });
            }
        }
        let now = self.advance_clock(t);
        let poses = &self.mapper.scheme().poses;
        for (flag, pose) in self.satisfied.iter_mut().zip(poses) {
            *flag = pose.evaluate(&frame);
        }
        let mut step = Step::default();
        match self.mode {
            Mode::Paused => {}
            Mode::Recording { .. } => self.buffer.push(frame.clone()),
            Mode::Running => {
                step.pose_events = self
                    .detector
                    .step(poses, &frame)
                    .expect("detector tracks follow the scheme");
                if let Some(g) = &self.grammar {
                    step.commands = self.matcher.expire(g, now);
                }
                let commands = step.commands.clone();
                self.dispatch_commands(&commands, now, &mut step.outputs)?;
                for e in step.pose_events.clone() {
                    let trigger = match e.kind {
                        PoseEventKind::Activated => Trigger::PoseActivated(e.pose_id),
                        PoseEventKind::Deactivated => Trigger::PoseDeactivated(e.pose_id),
                    };
                    self.dispatch(&trigger, now, &mut step.outputs)?;
                }
                step.outputs.extend(self.mapper.tick(&mut self.scheduler, now)?);
            }
        }
        self.last_frame = Some(frame);
        self.metrics.frames += 1;
        self.metrics.record_latency(started.elapsed().as_micros() as u64);
        self.record(&step);
        Ok(step)
    }

    /// Feeds the phrase matcher and dispatches completed commands at the
    /// token's time. Ignored unless running.
    pub fn on_token(&mut self, token: &TranscriptToken) -> Result<Step, EngineError> {
        self.metrics.tokens += 1;
        let mut step = Step::default();
        if self.mode != Mode::Running {
            return Ok(step);
        }
        let now = self.advance_clock(token.timestamp_ms);
        if let Some(g) = &self.grammar {
            step.commands = self.matcher.feed(g, token);
        }
        let commands = step.commands.clone();
        self.dispatch_commands(&commands, now, &mut step.outputs)?;
        self.record(&step);
        Ok(step)
    }

    /// Dispatches a button or analog sample. Ignored unless running.
    pub fn on_device(&mut self, event: &DeviceEvent) -> Result<Step, EngineError> {
        self.metrics.device_events += 1;
        let mut step = Step::default();
        if self.mode != Mode::Running {
            return Ok(step);
        }
        let now = self.advance_clock(event.timestamp_ms);
        self.dispatch(&event.to_trigger(), now, &mut step.outputs)?;
        self.record(&step);
        Ok(step)
    }

    /// Emits hold repeats and mouse motion due by `now_ms` and abandons
    /// stale partial phrases.
    pub fn tick(&mut self, now_ms: u64) -> Result<Step, EngineError> {
        let mut step = Step::default();
        if self.mode != Mode::Running {
            return Ok(step);
        }
        let now = self.advance_clock(now_ms);
        if let Some(g) = &self.grammar {
            step.commands = self.matcher.expire(g, now);
        }
        let commands = step.commands.clone();
        self.dispatch_commands(&commands, now, &mut step.outputs)?;
        step.outputs.extend(self.mapper.tick(&mut self.scheduler, now)?);
        if !step.is_empty() {
            self.record(&step);
        }
        Ok(step)
    }

    /// Releases holds and clears detector and matcher progress.
    fn quiesce(&mut self) -> Result<Vec<OutputEvent>, EngineError> {
        let out = match self.clock {
            Some(now) => self.scheduler.release_all(now)?,
            None => Vec::new(),
        };
        self.detector.reset();
        self.matcher = MatchState::new();
        Ok(out)
    }

    pub fn start(&mut self) -> Result<Step, EngineError> {
        match self.mode {
            Mode::Running => Ok(Step::default()),
            Mode::Paused => {
                self.mode = Mode::Running;
                Ok(Step::default())
            }
            Mode::Recording { .. } => Err(self.illegal("start the session")),
        }
    }

    /// Pauses the session, releasing all holds. Cancels an active recording.
    pub fn stop(&mut self) -> Result<Step, EngineError> {
        let step = Step::outputs(self.quiesce()?);
        self.buffer.clear();
        self.mode = Mode::Paused;
        self.record(&step);
        Ok(step)
    }

    pub fn start_recording(&mut self, pose_id: &str) -> Result<Step, EngineError> {
        if self.mode != Mode::Running {
            return Err(self.illegal("start recording"));
        }
        if pose_id.is_empty() || pose_id.chars().any(char::is_whitespace) {
            return Err(EngineError::InvalidPoseId(pose_id.to_string()));
        }
        if self.scheme().pose(pose_id).is_some() {
            return Err(EngineError::DuplicatePose(pose_id.to_string()));
        }
        let step = Step::outputs(self.quiesce()?);
        self.buffer.clear();
        self.mode = Mode::Recording {
            pose_id: pose_id.to_string(),
            started_ms: self.clock.unwrap_or(0),
        };
        self.record(&step);
        Ok(step)
    }

    /// Infers a pose from the buffered frames and adds it to the scheme.
    /// The session returns to running whether or not inference succeeds.
    pub fn finish_recording(&mut self) -> Result<PoseDefinition, EngineError> {
        let Mode::Recording { pose_id, .. } = &self.mode else {
            return Err(self.illegal("finish recording"));
        };
        let pose_id = pose_id.clone();
        let frames = std::mem::take(&mut self.buffer);
        self.mode = Mode::Running;
        let recording = Recording::new(frames, SkeletonStream::DEFAULT_FPS);
        let pose = infer(&recording, &self.scheme().inference, &pose_id)?;
        let mut scheme = self.scheme().clone();
        scheme.poses.push(pose.clone());
        self.replace_scheme(scheme)?;
        Ok(pose)
    }

    /// Swaps the scheme after releasing every hold. Returns the release
    /// events; the session keeps its mode.
    pub fn set_scheme(&mut self, scheme: InteractionScheme) -> Result<Step, EngineError> {
        let mapper = InputMapper::new(scheme).map_err(EngineError::InvalidScheme)?;
        let step = Step::outputs(self.quiesce()?);
        self.install(mapper);
        self.record(&step);
        Ok(step)
    }

    fn replace_scheme(&mut self, scheme: InteractionScheme) -> Result<(), EngineError> {
        let mapper = InputMapper::new(scheme).map_err(EngineError::InvalidScheme)?;
        self.install(mapper);
        Ok(())
    }

    fn install(&mut self, mapper: InputMapper) {
        let scheme = mapper.scheme();
        self.grammar = build_grammar(scheme);
        self.detector = DetectorState::new(&scheme.poses);
        self.satisfied = vec![false; scheme.poses.len()];
        self.matcher = MatchState::new();
        self.mapper = mapper;
    }

    /// End of input: flushes pending phrase matches and releases holds.
    pub fn finish(&mut self) -> Result<Step, EngineError> {
        let mut step = Step::default();
        let Some(now) = self.clock else {
            return Ok(step);
        };
        if self.mode == Mode::Running {
            if let Some(g) = &self.grammar {
                step.commands = self.matcher.finish(g);
            }
            let commands = step.commands.clone();
            self.dispatch_commands(&commands, now, &mut step.outputs)?;
        }
        step.outputs.extend(self.scheduler.release_all(now)?);
        self.record(&step);
        Ok(step)
    }

    fn illegal(&self, operation: &'static str) -> EngineError {
        EngineError::IllegalTransition {
            operation,
            mode: self.mode.name(),
        }
    }

    pub fn metrics_summary(&self) -> MetricsSummary {
        MetricsSummary {
            frames: self.metrics.frames,
            tokens: self.metrics.tokens,
            device_events: self.metrics.device_events,
            p50_latency_us: self.metrics.latency_percentile_us(0.50),
            p99_latency_us: self.metrics.latency_percentile_us(0.99),
            dropped_frames: self.metrics.dropped_frames,
            unmapped_triggers: self.scheduler.unmapped_triggers(),
        }
    }

    pub fn cursor(&self) -> Cursor {
        Cursor {
            pose_events: self.pose_log.total,
            commands: self.command_log.total,
            outputs: self.output_log.total,
        }
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// Full snapshot with the retained event history.
    pub fn snapshot(&self) -> LiveStateSnapshot {
        self.build_snapshot(None)
    }

    /// Snapshot carrying only events newer than `cursor`.
    pub fn delta(&self, cursor: &Cursor) -> LiveStateSnapshot {
        self.build_snapshot(Some(cursor))
    }

    fn build_snapshot(&self, cursor: Option<&Cursor>) -> LiveStateSnapshot {
        let poses = self
            .scheme()
            .poses
            .iter()
            .zip(&self.satisfied)
            .map(|(p, &satisfied_now)| {
                let track = self.detector.track(&p.pose_id);
                PoseStatus {
                    pose_id: p.pose_id.clone(),
                    satisfied_now,
                    active: track.is_some_and(|t| t.active),
                    satisfy_run: track.map_or(0, |t| t.satisfy_run),
                }
            })
            .collect();
        let recording = match &self.mode {
            Mode::Recording { pose_id, .. } => Some(RecordingProgress {
                pose_id: pose_id.clone(),
                frames: self.buffer.len(),
                duration_ms: match (self.buffer.first(), self.buffer.last()) {
                    (Some(a), Some(b)) => b.timestamp_ms - a.timestamp_ms,
                    _ => 0,
                },
            }),
            _ => None,
        };
        let (pose_events, commands, outputs) = match cursor {
            Some(c) => (
                self.pose_log.since(c.pose_events),
                self.command_log.since(c.commands),
                self.output_log.since(c.outputs),
            ),
            None => (self.pose_log.all(), self.command_log.all(), self.output_log.all()),
        };
        LiveStateSnapshot {
            tick: self.tick,
            mode: self.mode.clone(),
            now_ms: self.clock,
            frame: self
                .last_frame
                .as_ref()
                .map(|f| serde_json::from_str(&crate::skeleton::encode_frame(f)).expect("frame encodes")),
            poses,
            recording,
            pose_events,
            commands,
            outputs,
            metrics: self.metrics_summary(),
        }
    }
}

/// One record from any input stream.
#[derive(Debug, Clone, PartialEq)]
pub enum InputEvent {
    Frame(SkeletonFrame),
    Token(TranscriptToken),
    Device(DeviceEvent),
}

impl InputEvent {
    pub fn timestamp_ms(&self) -> u64 {
        match self {
            InputEvent::Frame(f) => f.timestamp_ms,
            InputEvent::Token(t) => t.timestamp_ms,
            InputEvent::Device(d) => d.timestamp_ms,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            InputEvent::Frame(_) => 0,
            InputEvent::Token(_) => 1,
            InputEvent::Device(_) => 2,
        }
    }
}

impl Session {
    pub fn on_input(&mut self, input: InputEvent) -> Result<Step, EngineError> {
        match input {
            InputEvent::Frame(f) => self.on_frame(f),
            InputEvent::Token(t) => self.on_token(&t),
            InputEvent::Device(d) => self.on_device(&d),
        }
    }
}

/// Merges timestamp-ordered streams into one ordered sequence. Ties go to
/// skeleton frames, then transcript tokens, then device events.
pub fn merge_inputs(
    frames: Vec<SkeletonFrame>,
    tokens: Vec<TranscriptToken>,
    devices: Vec<DeviceEvent>,
) -> Vec<InputEvent> {
    let mut all: Vec<InputEvent> = frames
        .into_iter()
        .map(InputEvent::Frame)
        .chain(tokens.into_iter().map(InputEvent::Token))
        .chain(devices.into_iter().map(InputEvent::Device))
        .collect();
    all.sort_by_key(|e| (e.timestamp_ms(), e.rank()));
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::Constraint;
    use crate::grammar::Phrase;
    use crate::harness::{generate, scenarios::Scenario};
    use crate::mapper::{Action, Key, Mapping, OutputKind, TriggerPattern};
    use crate::skeleton::{JointId, JointPosition};

    fn scheme() -> InteractionScheme {
        let mut s = InteractionScheme::empty("test");
        s.poses.push(PoseDefinition::new(
            "hand_up",
            vec![Constraint::above_of(JointId::HandRight, JointId::Head, 0.1)],
        ));
        s.phrases.push(Phrase::new("buy", &["buy"]));
        s.mappings.push(Mapping {
            trigger: TriggerPattern::Pose("hand_up".into()),
            on_activate: vec![Action::KeyHoldStart {
                key: Key::Char('w'),
                repeat_hz: 0,
            }],
            on_deactivate: vec![Action::KeyHoldStop { key: Key::Char('w') }],
        });
        s.mappings.push(Mapping {
            trigger: TriggerPattern::Phrase(vec!["buy".into()]),
            on_activate: vec![Action::KeyPress { key: Key::Named("enter") }],
            on_deactivate: vec![],
        });
        s
    }

    fn frame(t: u64, hand_y: f64) -> SkeletonFrame {
        let mut f = SkeletonFrame::uniform(t, JointPosition::new(0.0, 1.0, 2.0));
        f.set_joint(JointId::Head, JointPosition::new(0.0, 1.6, 2.0));
        f.set_joint(JointId::HandRight, JointPosition::new(0.0, hand_y, 2.0));
        f
    }

    #[test]
    fn activation_shares_timestamp_with_key() {
        let mut s = Session::new(scheme()).unwrap();
        assert!(s.on_frame(frame(0, 1.9)).unwrap().outputs.is_empty());
        let step = s.on_frame(frame(33, 1.9)).unwrap();
        assert_eq!(step.pose_events.len(), 1);
        assert_eq!(step.outputs, vec![OutputEvent::new(33, OutputKind::KeyDown(Key::Char('w')))]);
        s.on_frame(frame(66, 1.0)).unwrap();
        let step = s.on_frame(frame(100, 1.0)).unwrap();
        assert_eq!(step.outputs, vec![OutputEvent::new(100, OutputKind::KeyUp(Key::Char('w')))]);
    }

    #[test]
    fn stale_frame_rejected() {
        let mut s = Session::new(scheme()).unwrap();
        s.on_frame(frame(100, 1.0)).unwrap();
        assert!(matches!(s.on_frame(frame(100, 1.0)), Err(EngineError::StaleFrame { .. })));
        assert!(matches!(s.on_frame(frame(50, 1.0)), Err(EngineError::StaleFrame { .. })));
    }

    #[test]
    fn phrase_output_at_token_time() {
        let mut s = Session::new(scheme()).unwrap();
        let step = s.on_token(&TranscriptToken::new(250, "BUY")).unwrap();
        assert_eq!(step.outputs.len(), 2);
        assert!(step.outputs.iter().all(|e| e.timestamp_ms == 250));
        assert!(s.on_token(&TranscriptToken::new(300, "xyzzy")).unwrap().outputs.is_empty());
    }

    #[test]
    fn paused_ignores_tokens() {
        let mut s = Session::new(scheme()).unwrap();
        s.stop().unwrap();
        assert!(s.on_token(&TranscriptToken::new(10, "buy")).unwrap().is_empty());
        assert!(matches!(s.start_recording("x"), Err(EngineError::IllegalTransition { .. })));
        assert!(matches!(s.finish_recording(), Err(EngineError::IllegalTransition { .. })));
        s.start().unwrap();
        assert_eq!(s.on_token(&TranscriptToken::new(20, "buy")).unwrap().outputs.len(), 2);
    }

    #[test]
    fn stop_releases_holds() {
        let mut s = Session::new(scheme()).unwrap();
        s.on_frame(frame(0, 1.9)).unwrap();
        s.on_frame(frame(33, 1.9)).unwrap();
        let step = s.stop().unwrap();
        assert_eq!(step.outputs, vec![OutputEvent::new(33, OutputKind::KeyUp(Key::Char('w')))]);
        assert_eq!(s.scheduler().held_keys().count(), 0);
    }

    #[test]
    fn recording_buffers_and_infers() {
        let mut s = Session::new(scheme()).unwrap();
        s.start_recording("raise_left").unwrap();
        let script = Scenario::by_name("raise_left_arm").unwrap().script(1.0);
        for f in generate(&script, 9).unwrap().frames {
            let step = s.on_frame(f).unwrap();
            assert!(step.outputs.is_empty());
        }
        assert_eq!(s.snapshot().recording.unwrap().frames, 150);
        let pose = s.finish_recording().unwrap();
        assert_eq!(pose.pose_id, "raise_left");
        assert_eq!(s.scheme().poses.len(), 2);
        assert_eq!(*s.mode(), Mode::Running);
        assert_eq!(s.detector().tracks().len(), 2);
    }

    #[test]
    fn short_recording_reports_and_resumes() {
        let mut s = Session::new(scheme()).unwrap();
        s.start_recording("quick").unwrap();
        for i in 0..60 {
            s.on_frame(frame(i * 33, 1.0)).unwrap();
        }
        let err = s.finish_recording().unwrap_err();
        assert_eq!(err.code(), "RecordingTooShort");
        assert_eq!(*s.mode(), Mode::Running);
        assert!(matches!(s.start_recording("hand_up"), Err(EngineError::DuplicatePose(_))));
    }

    #[test]
    fn delta_carries_only_new_events() {
        let mut s = Session::new(scheme()).unwrap();
        s.on_token(&TranscriptToken::new(5, "buy")).unwrap();
        let c = s.cursor();
        assert!(s.delta(&c).outputs.is_empty());
        s.on_token(&TranscriptToken::new(6, "buy")).unwrap();
        let d = s.delta(&c);
        assert_eq!(d.commands.len(), 1);
        assert_eq!(d.outputs.len(), 2);
        assert_eq!(s.snapshot().outputs.len(), 4);
    }

    #[test]
    fn merge_orders_ties() {
        let m = merge_inputs(
            vec![frame(10, 1.0)],
            vec![TranscriptToken::new(10, "a"), TranscriptToken::new(5, "b")],
            vec![],
        );
        let ranks: Vec<_> = m.iter().map(|e| (e.timestamp_ms(), e.rank())).collect();
        assert_eq!(ranks, vec![(5, 1), (10, 0), (10, 1)]);
    }
}
