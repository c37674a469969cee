//! Pose inference from a short recording.
//!
//! The recording is downsampled by a windowed median filter, every pair of
//! tracked joints is measured over the seven axis sets, and pairs whose
//! projected distance moved more than a threshold become constraints anchored
//! at the last window frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{AxisSet, Constraint, PoseDefinition};
use crate::skeleton::{Axis, JointId, JointPosition, SkeletonFrame, SkeletonStream, JOINT_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("recording too short: {duration_ms} ms, need at least {required_ms} ms")]
    RecordingTooShort { duration_ms: u64, required_ms: u64 },
    #[error("no relevant motion: pose indistinguishable from rest")]
    NoRelevantMotion,
    #[error("filter window {index} contains no frames")]
    EmptyWindow { index: usize },
    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
}

impl InferenceError {
    pub fn code(&self) -> &'static str {
        match self {
            InferenceError::RecordingTooShort { .. } => "RecordingTooShort",
            InferenceError::NoRelevantMotion => "NoRelevantMotion",
            InferenceError::EmptyWindow { .. } => "EmptyWindow",
            InferenceError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

fn default_tracked() -> Vec<JointId> {
    use JointId::*;
    vec![
        KneeLeft,
        KneeRight,
        FootLeft,
        FootRight,
        Spine,
        ShoulderCenter,
        HandLeft,
        HandRight,
        Head,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub window_ms: u64,
    pub window_overlap_ms: u64,
    pub motion_threshold_m: f64,
    pub band_tolerance_m: f64,
    pub order_margin_fraction: f64,
    pub tracked_joints: Vec<JointId>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            window_ms: 1500,
            window_overlap_ms: 500,
            motion_threshold_m: 0.15,
            band_tolerance_m: 0.10,
            order_margin_fraction: 0.5,
            tracked_joints: default_tracked(),
        }
    }
}

impl InferenceConfig {
    pub fn step_ms(&self) -> u64 {
        self.window_ms - self.window_overlap_ms
    }

    /// Shortest recording `smooth` accepts.
    pub fn min_duration_ms(&self) -> u64 {
        2 * self.window_ms
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let fail = |m: &str| Err(InferenceError::InvalidConfig(m.to_string()));
        if self.window_ms == 0 {
            return fail("window_ms must be positive");
        }
        if self.window_overlap_ms >= self.window_ms {
            return fail("window_overlap_ms must be smaller than window_ms");
        }
        if !(self.motion_threshold_m.is_finite() && self.motion_threshold_m > 0.0) {
            return fail("motion_threshold_m must be positive");
        }
        if !(self.band_tolerance_m.is_finite() && self.band_tolerance_m > 0.0) {
            return fail("band_tolerance_m must be positive");
        }
        if !(self.order_margin_fraction > 0.0 && self.order_margin_fraction < 1.0) {
            return fail("order_margin_fraction must lie in (0, 1)");
        }
        let mut seen = [false; JOINT_COUNT];
        for j in &self.tracked_joints {
            if std::mem::replace(&mut seen[j.index()], true) {
                return fail("tracked_joints contains duplicates");
            }
        }
        if self.tracked_joints.len() < 2 {
            return fail("tracked_joints needs at least two joints");
        }
        Ok(())
    }
}

/// A recorded skeleton stream with its nominal frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub frames: Vec<SkeletonFrame>,
    pub fps_nominal: f64,
}

impl Recording {
    pub fn new(frames: Vec<SkeletonFrame>, fps_nominal: f64) -> Self {
        Self { frames, fps_nominal }
    }

    pub fn frame_period_ms(&self) -> u64 {
        if self.fps_nominal > 0.0 {
            (1000.0 / self.fps_nominal).round() as u64
        } else {
            0
        }
    }

    /// Span covered by the frames, counting the last frame's period.
    pub fn duration_ms(&self) -> u64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => {
                last.timestamp_ms - first.timestamp_ms + self.frame_period_ms()
            }
            _ => 0,
        }
    }
}

impl From<SkeletonStream> for Recording {
    fn from(s: SkeletonStream) -> Self {
        Recording::new(s.frames, s.fps_nominal)
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Number of filter windows that fit in `duration_ms`.
pub fn window_count(duration_ms: u64, cfg: &InferenceConfig) -> u64 {
    if duration_ms < cfg.window_ms {
        0
    } else {
        (duration_ms - cfg.window_ms) / cfg.step_ms() + 1
    }
}

/// Median-filters the recording down to one frame per window. Window `k`
/// covers `[t0 + k*step, t0 + k*step + window)` and is stamped at its center.
pub fn smooth(r: &Recording, cfg: &InferenceConfig) -> Result<Recording, InferenceError> {
    cfg.validate()?;
    let duration_ms = r.duration_ms();
    let count = window_count(duration_ms, cfg);
    if duration_ms < cfg.min_duration_ms() || count < 2 {
        return Err(InferenceError::RecordingTooShort {
            duration_ms,
            required_ms: cfg.min_duration_ms(),
        });
    }
    let t0 = r.frames[0].timestamp_ms;
    let step = cfg.step_ms();
    let mut out = Vec::with_capacity(count as usize);
    let mut scratch = Vec::new();
    for k in 0..count {
        let lo = t0 + k * step;
        let hi = lo + cfg.window_ms;
        let start = r.frames.partition_point(|f| f.timestamp_ms < lo);
        let end = r.frames.partition_point(|f| f.timestamp_ms < hi);
        let window = &r.frames[start..end];
        if window.is_empty() {
            return Err(InferenceError::EmptyWindow { index: k as usize });
        }
        let mut joints = [JointPosition::default(); JOINT_COUNT];
        for (slot, id) in joints.iter_mut().zip(JointId::ALL) {
            for axis in Axis::ALL {
                scratch.clear();
                scratch.extend(window.iter().map(|f| f[id].axis(axis)));
                slot.set_axis(axis, median(&mut scratch));
            }
        }
        let frame = SkeletonFrame::new(lo + cfg.window_ms / 2, joints)
            .expect("median of finite values is finite");
        out.push(frame);
    }
    let fps = if step > 0 { 1000.0 / step as f64 } else { 0.0 };
    Ok(Recording::new(out, fps))
}

/// A joint pair whose projected distance over `axes` moved more than the
/// motion threshold. `final_delta` is `a - b` at the last window frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelevantRelation {
    pub a: JointId,
    pub b: JointId,
    pub axes: AxisSet,
    pub observed_min: f64,
    pub observed_max: f64,
    pub final_value: f64,
    pub final_delta: [f64; 3],
}

impl RelevantRelation {
    pub fn range(&self) -> f64 {
        self.observed_max - self.observed_min
    }

    /// Signed final difference `a - b` along a single axis.
    pub fn final_difference(&self, axis: Axis) -> f64 {
        self.final_delta[axis as usize]
    }
}

fn tracked_pairs(cfg: &InferenceConfig) -> Vec<(JointId, JointId)> {
    let mut joints = cfg.tracked_joints.clone();
    joints.sort();
    joints.dedup();
    let mut pairs = Vec::new();
    for (i, &a) in joints.iter().enumerate() {
        for &b in &joints[i + 1..] {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Finds every (pair, axis set) whose projected distance range exceeds the
/// threshold. Pairs are reported with `a` before `b` in joint order.
pub fn analyze_motion(smoothed: &Recording, cfg: &InferenceConfig) -> Vec<RelevantRelation> {
    let Some(last) = smoothed.frames.last() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (a, b) in tracked_pairs(cfg) {
        for axes in AxisSet::ALL {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for f in &smoothed.frames {
                let d = axes.project_norm(f[a] - f[b]);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            if hi - lo > cfg.motion_threshold_m {
                let delta = last[a] - last[b];
                out.push(RelevantRelation {
                    a,
                    b,
                    axes,
                    observed_min: lo,
                    observed_max: hi,
                    final_value: axes.project_norm(delta),
                    final_delta: [delta.x, delta.y, delta.z],
                });
            }
        }
    }
    out
}

/// Drops every relation that has a relevant strict subset of its axes for
/// the same pair.
pub fn prune_supersets(relations: &[RelevantRelation]) -> Vec<&RelevantRelation> {
    relations
        .iter()
        .filter(|r| {
            !relations.iter().any(|o| {
                o.a == r.a && o.b == r.b && o.axes.is_strict_subset_of(r.axes)
            })
        })
        .collect()
}

fn ordering_constraint(axis: Axis, a: JointId, b: JointId, diff: f64, margin: f64) -> Constraint {
    // diff = a - b on `axis`; order the arguments so the predicate holds.
    match axis {
        // left_to(p, q): q.x - p.x > margin, so p is the one with smaller x.
        Axis::X if diff < 0.0 => Constraint::left_to(a, b, margin),
        Axis::X => Constraint::left_to(b, a, margin),
        Axis::Y if diff > 0.0 => Constraint::above_of(a, b, margin),
        Axis::Y => Constraint::above_of(b, a, margin),
        // in_front(p, q): q.z - p.z > margin, so p is closer to the camera.
        Axis::Z if diff < 0.0 => Constraint::in_front(a, b, margin),
        Axis::Z => Constraint::in_front(b, a, margin),
    }
}

/// Inferred parameters are kept at 0.1 mm, the resolution of every file format.
fn round_meters(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub fn synthesize_pose(
    relations: &[RelevantRelation],
    smoothed: &Recording,
    cfg: &InferenceConfig,
    pose_id: &str,
) -> Result<PoseDefinition, InferenceError> {
    if relations.is_empty() {
        return Err(InferenceError::NoRelevantMotion);
    }
    let last = smoothed
        .frames
        .last()
        .ok_or(InferenceError::NoRelevantMotion)?;
    let mut constraints = Vec::new();
    for rel in prune_supersets(relations) {
        let delta = last[rel.a] - last[rel.b];
        if let Some(axis) = rel.axes.as_single() {
            let diff = delta.axis(axis);
            if diff.abs() > cfg.band_tolerance_m {
                let margin = round_meters(cfg.order_margin_fraction * diff.abs());
                constraints.push(ordering_constraint(axis, rel.a, rel.b, diff, margin));
                continue;
            }
        }
        let value = rel.axes.project_norm(delta);
        constraints.push(Constraint::Distance {
            a: rel.a,
            b: rel.b,
            min: round_meters((value - cfg.band_tolerance_m).max(0.0)),
            max: round_meters(value + cfg.band_tolerance_m),
            axes: rel.axes,
        });
    }
    Ok(PoseDefinition::new(pose_id, constraints))
}

/// smooth, analyze_motion and synthesize_pose in sequence.
pub fn infer(r: &Recording, cfg: &InferenceConfig, pose_id: &str) -> Result<PoseDefinition, InferenceError> {
    let smoothed = smooth(r, cfg)?;
    let relations = analyze_motion(&smoothed, cfg);
    synthesize_pose(&relations, &smoothed, cfg, pose_id)
}
