//! Spatial constraints, pose definitions and the debounced pose detector.

use std::collections::HashMap;
use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::skeleton::{Axis, JointId, JointPosition, SkeletonFrame};

/// A non-empty subset of {X, Y, Z}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxisSet(u8);

impl AxisSet {
    pub const X: AxisSet = AxisSet(0b001);
    pub const Y: AxisSet = AxisSet(0b010);
    pub const Z: AxisSet = AxisSet(0b100);
    pub const XY: AxisSet = AxisSet(0b011);
    pub const XZ: AxisSet = AxisSet(0b101);
    pub const YZ: AxisSet = AxisSet(0b110);
    pub const XYZ: AxisSet = AxisSet(0b111);

    /// The seven axis sets, singles first.
    pub const ALL: [AxisSet; 7] = [
        AxisSet::X,
        AxisSet::Y,
        AxisSet::Z,
        AxisSet::XY,
        AxisSet::YZ,
        AxisSet::XZ,
        AxisSet::XYZ,
    ];

    pub fn from_bits(bits: u8) -> Option<AxisSet> {
        (1..=7).contains(&bits).then_some(AxisSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, axis: Axis) -> bool {
        self.0 & Self::single(axis).0 != 0
    }

    pub fn single(axis: Axis) -> AxisSet {
        match axis {
            Axis::X => AxisSet::X,
            Axis::Y => AxisSet::Y,
            Axis::Z => AxisSet::Z,
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// The only axis, if this set has exactly one.
    pub fn as_single(self) -> Option<Axis> {
        match self {
            AxisSet::X => Some(Axis::X),
            AxisSet::Y => Some(Axis::Y),
            AxisSet::Z => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn is_strict_subset_of(self, other: AxisSet) -> bool {
        self != other && self.0 & other.0 == self.0
    }

    pub fn axes(self) -> impl Iterator<Item = Axis> {
        Axis::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// Euclidean norm of `v` restricted to these axes.
    pub fn project_norm(self, v: JointPosition) -> f64 {
        let x = if self.0 & 1 != 0 { v.x * v.x } else { 0.0 };
        let y = if self.0 & 2 != 0 { v.y * v.y } else { 0.0 };
        let z = if self.0 & 4 != 0 { v.z * v.z } else { 0.0 };
        (x + y + z).sqrt()
    }
}

impl fmt::Display for AxisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for axis in self.axes() {
            f.write_str(match axis {
                Axis::X => "x",
                Axis::Y => "y",
                Axis::Z => "z",
            })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for AxisSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u8;
        for c in s.chars() {
            let bit = match c {
                'x' | 'X' => 1,
                'y' | 'Y' => 2,
                'z' | 'Z' => 4,
                _ => return Err(format!("invalid axis set `{s}`")),
            };
            if bits & bit != 0 {
                return Err(format!("repeated axis in `{s}`"));
            }
            bits |= bit;
        }
        AxisSet::from_bits(bits).ok_or_else(|| "empty axis set".to_string())
    }
}

impl Serialize for AxisSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AxisSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

fn is_xyz(axes: &AxisSet) -> bool {
    *axes == AxisSet::XYZ
}

fn xyz() -> AxisSet {
    AxisSet::XYZ
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// One spatial predicate over one or two joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    /// `min <= |a - b| <= max`, measured over `axes` only.
    Distance {
        a: JointId,
        b: JointId,
        min: f64,
        max: f64,
        #[serde(default = "xyz", skip_serializing_if = "is_xyz")]
        axes: AxisSet,
    },
    /// `a` is closer to the camera than `b` by more than `margin`.
    InFront {
        a: JointId,
        b: JointId,
        #[serde(default, skip_serializing_if = "is_zero")]
        margin: f64,
    },
    /// `a` is left of `b` (smaller x) by more than `margin`.
    LeftTo {
        a: JointId,
        b: JointId,
        #[serde(default, skip_serializing_if = "is_zero")]
        margin: f64,
    },
    /// `a` is above `b` by more than `margin`.
    AboveOf {
        a: JointId,
        b: JointId,
        #[serde(default, skip_serializing_if = "is_zero")]
        margin: f64,
    },
    /// `a.y > threshold`.
    AboveValue { a: JointId, threshold: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("constraint relates {0} to itself")]
    SameJoint(JointId),
    #[error("distance band [{min}, {max}] is invalid")]
    InvalidBand { min: f64, max: f64 },
    #[error("margin {0} must be finite and non-negative")]
    InvalidMargin(f64),
    #[error("threshold {0} must be finite")]
    InvalidThreshold(f64),
}

impl Constraint {
    pub fn distance(a: JointId, b: JointId, min: f64, max: f64) -> Self {
        Constraint::Distance {
            a,
            b,
            min,
            max,
            axes: AxisSet::XYZ,
        }
    }

    pub fn in_front(a: JointId, b: JointId, margin: f64) -> Self {
        Constraint::InFront { a, b, margin }
    }

    pub fn left_to(a: JointId, b: JointId, margin: f64) -> Self {
        Constraint::LeftTo { a, b, margin }
    }

    pub fn above_of(a: JointId, b: JointId, margin: f64) -> Self {
        Constraint::AboveOf { a, b, margin }
    }

    pub fn above_value(a: JointId, threshold: f64) -> Self {
        Constraint::AboveValue { a, threshold }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::Distance { .. } => "distance",
            Constraint::InFront { .. } => "in_front",
            Constraint::LeftTo { .. } => "left_to",
            Constraint::AboveOf { .. } => "above_of",
            Constraint::AboveValue { .. } => "above_value",
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        match *self {
            Constraint::Distance { a, b, min, max, .. } => {
                if a == b {
                    return Err(ConstraintError::SameJoint(a));
                }
                if !(min.is_finite() && max.is_finite() && 0.0 <= min && min <= max) {
                    return Err(ConstraintError::InvalidBand { min, max });
                }
            }
            Constraint::InFront { a, b, margin }
            | Constraint::LeftTo { a, b, margin }
            | Constraint::AboveOf { a, b, margin } => {
                if a == b {
                    return Err(ConstraintError::SameJoint(a));
                }
                if !(margin.is_finite() && margin >= 0.0) {
                    return Err(ConstraintError::InvalidMargin(margin));
                }
            }
            Constraint::AboveValue { threshold, .. } => {
                if !threshold.is_finite() {
                    return Err(ConstraintError::InvalidThreshold(threshold));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, frame: &SkeletonFrame) -> bool {
        match *self {
            Constraint::Distance {
                a,
                b,
                min,
                max,
                axes,
            } => {
                let d = axes.project_norm(frame[a] - frame[b]);
                min <= d && d <= max
            }
            Constraint::InFront { a, b, margin } => frame[b].z - frame[a].z > margin,
            Constraint::LeftTo { a, b, margin } => frame[b].x - frame[a].x > margin,
            Constraint::AboveOf { a, b, margin } => frame[a].y - frame[b].y > margin,
            Constraint::AboveValue { a, threshold } => frame[a].y > threshold,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Distance {
                a,
                b,
                min,
                max,
                axes,
            } => write!(f, "distance({a}, {b}) over {axes} in [{min:.3}, {max:.3}] m"),
            Constraint::InFront { a, b, margin } => {
                write!(f, "in_front({a}, {b}) margin {margin:.3} m")
            }
            Constraint::LeftTo { a, b, margin } => {
                write!(f, "left_to({a}, {b}) margin {margin:.3} m")
            }
            Constraint::AboveOf { a, b, margin } => {
                write!(f, "above_of({a}, {b}) margin {margin:.3} m")
            }
            Constraint::AboveValue { a, threshold } => {
                write!(f, "above_value({a}) threshold {threshold:.3} m")
            }
        }
    }
}

fn default_frames() -> u32 {
    2
}

/// A named conjunction of constraints with detection hysteresis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDefinition {
    pub pose_id: String,
    pub constraints: Vec<Constraint>,
    #[serde(default = "default_frames")]
    pub activate_frames: u32,
    #[serde(default = "default_frames")]
    pub release_frames: u32,
}

impl PoseDefinition {
    pub fn new(pose_id: impl Into<String>, constraints: Vec<Constraint>) -> Self {
        Self {
            pose_id: pose_id.into(),
            constraints,
            activate_frames: default_frames(),
            release_frames: default_frames(),
        }
    }

    pub fn with_hysteresis(mut self, activate_frames: u32, release_frames: u32) -> Self {
        self.activate_frames = activate_frames;
        self.release_frames = release_frames;
        self
    }

    pub fn evaluate(&self, frame: &SkeletonFrame) -> bool {
        self.constraints.iter().all(|c| c.evaluate(frame))
    }
}

pub fn evaluate_constraint(c: &Constraint, f: &SkeletonFrame) -> bool {
    c.evaluate(f)
}

pub fn evaluate_pose(p: &PoseDefinition, f: &SkeletonFrame) -> bool {
    p.evaluate(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseEventKind {
    Activated,
    Deactivated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseEvent {
    pub pose_id: String,
    pub kind: PoseEventKind,
    pub timestamp_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("detector has no state for pose `{0}`")]
    UnknownPose(String),
}

/// Per-pose counters. `satisfy_run` and `fail_run` count consecutive
/// satisfying and failing frames; at most one is nonzero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoseTrack {
    pub pose_id: String,
    pub active: bool,
    pub satisfy_run: u32,
    pub fail_run: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorState {
    tracks: Vec<PoseTrack>,
    index: HashMap<String, usize>,
}

impl DetectorState {
    pub fn new(poses: &[PoseDefinition]) -> Self {
        let mut state = Self::default();
        for pose in poses {
            state.insert(&pose.pose_id);
        }
        state
    }

    /// Adds an inactive track; no-op if the pose is already tracked.
    pub fn insert(&mut self, pose_id: &str) {
        if self.index.contains_key(pose_id) {
            return;
        }
        self.index.insert(pose_id.to_string(), self.tracks.len());
        self.tracks.push(PoseTrack {
            pose_id: pose_id.to_string(),
            active: false,
            satisfy_run: 0,
            fail_run: 0,
        });
    }

    pub fn track(&self, pose_id: &str) -> Option<&PoseTrack> {
        self.index.get(pose_id).map(|&i| &self.tracks[i])
    }

    pub fn tracks(&self) -> &[PoseTrack] {
        &self.tracks
    }

    pub fn is_active(&self, pose_id: &str) -> bool {
        self.track(pose_id).is_some_and(|t| t.active)
    }

    fn slot(&self, i: usize, pose_id: &str) -> Option<usize> {
        match self.tracks.get(i) {
            Some(t) if t.pose_id == pose_id => Some(i),
            _ => self.index.get(pose_id).copied(),
        }
    }

    /// Advances every pose by one frame. Events follow pose definition order
    /// and carry the frame's timestamp. The state is left untouched on error.
    pub fn step(
        &mut self,
        poses: &[PoseDefinition],
        frame: &SkeletonFrame,
    ) -> Result<Vec<PoseEvent>, DetectorError> {
        let mut slots = Vec::with_capacity(poses.len());
        for (i, pose) in poses.iter().enumerate() {
            let slot = self
                .slot(i, &pose.pose_id)
                .ok_or_else(|| DetectorError::UnknownPose(pose.pose_id.clone()))?;
            slots.push(slot);
        }
        let mut events = Vec::new();
        for (pose, slot) in poses.iter().zip(slots) {
            let satisfied = pose.evaluate(frame);
            let track = &mut self.tracks[slot];
            if satisfied {
                track.fail_run = 0;
                track.satisfy_run = track.satisfy_run.saturating_add(1);
                if !track.active && track.satisfy_run >= pose.activate_frames {
                    track.active = true;
                    events.push(PoseEvent {
                        pose_id: pose.pose_id.clone(),
                        kind: PoseEventKind::Activated,
                        timestamp_ms: frame.timestamp_ms,
                    });
                }
            } else {
                track.satisfy_run = 0;
                track.fail_run = track.fail_run.saturating_add(1);
                if track.active && track.fail_run >= pose.release_frames {
                    track.active = false;
                    events.push(PoseEvent {
                        pose_id: pose.pose_id.clone(),
                        kind: PoseEventKind::Deactivated,
                        timestamp_ms: frame.timestamp_ms,
                    });
                }
            }
        }
        Ok(events)
    }

    /// Marks every pose inactive and clears counters.
    pub fn reset(&mut self) {
        for t in &mut self.tracks {
            t.active = false;
            t.satisfy_run = 0;
            t.fail_run = 0;
        }
    }
}

/// Functional form of [`DetectorState::step`].
pub fn step_detector(
    state: &DetectorState,
    poses: &[PoseDefinition],
    frame: &SkeletonFrame,
) -> Result<(DetectorState, Vec<PoseEvent>), DetectorError> {
    let mut next = state.clone();
    let events = next.step(poses, frame)?;
    Ok((next, events))
}
