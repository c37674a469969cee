//! Skeleton data model and the `.skel.jsonl` record codec.
//!
//! Axis convention: +X points to the camera's right as the camera sees the
//! scene (the user's left), +Y is up, +Z points away from the camera.

use std::fmt;
use std::ops::{Index, Sub};
use std::str::FromStr;

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const JOINT_COUNT: usize = 20;

macro_rules! joints {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// One of the twenty tracked body joints.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum JointId {
            $($variant),+
        }

        impl JointId {
            /// All joints in canonical (encoding) order.
            pub const ALL: [JointId; JOINT_COUNT] = [$(JointId::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(JointId::$variant => $name),+
                }
            }
        }

        impl FromStr for JointId {
            type Err = SkeletonError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(JointId::$variant),)+
                    other => Err(SkeletonError::UnknownJoint(other.to_string())),
                }
            }
        }
    };
}

joints! {
    Head => "head",
    ShoulderCenter => "shoulder_center",
    ShoulderLeft => "shoulder_left",
    ShoulderRight => "shoulder_right",
    ElbowLeft => "elbow_left",
    ElbowRight => "elbow_right",
    WristLeft => "wrist_left",
    WristRight => "wrist_right",
    HandLeft => "hand_left",
    HandRight => "hand_right",
    Spine => "spine",
    HipCenter => "hip_center",
    HipLeft => "hip_left",
    HipRight => "hip_right",
    KneeLeft => "knee_left",
    KneeRight => "knee_right",
    AnkleLeft => "ankle_left",
    AnkleRight => "ankle_right",
    FootLeft => "foot_left",
    FootRight => "foot_right",
}

impl JointId {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for JointId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for JointId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Spatial axis of the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// A joint position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl JointPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set_axis(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Sub for JointPosition {
    type Output = JointPosition;

    fn sub(self, rhs: Self) -> Self::Output {
        JointPosition::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("joint {0} has a non-finite coordinate")]
    NonFiniteCoordinate(JointId),
    #[error("distance between a joint and itself ({0})")]
    SameJoint(JointId),
}

/// One timestamped, complete sample of all joints.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub timestamp_ms: u64,
    joints: [JointPosition; JOINT_COUNT],
}

impl SkeletonFrame {
    /// Builds a frame from positions given in canonical joint order.
    pub fn new(
        timestamp_ms: u64,
        joints: [JointPosition; JOINT_COUNT],
    ) -> Result<Self, SkeletonError> {
        if let Some(i) = joints.iter().position(|p| !p.is_finite()) {
            return Err(SkeletonError::NonFiniteCoordinate(JointId::ALL[i]));
        }
        Ok(Self {
            timestamp_ms,
            joints,
        })
    }

    /// Every joint at the same position.
    pub fn uniform(timestamp_ms: u64, position: JointPosition) -> Self {
        Self::new(timestamp_ms, [position; JOINT_COUNT]).expect("finite position")
    }

    pub fn joint(&self, id: JointId) -> JointPosition {
        self.joints[id.index()]
    }

    /// Replaces one joint. Panics on non-finite coordinates.
    pub fn set_joint(&mut self, id: JointId, position: JointPosition) {
        assert!(position.is_finite(), "non-finite position for {id}");
        self.joints[id.index()] = position;
    }

    pub fn joints(&self) -> &[JointPosition; JOINT_COUNT] {
        &self.joints
    }

    pub fn iter(&self) -> impl Iterator<Item = (JointId, JointPosition)> + '_ {
        JointId::ALL.iter().map(move |&j| (j, self.joints[j.index()]))
    }

    pub fn with_timestamp(mut self, timestamp_ms: u64) -> Self {
        self.timestamp_ms = timestamp_ms;
        self
    }
}

impl Index<JointId> for SkeletonFrame {
    type Output = JointPosition;

    fn index(&self, id: JointId) -> &JointPosition {
        &self.joints[id.index()]
    }
}

/// Euclidean distance between two distinct joints.
pub fn joint_distance(frame: &SkeletonFrame, a: JointId, b: JointId) -> Result<f64, SkeletonError> {
    if a == b {
        return Err(SkeletonError::SameJoint(a));
    }
    Ok((frame[a] - frame[b]).norm())
}

/// A decoded sequence of frames with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonStream {
    pub fps_nominal: f64,
    pub frames: Vec<SkeletonFrame>,
}

impl SkeletonStream {
    pub const DEFAULT_FPS: f64 = 30.0;

    pub fn new(frames: Vec<SkeletonFrame>) -> Self {
        Self {
            fps_nominal: Self::DEFAULT_FPS,
            frames,
        }
    }

    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 700);
        for frame in &self.frames {
            out.push_str(&encode_frame(frame));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("missing joint {0}")]
    MissingJoint(JointId),
    #[error("duplicate joint {0}")]
    DuplicateJoint(JointId),
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("non-finite coordinate{}", .0.map(|j| format!(" for joint {j}")).unwrap_or_default())]
    NonFiniteCoordinate(Option<JointId>),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::MalformedRecord(_) => "MalformedRecord",
            DecodeError::MissingJoint(_) => "MissingJoint",
            DecodeError::DuplicateJoint(_) => "DuplicateJoint",
            DecodeError::UnknownJoint(_) => "UnknownJoint",
            DecodeError::NonFiniteCoordinate(_) => "NonFiniteCoordinate",
        }
    }
}

/// A record-level failure while assembling a stream. `record` is 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("record {record}: {source}")]
    Decode { record: usize, source: DecodeError },
    #[error("record {record}: timestamp {timestamp_ms} does not increase (previous {previous_ms})")]
    NonMonotonic {
        record: usize,
        timestamp_ms: u64,
        previous_ms: u64,
    },
}

impl StreamError {
    pub fn record(&self) -> usize {
        match self {
            StreamError::Decode { record, .. } | StreamError::NonMonotonic { record, .. } => *record,
        }
    }
}

struct RawJoints([JointPosition; JOINT_COUNT]);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    t: u64,
    joints: RawJoints,
}

struct Coord([f64; 3]);

impl<'de> Deserialize<'de> for Coord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct CoordVisitor;
        impl<'de> Visitor<'de> for CoordVisitor {
            type Value = Coord;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an [x, y, z] array of numbers")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Coord, A::Error> {
                let mut out = [0.0; 3];
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = seq
                        .next_element()?
                        .ok_or_else(|| de::Error::invalid_length(i, &self))?;
                }
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(4, &self));
                }
                Ok(Coord(out))
            }
        }
        deserializer.deserialize_seq(CoordVisitor)
    }
}

// Decoding goes through a hand-written map visitor so duplicate keys are
// seen (serde_json maps keep only the last value).
const DUP_TAG: &str = "\u{1}dup:";
const MISSING_TAG: &str = "\u{1}missing:";
const UNKNOWN_TAG: &str = "\u{1}unknown:";
const NONFINITE_TAG: &str = "\u{1}nonfinite:";

impl<'de> Deserialize<'de> for RawJoints {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct JointsVisitor;
        impl<'de> Visitor<'de> for JointsVisitor {
            type Value = RawJoints;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from joint name to [x, y, z]")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawJoints, A::Error> {
                let mut slots: [Option<JointPosition>; JOINT_COUNT] = [None; JOINT_COUNT];
                while let Some(key) = map.next_key::<String>()? {
                    let id: JointId = key
                        .parse()
                        .map_err(|_| de::Error::custom(format!("{UNKNOWN_TAG}{key}")))?;
                    let Coord([x, y, z]) = map.next_value()?;
                    let pos = JointPosition::new(x, y, z);
                    if !pos.is_finite() {
                        return Err(de::Error::custom(format!("{NONFINITE_TAG}{id}")));
                    }
                    if slots[id.index()].replace(pos).is_some() {
                        return Err(de::Error::custom(format!("{DUP_TAG}{id}")));
                    }
                }
                let mut joints = [JointPosition::default(); JOINT_COUNT];
                for (i, slot) in slots.iter().enumerate() {
                    match slot {
                        Some(p) => joints[i] = *p,
                        None => {
                            return Err(de::Error::custom(format!(
                                "{MISSING_TAG}{}",
                                JointId::ALL[i]
                            )))
                        }
                    }
                }
                Ok(RawJoints(joints))
            }
        }
        deserializer.deserialize_map(JointsVisitor)
    }
}

fn classify(err: serde_json::Error) -> DecodeError {
    let msg = err.to_string();
    let tagged = |tag: &str| {
        msg.find(tag).map(|i| {
            let rest = &msg[i + tag.len()..];
            rest.split(|c: char| c == ' ' || c == '"' || c == '`')
                .next()
                .unwrap_or("")
                .to_string()
        })
    };
    if let Some(name) = tagged(DUP_TAG) {
        return DecodeError::DuplicateJoint(name.parse().expect("tagged joint"));
    }
    if let Some(name) = tagged(MISSING_TAG) {
        return DecodeError::MissingJoint(name.parse().expect("tagged joint"));
    }
    if let Some(name) = tagged(UNKNOWN_TAG) {
        return DecodeError::UnknownJoint(name);
    }
    if let Some(name) = tagged(NONFINITE_TAG) {
        return DecodeError::NonFiniteCoordinate(name.parse().ok());
    }
    // serde_json refuses to produce infinities from literals such as 1e400.
    if msg.starts_with("number out of range") {
        return DecodeError::NonFiniteCoordinate(None);
    }
    DecodeError::MalformedRecord(msg)
}

/// Decodes one `.skel.jsonl` record.
pub fn decode_frame(line: &str) -> Result<SkeletonFrame, DecodeError> {
    let raw: RawFrame = serde_json::from_str(line.trim()).map_err(classify)?;
    Ok(SkeletonFrame {
        timestamp_ms: raw.t,
        joints: raw.joints.0,
    })
}

pub(crate) fn fmt_meters(out: &mut String, v: f64) {
    use std::fmt::Write;
    let start = out.len();
    write!(out, "{v:.4}").expect("write to string");
    if &out[start..] == "-0.0000" {
        out.replace_range(start.., "0.0000");
    }
}

/// Canonical record form: joints in enum order, meters with 4 decimals.
pub fn encode_frame(frame: &SkeletonFrame) -> String {
    let mut out = String::with_capacity(700);
    out.push_str("{\"t\":");
    out.push_str(&frame.timestamp_ms.to_string());
    out.push_str(",\"joints\":{");
    for (i, (id, p)) in frame.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('"');
        out.push_str(id.as_str());
        out.push_str("\":[");
        fmt_meters(&mut out, p.x);
        out.push(',');
        fmt_meters(&mut out, p.y);
        out.push(',');
        fmt_meters(&mut out, p.z);
        out.push(']');
    }
    out.push_str("}}");
    out
}

/// Decodes a whole `.skel.jsonl` document, enforcing increasing timestamps.
/// Blank lines are ignored but still count toward record numbering.
pub fn decode_stream(text: &str) -> Result<SkeletonStream, StreamError> {
    let mut frames: Vec<SkeletonFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = i + 1;
        let frame = decode_frame(line).map_err(|source| StreamError::Decode { record, source })?;
        if let Some(prev) = frames.last() {
            if frame.timestamp_ms <= prev.timestamp_ms {
                return Err(StreamError::NonMonotonic {
                    record,
                    timestamp_ms: frame.timestamp_ms,
                    previous_ms: prev.timestamp_ms,
                });
            }
        }
        frames.push(frame);
    }
    Ok(SkeletonStream::new(frames))
}
