//! Reference implementations and generators shared by the integration and
//! acceptance tests. Nothing here calls into the code it is checking.

#![allow(dead_code)]

pub mod corpus;

use std::collections::HashMap;

use gemini_core::constraint::AxisSet;
use gemini_core::grammar::{CommandEvent, Phrase, TranscriptToken};
use gemini_core::skeleton::{JointId, JointPosition, JOINT_COUNT};
use gemini_core::{Constraint, PoseDefinition, PoseEvent, PoseEventKind, SkeletonFrame};
use rand::Rng;

pub fn joint(rng: &mut impl Rng) -> JointId {
    JointId::ALL[rng.gen_range(0..JOINT_COUNT)]
}

pub fn joint_pair(rng: &mut impl Rng) -> (JointId, JointId) {
    let a = joint(rng);
    loop {
        let b = joint(rng);
        if b != a {
            return (a, b);
        }
    }
}

pub fn position(rng: &mut impl Rng) -> JointPosition {
    JointPosition::new(
        rng.gen_range(-0.6..0.6),
        rng.gen_range(0.0..2.0),
        rng.gen_range(1.4..2.6),
    )
}

pub fn frame(rng: &mut impl Rng, t: u64) -> SkeletonFrame {
    let mut joints = [JointPosition::default(); JOINT_COUNT];
    for j in joints.iter_mut() {
        *j = position(rng);
    }
    SkeletonFrame::new(t, joints).unwrap()
}

pub fn constraint(rng: &mut impl Rng) -> Constraint {
    let (a, b) = joint_pair(rng);
    let margin = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..0.4) };
    match rng.gen_range(0..5) {
        0 => {
            let lo: f64 = rng.gen_range(0.0..1.2);
            let hi = lo + rng.gen_range(0.0..0.8);
            let axes = AxisSet::ALL[rng.gen_range(0..7)];
            Constraint::Distance { a, b, min: lo, max: hi, axes }
        }
        1 => Constraint::in_front(a, b, margin),
        2 => Constraint::left_to(a, b, margin),
        3 => Constraint::above_of(a, b, margin),
        _ => Constraint::above_value(a, rng.gen_range(-0.2..2.2)),
    }
}

pub fn pose(rng: &mut impl Rng, id: &str, constraints: usize) -> PoseDefinition {
    let cs = (0..constraints).map(|_| constraint(rng)).collect();
    PoseDefinition::new(id, cs).with_hysteresis(rng.gen_range(1..=4), rng.gen_range(1..=4))
}

/// The five predicates, written out from their definitions.
pub fn oracle_constraint(c: &Constraint, f: &SkeletonFrame) -> bool {
    let p = |j: JointId| f.joints()[JointId::ALL.iter().position(|x| *x == j).unwrap()];
    match c {
        Constraint::Distance { a, b, min, max, axes } => {
            let (pa, pb) = (p(*a), p(*b));
            let mut sum = 0.0;
            if axes.bits() & 1 != 0 {
                sum += (pa.x - pb.x) * (pa.x - pb.x);
            }
            if axes.bits() & 2 != 0 {
                sum += (pa.y - pb.y) * (pa.y - pb.y);
            }
            if axes.bits() & 4 != 0 {
                sum += (pa.z - pb.z) * (pa.z - pb.z);
            }
            let d = sum.sqrt();
            *min <= d && d <= *max
        }
        Constraint::InFront { a, b, margin } => p(*a).z + margin < p(*b).z,
        Constraint::LeftTo { a, b, margin } => p(*a).x + margin < p(*b).x,
        Constraint::AboveOf { a, b, margin } => p(*a).y > p(*b).y + margin,
        Constraint::AboveValue { a, threshold } => p(*a).y > *threshold,
    }
}

/// Replays the whole history for every frame: a pose is active after frame
/// `i` when it was active before and the last `release` flags are not all
/// false, or inactive before and the last `activate` flags are all true.
pub fn oracle_detector(poses: &[PoseDefinition], frames: &[SkeletonFrame]) -> Vec<PoseEvent> {
    let flags: Vec<Vec<bool>> = poses
        .iter()
        .map(|p| {
            frames
                .iter()
                .map(|f| p.constraints.iter().all(|c| oracle_constraint(c, f)))
                .collect()
        })
        .collect();
    let tail_all = |v: &[bool], end: usize, n: u32, want: bool| {
        let n = n as usize;
        end + 1 >= n && v[end + 1 - n..=end].iter().all(|x| *x == want)
    };
    let mut active = vec![false; poses.len()];
    let mut events = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        for (k, pose) in poses.iter().enumerate() {
            let v = &flags[k];
            let kind = if !active[k] && v[i] {
                tail_all(v, i, pose.activate_frames, true).then_some(PoseEventKind::Activated)
            } else if active[k] && !v[i] {
                tail_all(v, i, pose.release_frames, false).then_some(PoseEventKind::Deactivated)
            } else {
                None
            };
            if let Some(kind) = kind {
                active[k] = kind == PoseEventKind::Activated;
                events.push(PoseEvent {
                    pose_id: pose.pose_id.clone(),
                    kind,
                    timestamp_ms: f.timestamp_ms,
                });
            }
        }
    }
    events
}

pub fn oracle_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        v[n / 2 - 1] / 2.0 + v[n / 2] / 2.0
    }
}

/// Offline leftmost-longest segmentation of each gap-separated chunk.
pub fn oracle_grammar(phrases: &[Phrase], tokens: &[TranscriptToken], max_gap_ms: u64) -> Vec<CommandEvent> {
    let table: HashMap<Vec<String>, &str> = phrases
        .iter()
        .map(|p| (p.words.iter().map(|w| w.to_lowercase()).collect(), p.phrase_id.as_str()))
        .collect();
    let longest = phrases.iter().map(|p| p.words.len()).max().unwrap_or(0);
    let mut chunks: Vec<Vec<(usize, &TranscriptToken)>> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        match chunks.last_mut() {
            Some(c) if tok.timestamp_ms - c.last().unwrap().1.timestamp_ms <= max_gap_ms => c.push((i, tok)),
            _ => chunks.push(vec![(i, tok)]),
        }
    }
    let mut out = Vec::new();
    for chunk in chunks {
        let words: Vec<String> = chunk.iter().map(|(_, t)| t.word.trim().to_lowercase()).collect();
        let mut i = 0;
        while i < words.len() {
            let hit = (1..=longest.min(words.len() - i))
                .rev()
                .find_map(|k| table.get(&words[i..i + k]).map(|id| (k, *id)));
            match hit {
                Some((k, id)) => {
                    out.push(CommandEvent {
                        phrase_id: id.to_string(),
                        timestamp_ms: chunk[i + k - 1].1.timestamp_ms,
                        first_token: chunk[i].0 as u64,
                        last_token: chunk[i + k - 1].0 as u64,
                    });
                    i += k;
                }
                None => i += 1,
            }
        }
    }
    out
}
