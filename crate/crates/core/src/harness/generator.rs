//! Synthetic skeleton streams from keyframed motion scripts.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::skeleton::{Axis, JointId, JointPosition, SkeletonFrame, SkeletonStream, JOINT_COUNT};

/// A neutral standing posture two meters from the camera.
pub fn standing_posture() -> [JointPosition; JOINT_COUNT] {
    use JointId::*;
    let mut p = [JointPosition::default(); JOINT_COUNT];
    let mut set = |j: JointId, x: f64, y: f64, z: f64| p[j.index()] = JointPosition::new(x, y, z);
    set(Head, 0.00, 1.62, 2.00);
    set(ShoulderCenter, 0.00, 1.42, 2.00);
    set(ShoulderLeft, 0.18, 1.38, 2.00);
    set(ShoulderRight, -0.18, 1.38, 2.00);
    set(ElbowLeft, 0.22, 1.12, 2.02);
    set(ElbowRight, -0.22, 1.12, 2.02);
    set(WristLeft, 0.24, 0.88, 2.00);
    set(WristRight, -0.24, 0.88, 2.00);
    set(HandLeft, 0.25, 0.80, 2.00);
    set(HandRight, -0.25, 0.80, 2.00);
    set(Spine, 0.00, 1.10, 2.02);
    set(HipCenter, 0.00, 0.92, 2.02);
    set(HipLeft, 0.10, 0.88, 2.02);
    set(HipRight, -0.10, 0.88, 2.02);
    set(KneeLeft, 0.11, 0.50, 2.00);
    set(KneeRight, -0.11, 0.50, 2.00);
    set(AnkleLeft, 0.11, 0.10, 2.02);
    set(AnkleRight, -0.11, 0.10, 2.02);
    set(FootLeft, 0.11, 0.04, 1.95);
    set(FootRight, -0.11, 0.04, 1.95);
    p
}

/// One coordinate target: `joint.axis` reaches `value` at `at_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub joint: JointId,
    pub axis: Axis,
    pub value: f64,
    pub at_ms: u64,
}

fn default_sigma() -> f64 {
    0.035
}

fn default_fps() -> f64 {
    30.0
}

/// Base posture plus per-coordinate keyframes, linearly interpolated.
/// Each coordinate starts at its base value at t = 0 and holds its last
/// keyframe value afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionScript {
    /// Overrides on top of [`standing_posture`].
    #[serde(default)]
    pub base: BTreeMap<JointId, [f64; 3]>,
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
    #[serde(default = "default_sigma")]
    pub noise_sigma_m: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub duration_ms: u64,
}

impl MotionScript {
    pub fn new(duration_ms: u64) -> Self {
        Self {
            base: BTreeMap::new(),
            keyframes: Vec::new(),
            noise_sigma_m: default_sigma(),
            fps: default_fps(),
            duration_ms,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma_m = sigma;
        self
    }

    pub fn keyframe(mut self, joint: JointId, axis: Axis, value: f64, at_ms: u64) -> Self {
        self.keyframes.push(Keyframe {
            joint,
            axis,
            value,
            at_ms,
        });
        self
    }

    /// Moves `joint` by `delta` over `[from_ms, to_ms]`, starting from where
    /// the script already has it at `from_ms`.
    pub fn shift(self, joint: JointId, axis: Axis, delta: f64, from_ms: u64, to_ms: u64) -> Self {
        let start = self.posture_at(from_ms)[joint.index()].axis(axis);
        self.keyframe(joint, axis, start, from_ms)
            .keyframe(joint, axis, start + delta, to_ms)
    }

    pub fn base_posture(&self) -> [JointPosition; JOINT_COUNT] {
        let mut p = standing_posture();
        for (j, [x, y, z]) in &self.base {
            p[j.index()] = JointPosition::new(*x, *y, *z);
        }
        p
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScript(m));
        if !(1.0..=120.0).contains(&self.fps) {
            return bad(format!("fps {} outside [1, 120]", self.fps));
        }
        if self.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        if !(self.noise_sigma_m.is_finite() && self.noise_sigma_m >= 0.0) {
            return bad("noise_sigma_m must be finite and non-negative".into());
        }
        for (j, c) in &self.base {
            if c.iter().any(|v| !v.is_finite()) {
                return bad(format!("base position of {j} is not finite"));
            }
        }
        for (i, k) in self.keyframes.iter().enumerate() {
            if k.at_ms > self.duration_ms {
                return bad(format!("keyframe {i} at {} ms is past the duration", k.at_ms));
            }
            if !k.value.is_finite() {
                return bad(format!("keyframe {i} value is not finite"));
            }
        }
        Ok(())
    }

    fn channels(&self) -> BTreeMap<(JointId, Axis), Vec<(u64, f64)>> {
        let base = self.base_posture();
        let mut channels: BTreeMap<(JointId, Axis), Vec<(u64, f64)>> = BTreeMap::new();
        for k in &self.keyframes {
            channels.entry((k.joint, k.axis)).or_default().push((k.at_ms, k.value));
        }
        for ((joint, axis), points) in channels.iter_mut() {
            points.sort_by_key(|p| p.0);
            if points[0].0 > 0 {
                points.insert(0, (0, base[joint.index()].axis(*axis)));
            }
        }
        channels
    }

    /// Noise-free posture at `t_ms`.
    pub fn posture_at(&self, t_ms: u64) -> [JointPosition; JOINT_COUNT] {
        let mut p = self.base_posture();
        for ((joint, axis), points) in self.channels() {
            p[joint.index()].set_axis(axis, interpolate(&points, t_ms));
        }
        p
    }
}

fn interpolate(points: &[(u64, f64)], t: u64) -> f64 {
    let i = points.partition_point(|p| p.0 <= t);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[i - 1].1;
    }
    let (t0, v0) = points[i - 1];
    let (t1, v1) = points[i];
    v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
}

/// Renders a script at its frame rate. X and Y carry Gaussian noise with the
/// script's sigma, Z with half of it. Deterministic in `(script, seed)`.
pub fn generate(script: &MotionScript, seed: u64) -> Result<SkeletonStream, HarnessError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = script.noise_sigma_m;
    let noise_xy = Normal::new(0.0, sigma).expect("valid sigma");
    let noise_z = Normal::new(0.0, sigma / 2.0).expect("valid sigma");
    let channels = script.channels();
    let base = script.base_posture();
    let period = 1000.0 / script.fps;
    let mut frames = Vec::new();
    for i in 0.. {
        let t = (i as f64 * period).round() as u64;
        if t >= script.duration_ms {
            break;
        }
        let mut joints = base;
        for ((joint, axis), points) in &channels {
            joints[joint.index()].set_axis(*axis, interpolate(points, t));
        }
        if sigma > 0.0 {
            for p in joints.iter_mut() {
                p.x += noise_xy.sample(&mut rng);
                p.y += noise_xy.sample(&mut rng);
                p.z += noise_z.sample(&mut rng);
            }
        }
        frames.push(SkeletonFrame::new(t, joints).expect("finite script"));
    }
    Ok(SkeletonStream {
        fps_nominal: script.fps,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_motion_no_noise() {
        let s = generate(&MotionScript::new(1000).with_noise(0.0), 1).unwrap();
        assert_eq!(s.frames.len(), 30);
        for f in &s.frames {
            assert_eq!(f.joints(), &standing_posture());
        }
    }

    #[test]
    fn interpolation_midpoint() {
        let script = MotionScript::new(3000)
            .with_noise(0.0)
            .keyframe(JointId::HandRight, Axis::Y, 1.0, 0)
            .keyframe(JointId::HandRight, Axis::Y, 1.4, 2000);
        let s = generate(&script, 0).unwrap();
        let f = s.frames.iter().find(|f| f.timestamp_ms == 1000).unwrap();
        assert!((f[JointId::HandRight].y - 1.2).abs() < 1e-12);
        let last = s.frames.last().unwrap();
        assert!((last[JointId::HandRight].y - 1.4).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let script = MotionScript::new(2000).shift(JointId::Head, Axis::X, 0.3, 500, 1500);
        assert_eq!(generate(&script, 9).unwrap(), generate(&script, 9).unwrap());
        assert_ne!(generate(&script, 9).unwrap(), generate(&script, 10).unwrap());
    }

    #[test]
    fn frame_timing() {
        let s = generate(&MotionScript::new(5000), 3).unwrap();
        assert_eq!(s.frames.len(), 150);
        assert_eq!(s.frames[1].timestamp_ms, 33);
        assert_eq!(s.frames[149].timestamp_ms, 4967);
    }

    #[test]
    fn invalid_scripts() {
        let mut s = MotionScript::new(1000);
        s.fps = 0.5;
        assert!(generate(&s, 0).is_err());
        let s = MotionScript::new(1000).keyframe(JointId::Head, Axis::Y, 1.0, 2000);
        assert!(matches!(generate(&s, 0), Err(HarnessError::InvalidScript(_))));
    }

    #[test]
    fn noise_sigma_matches() {
        let script = MotionScript::new(100_000 / 3).with_noise(0.035);
        let s = generate(&script, 42).unwrap();
        let base = standing_posture();
        let xs: Vec<f64> = s
            .frames
            .iter()
            .flat_map(|f| f.iter().map(|(j, p)| p.x - base[j.index()].x).collect::<Vec<_>>())
            .take(10_000)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 0.035).abs() < 0.2 * 0.035, "{sd}");
    }
}
