//! Scripted body poses used for round-trip inference checks and fixtures.
//!
//! Every scenario rests for one second, moves into the pose over the next
//! second and holds it until the end of the recording.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generator::MotionScript;
use crate::skeleton::Axis::{self, X, Y, Z};
use crate::skeleton::JointId::{self, *};

pub const REST_MS: u64 = 1000;
pub const TRANSITION_MS: u64 = 1000;
pub const RECORDING_MS: u64 = 5000;

/// Relative amplitude jitter applied to re-enactments.
pub const REENACTMENT_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub name: &'static str,
    pub motions: &'static [(JointId, Axis, f64)],
}

pub const SCENARIOS: [Scenario; 10] = [
    Scenario {
        name: "raise_right_arm",
        motions: &[
            (HandRight, Y, 1.20),
            (WristRight, Y, 1.05),
            (ElbowRight, Y, 0.50),
        ],
    },
    Scenario {
        name: "raise_left_arm",
        motions: &[(HandLeft, Y, 1.20), (WristLeft, Y, 1.05), (ElbowLeft, Y, 0.50)],
    },
    Scenario {
        name: "step_forward",
        motions: &[(FootRight, Z, -0.40), (AnkleRight, Z, -0.40), (KneeRight, Z, -0.25)],
    },
    Scenario {
        name: "crouch",
        motions: &[
            (Head, Y, -0.45),
            (ShoulderCenter, Y, -0.45),
            (ShoulderLeft, Y, -0.45),
            (ShoulderRight, Y, -0.45),
            (Spine, Y, -0.42),
            (HipCenter, Y, -0.40),
            (HandLeft, Y, -0.40),
            (HandRight, Y, -0.40),
            (KneeLeft, Y, -0.15),
            (KneeRight, Y, -0.15),
            (KneeLeft, Z, -0.30),
            (KneeRight, Z, -0.30),
        ],
    },
    Scenario {
        name: "outstretched_arms",
        motions: &[
            (HandLeft, X, 0.60),
            (HandLeft, Y, 0.55),
            (HandRight, X, -0.60),
            (HandRight, Y, 0.55),
            (WristLeft, X, 0.50),
            (WristRight, X, -0.50),
        ],
    },
    Scenario {
        name: "punch_right",
        motions: &[(HandRight, Z, -0.60), (HandRight, Y, 0.50), (WristRight, Z, -0.55)],
    },
    Scenario {
        name: "kick_right",
        motions: &[
            (FootRight, Z, -0.55),
            (FootRight, Y, 0.45),
            (KneeRight, Y, 0.25),
            (KneeRight, Z, -0.30),
        ],
    },
    Scenario {
        name: "lean_left",
        motions: &[
            (Head, X, 0.40),
            (ShoulderCenter, X, 0.32),
            (Spine, X, 0.18),
            (HandLeft, X, 0.30),
            (HandRight, X, 0.30),
        ],
    },
    Scenario {
        name: "hands_behind_head",
        motions: &[
            (HandLeft, Y, 0.75),
            (HandLeft, X, -0.13),
            (HandLeft, Z, 0.15),
            (HandRight, Y, 0.75),
            (HandRight, X, 0.13),
            (HandRight, Z, 0.15),
        ],
    },
    Scenario {
        name: "draw_bow",
        motions: &[
            (HandLeft, X, 0.50),
            (HandLeft, Y, 0.55),
            (HandRight, X, 0.15),
            (HandRight, Y, 0.60),
        ],
    },
];

impl Scenario {
    pub fn by_name(name: &str) -> Option<Scenario> {
        SCENARIOS.iter().copied().find(|s| s.name == name)
    }

    /// The scripted pose with every displacement scaled by `amplitude`.
    pub fn script(&self, amplitude: f64) -> MotionScript {
        let mut script = MotionScript::new(RECORDING_MS);
        for &(joint, axis, delta) in self.motions {
            script = script.shift(joint, axis, delta * amplitude, REST_MS, REST_MS + TRANSITION_MS);
        }
        script
    }

    /// A re-enactment with amplitude jitter drawn from `seed`.
    pub fn reenactment(&self, seed: u64) -> MotionScript {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a11);
        let amplitude = 1.0 + rng.gen_range(-REENACTMENT_JITTER..=REENACTMENT_JITTER);
        self.script(amplitude)
    }
}

/// Standing still for a full recording.
pub fn idle_script() -> MotionScript {
    MotionScript::new(RECORDING_MS)
}
