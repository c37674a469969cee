//! Multimodal (pose, voice, button) to keyboard and mouse translation.
//!
//! Skeleton frames run through a pose detector, transcript tokens through a
//! phrase grammar and device events straight to an interaction scheme that
//! maps each trigger to synthesized key and mouse events.

pub mod constraint;
pub mod engine;
pub mod grammar;
pub mod harness;
pub mod inference;
pub mod mapper;
pub mod pipeline;
pub mod service;
pub mod skeleton;

pub use constraint::{Constraint, DetectorState, PoseDefinition, PoseEvent, PoseEventKind};
pub use grammar::{CommandEvent, Grammar, MatchState, Phrase, TranscriptToken};
pub use inference::{infer, InferenceConfig, InferenceError, Recording};
pub use mapper::scheme::{load_scheme, InteractionScheme, SchemeError, SchemeErrorCode};
pub use mapper::{InputMapper, OutputEvent, OutputKind, SchedulerState, Trigger};
pub use skeleton::{JointId, JointPosition, SkeletonFrame, SkeletonStream};
