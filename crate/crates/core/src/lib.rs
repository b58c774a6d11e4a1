//! Planning with a digital twin: simulate candidate gripper actions, render
//! their outcomes, and let a critic choose between them inside a
//! cross-entropy search.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod critic;
pub mod geometry;
pub mod render;
pub mod seed;
pub mod planner;
pub mod sim;
pub mod templates;
pub mod trace;
pub mod twin;

#[cfg(test)]
mod testing;

pub use geometry::{Aabb, Pose, Vec3};
pub use render::{Camera, CameraRig, RgbImage, ViewName};
pub use sim::{Action, GripperState, SimConfig};
pub use critic::{Critic, CriticKind, CriticVerdict, SubtaskPlan};
pub use planner::{ActionDistribution, PlanStepResult, PlannerConfig, RunConfig};
pub use trace::{EpisodeTrace, TerminalStatus};
pub use twin::{BodyTransformSet, RigidBody, SceneTwin, SplatPoint};
