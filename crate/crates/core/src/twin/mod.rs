//! The digital twin: rigid bodies, anchored splats, cameras, workspace, and
//! the task. Every value here is immutable once built; operations return new
//! scenes.

mod anchor;
mod ply;
mod scene_file;
mod shape;
mod task;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Aabb, Pose, Vec3};
use crate::render::CameraRig;

pub use anchor::{anchor_splats, DEFAULT_ANCHOR_THRESHOLD};
pub use ply::{read_ply, read_ply_bytes, write_ply, write_ply_bytes};
pub use scene_file::{load_scene, parse_scene, scene_content_hash, scene_to_json, write_scene};
pub use shape::Shape;
pub use task::{GoalTarget, InitialGripper, OracleGoal, Predicate, ScriptedPlan, ScriptedSubtask, TaskSpec};
pub use transform::{apply_transforms, BodyTransformSet};

/// Reserved name: the gripper is simulated separately and never a body.
pub const GRIPPER_ID: &str = "gripper";

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene file: {0}")]
    Parse(String),
    #[error("malformed PLY: {0}")]
    Ply(String),
    #[error("invalid scene: {entity}: {message}")]
    Validation { entity: String, message: String },
    #[error("unknown body {0:?} in transform set")]
    UnknownBody(String),
}

impl TwinError {
    pub fn code(&self) -> &'static str {
        match self {
            TwinError::Io { .. } => "IO_ERROR",
            TwinError::Parse(_) => "SCENE_PARSE_ERROR",
            TwinError::Ply(_) => "PLY_PARSE_ERROR",
            TwinError::Validation { .. } => "INVALID_SCENE",
            TwinError::UnknownBody(_) => "UNKNOWN_BODY",
        }
    }

    pub(crate) fn invalid(entity: impl Into<String>, message: impl Into<String>) -> Self {
        TwinError::Validation {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidBody {
    pub id: String,
    pub movable: bool,
    #[serde(default)]
    pub graspable: bool,
    pub shape: Shape,
    pub pose: Pose,
}

impl RigidBody {
    /// Distance from `p` to the body's solid (zero inside).
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.shape.distance(&self.pose, p)
    }

    pub fn world_aabb(&self) -> Aabb {
        self.shape.world_aabb(&self.pose)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anchor {
    Static,
    Body(String),
}

impl Anchor {
    pub const STATIC_NAME: &'static str = "STATIC";

    pub fn body(&self) -> Option<&str> {
        match self {
            Anchor::Static => None,
            Anchor::Body(id) => Some(id),
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Static => f.write_str(Self::STATIC_NAME),
            Anchor::Body(id) => f.write_str(id),
        }
    }
}

impl Serialize for Anchor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Anchor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == Anchor::STATIC_NAME {
            Anchor::Static
        } else {
            Anchor::Body(s)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplatPoint {
    pub position: Vec3,
    pub color: [u8; 3],
    pub radius: f64,
    pub opacity: f64,
    /// `None` only before anchoring; a loaded scene has every splat anchored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Anchor>,
}

impl SplatPoint {
    pub fn anchor_body(&self) -> Option<&str> {
        self.anchor.as_ref().and_then(Anchor::body)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneTwin {
    pub bodies: Vec<RigidBody>,
    pub splats: Vec<SplatPoint>,
    pub cameras: CameraRig,
    pub workspace: Aabb,
    pub support_plane_z: f64,
    pub anchor_threshold_m: f64,
    pub task: TaskSpec,
}

impl SceneTwin {
    pub fn body(&self, id: &str) -> Option<&RigidBody> {
        self.bodies.iter().find(|b| b.id == id)
    }

    pub fn body_index(&self, id: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.id == id)
    }

    pub fn movable_ids(&self) -> BTreeSet<&str> {
        self.bodies.iter().filter(|b| b.movable).map(|b| b.id.as_str()).collect()
    }

    pub fn body_poses(&self) -> BTreeMap<String, Pose> {
        self.bodies.iter().map(|b| (b.id.clone(), b.pose)).collect()
    }

    /// Checks every scene invariant; errors name the offending entity.
    pub fn validate(&self) -> Result<(), TwinError> {
        if !self.workspace.is_ordered() {
            return Err(TwinError::invalid("workspace", "min exceeds max"));
        }
        if !(self.anchor_threshold_m > 0.0) {
            return Err(TwinError::invalid("anchor_threshold_m", "must be positive"));
        }
        let mut seen = BTreeSet::new();
        for body in &self.bodies {
            if body.id.is_empty() {
                return Err(TwinError::invalid("body", "empty id"));
            }
            if body.id == GRIPPER_ID || body.id == Anchor::STATIC_NAME {
                return Err(TwinError::invalid(&body.id, "reserved body id"));
            }
            if !seen.insert(body.id.as_str()) {
                return Err(TwinError::invalid(&body.id, "duplicate body id"));
            }
            if body.graspable && !body.movable {
                return Err(TwinError::invalid(&body.id, "graspable body must be movable"));
            }
            body.shape
                .validate()
                .map_err(|m| TwinError::invalid(&body.id, m))?;
            if !self.workspace.contains(&body.pose.position) {
                return Err(TwinError::invalid(&body.id, "pose outside workspace bounds"));
            }
        }
        let movable = self.movable_ids();
        for (i, splat) in self.splats.iter().enumerate() {
            let entity = format!("splat[{i}]");
            if !(splat.radius > 0.0) {
                return Err(TwinError::invalid(entity, "radius must be positive"));
            }
            if !(splat.opacity > 0.0 && splat.opacity <= 1.0) {
                return Err(TwinError::invalid(entity, "opacity must lie in (0, 1]"));
            }
            if let Some(id) = splat.anchor_body() {
                if !movable.contains(id) {
                    return Err(TwinError::invalid(
                        entity,
                        format!("anchor {id:?} is not a movable body"),
                    ));
                }
            }
        }
        for (view, cam) in self.cameras.iter() {
            cam.validate()
                .map_err(|m| TwinError::invalid(format!("camera {view}"), m))?;
        }
        self.task.validate(self)
    }
}
