//! Pinhole cameras and the four-view rig.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, Vec3};

use super::RenderError;

pub const DEFAULT_IMAGE_SIZE: u32 = 256;

/// Pinhole camera. The pose maps camera coordinates to world coordinates;
/// the camera frame is x right, y down, z forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub pose: Pose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Visible { pixel: [f64; 2], depth: f64 },
    Behind,
}

impl Camera {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err("need 0 < near < far".into());
        }
        if self.width < 16 || self.height < 16 {
            return Err("image must be at least 16x16".into());
        }
        Ok(())
    }

    pub fn to_camera_frame(&self, p: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(p)
    }

    /// Projects a camera-frame point. Points at or in front of the near
    /// plane are `Behind`.
    pub fn project_camera_point(&self, pc: &Vec3) -> Projection {
        if pc.z <= self.near {
            return Projection::Behind;
        }
        Projection::Visible {
            pixel: [self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy],
            depth: pc.z,
        }
    }

    /// Optical axis (camera +z) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.pose.orientation * Vec3::z()
    }

    /// Same view at a different resolution; intrinsics scale with it.
    pub fn resized(&self, width: u32, height: u32) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}

pub fn project(point: &Vec3, camera: &Camera) -> Projection {
    camera.project_camera_point(&camera.to_camera_frame(point))
}

/// Camera pose at `eye` looking at `target`; image "up" follows `up`.
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Pose {
    let forward = (target - eye).normalize();
    let right = forward.cross(up).normalize();
    let down = forward.cross(&right);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
    Pose::new(*eye, UnitQuaternion::from_rotation_matrix(&rot))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViewName {
    #[serde(rename = "front")]
    Front,
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "top-down")]
    TopDown,
}

impl ViewName {
    /// Fixed tie-break order.
    pub const ALL: [ViewName; 4] = [ViewName::Front, ViewName::Left, ViewName::Right, ViewName::TopDown];

    pub fn as_str(&self) -> &'static str {
        match self {
            ViewName::Front => "front",
            ViewName::Left => "left",
            ViewName::Right => "right",
            ViewName::TopDown => "top-down",
        }
    }
}

impl fmt::Display for ViewName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "front" => Ok(ViewName::Front),
            "left" => Ok(ViewName::Left),
            "right" => Ok(ViewName::Right),
            "top-down" | "topdown" | "top_down" | "top" => Ok(ViewName::TopDown),
            other => Err(format!("unknown view name {other:?}")),
        }
    }
}

/// Exactly four named cameras.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRig {
    pub front: Camera,
    pub left: Camera,
    pub right: Camera,
    #[serde(rename = "top-down")]
    pub top_down: Camera,
}

impl CameraRig {
    pub fn get(&self, view: ViewName) -> &Camera {
        match view {
            ViewName::Front => &self.front,
            ViewName::Left => &self.left,
            ViewName::Right => &self.right,
            ViewName::TopDown => &self.top_down,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ViewName, &Camera)> {
        ViewName::ALL.into_iter().map(move |v| (v, self.get(v)))
    }

    pub fn resized(&self, width: u32, height: u32) -> CameraRig {
        CameraRig {
            front: self.front.resized(width, height),
            left: self.left.resized(width, height),
            right: self.right.resized(width, height),
            top_down: self.top_down.resized(width, height),
        }
    }
}

/// Four cameras at 1.5x the workspace diagonal from its center, each
/// looking at the center. Focal length is chosen so a sphere of the
/// workspace's half-diagonal fills the image.
pub fn default_rig(workspace: &Aabb, width: u32, height: u32) -> Result<CameraRig, RenderError> {
    if workspace.is_degenerate() {
        return Err(RenderError::DegenerateWorkspace);
    }
    let center = workspace.center();
    let diagonal = workspace.diagonal();
    let distance = 1.5 * diagonal;
    // half-diagonal over the distance to the near side of the bounding sphere
    let tan_half = 0.5 * diagonal / (distance - 0.5 * diagonal);
    let make = |offset: Vec3, up: Vec3| {
        let eye = center + offset;
        Camera {
            pose: look_at(&eye, &center, &up),
            fx: 0.5 * width as f64 / tan_half,
            fy: 0.5 * width as f64 / tan_half,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            near: 0.01,
            far: 3.0 * distance,
        }
    };
    Ok(CameraRig {
        front: make(Vec3::new(0.0, -distance, 0.0), Vec3::z()),
        left: make(Vec3::new(-distance, 0.0, 0.0), Vec3::z()),
        right: make(Vec3::new(distance, 0.0, 0.0), Vec3::z()),
        top_down: make(Vec3::new(0.0, 0.0, distance), Vec3::y()),
    })
}
