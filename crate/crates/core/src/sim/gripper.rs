//! Fixed two-finger gripper geometry.
//!
//! The gripper pose is the tool point, midway between the fingertips. With
//! identity orientation the fingers hang below the wrist: each finger box
//! spans local z in `[0, 0.08]` and the fingers are offset along local x.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

use super::contact::Proxy;

/// Half-extents of one 0.01 x 0.04 x 0.08 m finger.
pub const FINGER_HALF_EXTENTS: [f64; 3] = [0.005, 0.02, 0.04];
/// Finger center offset from the tool axis when open.
pub const OPEN_OFFSET: f64 = 0.04;
/// Closed fingers touch each other.
pub const CLOSED_OFFSET: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fingers {
    Open,
    Closed,
}

impl Fingers {
    pub fn offset(self) -> f64 {
        match self {
            Fingers::Open => OPEN_OFFSET,
            Fingers::Closed => CLOSED_OFFSET,
        }
    }

    pub fn is_closed(self) -> bool {
        self == Fingers::Closed
    }
}

pub fn finger_half_extents() -> Vec3 {
    Vec3::from(FINGER_HALF_EXTENTS)
}

/// World poses of the two finger box centers.
pub fn finger_poses(pose: &Pose, fingers: Fingers) -> [Pose; 2] {
    let h = FINGER_HALF_EXTENTS[2];
    let s = fingers.offset();
    [s, -s].map(|x| pose.compose(&Pose::from_translation(Vec3::new(x, 0.0, h))))
}

pub fn finger_proxies(pose: &Pose, fingers: Fingers) -> [Proxy; 2] {
    let half = finger_half_extents();
    finger_poses(pose, fingers).map(|p| {
        let rot = p.orientation.to_rotation_matrix().into_inner();
        Proxy::Box(crate::geometry::Aabb::from_center_half(p.position, rot.abs() * half))
    })
}

/// All 8 finger corners in world coordinates, for displacement bounds.
pub fn finger_corners(pose: &Pose, fingers: Fingers) -> Vec<Vec3> {
    let half = finger_half_extents();
    let mut out = Vec::with_capacity(16);
    for p in finger_poses(pose, fingers) {
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out.push(p.transform_point(&Vec3::new(sx * half.x, sy * half.y, sz * half.z)));
                }
            }
        }
    }
    out
}
