//! Small scene builders shared by unit tests.

use crate::geometry::{Aabb, Pose, Vec3};
use crate::render::default_rig;
use crate::twin::{Predicate, RigidBody, SceneTwin, Shape, TaskSpec};

pub fn workspace() -> Aabb {
    Aabb::new(Vec3::new(-0.5, -0.5, 0.0), Vec3::new(0.5, 0.5, 0.5))
}

pub fn cube(id: &str, at: Vec3, half: f64) -> RigidBody {
    RigidBody {
        id: id.into(),
        movable: true,
        graspable: true,
        shape: Shape::Box {
            half_extents: Vec3::repeat(half),
        },
        pose: Pose::from_translation(at),
    }
}

pub fn wall(id: &str, at: Vec3, half: Vec3) -> RigidBody {
    RigidBody {
        id: id.into(),
        movable: false,
        graspable: false,
        shape: Shape::Box { half_extents: half },
        pose: Pose::from_translation(at),
    }
}

pub fn scene_with(bodies: Vec<RigidBody>) -> SceneTwin {
    let ws = workspace();
    SceneTwin {
        bodies,
        splats: vec![],
        cameras: default_rig(&ws, 64, 64).unwrap(),
        workspace: ws,
        support_plane_z: 0.0,
        anchor_threshold_m: 0.05,
        task: TaskSpec {
            instruction: "test".into(),
            success_predicate: Predicate::GripperInRegion {
                region: Aabb::new(Vec3::zeros(), Vec3::zeros()),
            },
            oracle_goal: None,
            scripted_subtasks: None,
            initial_gripper: None,
        },
    }
}
