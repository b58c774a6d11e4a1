//! Seeded fixture scenes: reach, press, pick-place, push-region and pair-up.
//!
//! Every template lays out its bodies randomly from the seed, covers the
//! table and the bodies with splats, and ships a scripted subtask plan plus
//! oracle goals so the oracle critic can run it.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Aabb, Pose, Vec3};
use crate::render::{default_rig, DEFAULT_IMAGE_SIZE};
use crate::seed::mix;
use crate::twin::{
    anchor_splats, scene_to_json, write_ply, Anchor, GoalTarget, InitialGripper, OracleGoal, Predicate, RigidBody,
    SceneTwin, ScriptedPlan, ScriptedSubtask, Shape, SplatPoint, TaskSpec, TwinError, GRIPPER_ID,
};

pub const TEMPLATE_NAMES: [&str; 5] = ["reach", "press", "pick-place", "push-region", "pair-up"];

/// Splats per generated scene.
pub const SPLAT_COUNT: usize = 5000;
const TABLE_GRID: usize = 50;
const TABLE_Z: f64 = -0.003;
const ANCHOR_THRESHOLD: f64 = 0.002;
const TABLE_COLOR: [u8; 3] = [190, 170, 140];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("UNKNOWN_TEMPLATE: {0:?} (expected one of reach, press, pick-place, push-region, pair-up)")]
    Unknown(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
}

impl TemplateError {
    pub fn code(&self) -> &'static str {
        match self {
            TemplateError::Unknown(_) => "UNKNOWN_TEMPLATE",
            TemplateError::Twin(e) => e.code(),
        }
    }
}

pub fn workspace() -> Aabb {
    Aabb::new(Vec3::new(-0.3, -0.3, 0.0), Vec3::new(0.3, 0.3, 0.4))
}

fn body(id: &str, movable: bool, graspable: bool, shape: Shape, at: Vec3) -> RigidBody {
    RigidBody {
        id: id.into(),
        movable,
        graspable,
        shape,
        pose: Pose::from_translation(at),
    }
}

fn cuboid(half: [f64; 3]) -> Shape {
    Shape::Box {
        half_extents: Vec3::from(half),
    }
}

fn region(center: Vec3, half: Vec3) -> Aabb {
    Aabb::from_center_half(center, half)
}

fn gripper_goal(target: Vec3) -> OracleGoal {
    OracleGoal {
        subject: GRIPPER_ID.into(),
        target: GoalTarget::Point(target),
        hold: None,
    }
}

fn subtask(text: &str, goal: OracleGoal, done: Predicate) -> ScriptedSubtask {
    ScriptedSubtask {
        text: text.into(),
        goal: Some(goal),
        done: Some(done),
    }
}

struct Layout {
    bodies: Vec<RigidBody>,
    colors: Vec<[u8; 3]>,
    /// Table patches tinted to mark target areas.
    patches: Vec<(Aabb, [u8; 3])>,
    task: TaskSpec,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn jitter(rng: &mut ChaCha8Rng, c: [u8; 3]) -> [u8; 3] {
    c.map(|x| (x as i32 + rng.gen_range(-10..=10)).clamp(0, 255) as u8)
}

fn surface_area(shape: &Shape) -> f64 {
    match shape {
        Shape::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
        Shape::Sphere { radius } => 4.0 * PI * radius * radius,
        Shape::Cylinder { radius, half_height } => 2.0 * PI * radius * (radius + 2.0 * half_height),
        Shape::Mesh { .. } => 0.0,
    }
}

/// Uniform point on the surface in the body frame.
fn surface_point(shape: &Shape, rng: &mut ChaCha8Rng) -> Vec3 {
    match shape {
        Shape::Box { half_extents: h } => {
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.gen_range(0.0..total);
            let mut axis = 2;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = i;
                    break;
                }
                pick -= a;
            }
            let mut p = Vec3::new(
                rng.gen_range(-h.x..=h.x),
                rng.gen_range(-h.y..=h.y),
                rng.gen_range(-h.z..=h.z),
            );
            p[axis] = if rng.gen_bool(0.5) { h[axis] } else { -h[axis] };
            p
        }
        Shape::Sphere { radius } => {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            Vec3::new(r * phi.cos(), r * phi.sin(), z) * *radius
        }
        Shape::Cylinder { radius, half_height } => {
            let side = 2.0 * half_height;
            let cap = *radius / 2.0;
            let phi = rng.gen_range(0.0..2.0 * PI);
            if rng.gen_range(0.0..side + 2.0 * cap) < side {
                Vec3::new(radius * phi.cos(), radius * phi.sin(), rng.gen_range(-half_height..=*half_height))
            } else {
                let r = radius * rng.gen_range(0.0f64..=1.0).sqrt();
                let z = if rng.gen_bool(0.5) { *half_height } else { -half_height };
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            }
        }
        Shape::Mesh { vertices, .. } => vertices[rng.gen_range(0..vertices.len())],
    }
}

fn splats(layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<SplatPoint> {
    let ws = workspace();
    let mut out = Vec::with_capacity(SPLAT_COUNT);
    let step = (ws.max.x - ws.min.x) / TABLE_GRID as f64;
    for i in 0..TABLE_GRID {
        for j in 0..TABLE_GRID {
            let p = Vec3::new(
                ws.min.x + (i as f64 + 0.5) * step,
                ws.min.y + (j as f64 + 0.5) * step,
                TABLE_Z,
            );
            let base = layout
                .patches
                .iter()
                .find(|(r, _)| p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y)
                .map_or(TABLE_COLOR, |(_, c)| *c);
            out.push((p, jitter(rng, base), 0.007));
        }
    }
    let budget = SPLAT_COUNT - out.len();
    let areas: Vec<f64> = layout.bodies.iter().map(|b| surface_area(&b.shape)).collect();
    let total: f64 = areas.iter().sum();
    let mut remaining = budget;
    for (k, (b, color)) in layout.bodies.iter().zip(&layout.colors).enumerate() {
        let n = if k + 1 == layout.bodies.len() {
            remaining
        } else {
            ((budget as f64 * areas[k] / total).round() as usize).min(remaining)
        };
        remaining -= n;
        for _ in 0..n {
            let p = b.pose.transform_point(&surface_point(&b.shape, rng));
            out.push((p, jitter(rng, *color), 0.005));
        }
    }
    let raw: Vec<SplatPoint> = out
        .into_iter()
        .map(|(p, color, radius)| SplatPoint {
            position: p.map(round_f32),
            color,
            radius: round_f32(radius),
            opacity: 1.0,
            anchor: None,
        })
        .collect();
    anchor_splats(&raw, &layout.bodies, ANCHOR_THRESHOLD)
}

fn xy(rng: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    (rng.gen_range(x.0..=x.1), rng.gen_range(y.0..=y.1))
}

fn reach(rng: &mut ChaCha8Rng) -> Layout {
    let (sx, sy) = xy(rng, (-0.2, 0.0), (-0.15, 0.15));
    let sz = rng.gen_range(0.12..=0.2);
    let start = Vec3::new(sx, sy, sz);
    let goal = start + Vec3::new(0.2, 0.0, 0.0);
    let side = if sy > 0.0 { -1.0 } else { 1.0 };
    let (bx, by) = xy(rng, (-0.2, 0.2), (0.12, 0.22));
    let marker = body(
        "marker",
        false,
        false,
        cuboid([0.02, 0.02, 0.002]),
        Vec3::new(goal.x, goal.y, 0.002),
    );
    let block = body("block", true, false, cuboid([0.03, 0.03, 0.03]), Vec3::new(bx, side * by, 0.03));
    let target = region(goal, Vec3::repeat(0.02));
    let done = Predicate::GripperInRegion { region: target };
    Layout {
        bodies: vec![block, marker],
        colors: vec![[70, 110, 200], [210, 40, 40]],
        patches: vec![],
        task: TaskSpec {
            instruction: "Move the gripper to the spot above the red marker.".into(),
            success_predicate: done.clone(),
            oracle_goal: Some(gripper_goal(goal)),
            scripted_subtasks: Some(ScriptedPlan {
                subtasks: vec![subtask("move the gripper above the red marker", gripper_goal(goal), done)],
                needs_fingers: false,
                needs_rotation: false,
            }),
            initial_gripper: Some(InitialGripper {
                pose: Pose::from_translation(start),
                closed: false,
            }),
        },
    }
}

/// Half-width of the press success region around the button center.
pub const PRESS_TOLERANCE: f64 = 0.006;

fn press(rng: &mut ChaCha8Rng) -> Layout {
    let (bx, by) = xy(rng, (-0.15, 0.15), (-0.15, 0.15));
    let (ox, oy) = xy(rng, (-0.03, 0.03), (-0.03, 0.03));
    let base = body("base", false, false, cuboid([0.06, 0.06, 0.01]), Vec3::new(bx, by, 0.01));
    let button_center = Vec3::new(bx + ox, by + oy, 0.028);
    let button = body("button", false, false, cuboid([0.015, 0.015, 0.008]), button_center);
    let top = 0.036;
    // the mug sits at least 0.15 m from the base, inside the workspace
    let mug_at = loop {
        let (mx, my) = xy(rng, (-0.24, 0.24), (-0.24, 0.24));
        if (mx - bx).hypot(my - by) >= 0.15 {
            break Vec3::new(mx, my, 0.04);
        }
    };
    let mug = body(
        "mug",
        true,
        false,
        Shape::Cylinder {
            radius: 0.03,
            half_height: 0.04,
        },
        mug_at,
    );
    let (gx, gy) = xy(rng, (-0.15, 0.15), (-0.15, 0.15));
    let (cx, cy) = (button_center.x, button_center.y);
    let above = Vec3::new(cx, cy, top + 0.05);
    let above_region = Aabb::new(Vec3::new(cx - 0.015, cy - 0.015, top + 0.02), Vec3::new(cx + 0.015, cy + 0.015, top + 0.08));
    let pressed = Aabb::new(
        Vec3::new(cx - PRESS_TOLERANCE, cy - PRESS_TOLERANCE, top - 0.001),
        Vec3::new(cx + PRESS_TOLERANCE, cy + PRESS_TOLERANCE, top + 0.004),
    );
    let success = Predicate::GripperInRegion { region: pressed };
    let press_goal = gripper_goal(Vec3::new(cx, cy, top - 0.004));
    Layout {
        bodies: vec![base, button, mug],
        colors: vec![[90, 90, 100], [210, 30, 30], [60, 90, 200]],
        patches: vec![],
        task: TaskSpec {
            instruction: "Press the button.".into(),
            success_predicate: success.clone(),
            oracle_goal: Some(press_goal.clone()),
            scripted_subtasks: Some(ScriptedPlan {
                subtasks: vec![
                    subtask(
                        "move above button",
                        gripper_goal(above),
                        Predicate::GripperInRegion { region: above_region },
                    ),
                    subtask("press down", press_goal, success),
                ],
                needs_fingers: false,
                needs_rotation: false,
            }),
            initial_gripper: Some(InitialGripper {
                pose: Pose::from_translation(Vec3::new(gx, gy, 0.2)),
                closed: true,
            }),
        },
    }
}

fn pick_place(rng: &mut ChaCha8Rng) -> Layout {
    let (cx, cy) = xy(rng, (-0.2, -0.02), (-0.2, 0.2));
    let (tx, ty) = xy(rng, (0.1, 0.22), (-0.2, 0.2));
    let cube = body("cube", true, true, cuboid([0.02, 0.02, 0.02]), Vec3::new(cx, cy, 0.02));
    let tray = body("tray", false, false, cuboid([0.05, 0.05, 0.005]), Vec3::new(tx, ty, 0.005));
    // the ball keeps to the far y side, away from both
    let ball_y = if (cy + ty) > 0.0 { -0.24 } else { 0.24 };
    let ball_x = rng.gen_range(-0.2..=0.2);
    let ball = body(
        "ball",
        true,
        false,
        Shape::Sphere { radius: 0.025 },
        Vec3::new(ball_x, ball_y, 0.025),
    );
    let placed = Aabb::new(Vec3::new(tx - 0.04, ty - 0.04, 0.025), Vec3::new(tx + 0.04, ty + 0.04, 0.045));
    let success = Predicate::BodyInRegion {
        body: "cube".into(),
        region: placed,
    };
    let place_goal = OracleGoal {
        subject: "cube".into(),
        target: GoalTarget::Point(Vec3::new(tx, ty, 0.03)),
        hold: Some("cube".into()),
    };
    let grasp_goal = OracleGoal {
        subject: GRIPPER_ID.into(),
        target: GoalTarget::Body("cube".into()),
        hold: Some("cube".into()),
    };
    Layout {
        bodies: vec![cube, tray, ball],
        colors: vec![[220, 180, 40], [100, 160, 90], [160, 80, 160]],
        patches: vec![],
        task: TaskSpec {
            instruction: "Put the cube on the tray.".into(),
            success_predicate: success.clone(),
            oracle_goal: Some(place_goal.clone()),
            scripted_subtasks: Some(ScriptedPlan {
                subtasks: vec![
                    subtask(
                        "grasp the cube",
                        grasp_goal,
                        Predicate::GripperHolding { body: "cube".into() },
                    ),
                    subtask("place the cube on the tray", place_goal, success),
                ],
                needs_fingers: true,
                needs_rotation: false,
            }),
            initial_gripper: None,
        },
    }
}

fn push_region(rng: &mut ChaCha8Rng) -> Layout {
    let (bx, by) = xy(rng, (-0.12, 0.0), (-0.15, 0.15));
    let half = 0.025;
    let box_body = body("box", true, false, cuboid([half; 3]), Vec3::new(bx, by, half));
    let target = Vec3::new(bx + 0.15, by, half);
    let area = region(target, Vec3::new(0.03, 0.03, 0.03));
    let success = Predicate::BodyInRegion {
        body: "box".into(),
        region: area,
    };
    let behind = Vec3::new(bx - 0.06, by, 0.02);
    let behind_region = Aabb::new(Vec3::new(bx - 0.09, by - 0.02, 0.0), Vec3::new(bx - 0.035, by + 0.02, 0.04));
    let push_goal = OracleGoal {
        subject: "box".into(),
        target: GoalTarget::Point(target),
        hold: None,
    };
    let (wx, wy) = xy(rng, (-0.2, 0.2), (0.2, 0.24));
    let wy = if by > 0.0 { -wy } else { wy };
    let weight = body("weight", true, false, cuboid([0.02, 0.02, 0.02]), Vec3::new(wx, wy, 0.02));
    Layout {
        bodies: vec![box_body, weight],
        colors: vec![[200, 120, 60], [80, 80, 80]],
        patches: vec![(area, [90, 170, 90])],
        task: TaskSpec {
            instruction: "Push the box into the green area.".into(),
            success_predicate: success.clone(),
            oracle_goal: Some(push_goal.clone()),
            scripted_subtasks: Some(ScriptedPlan {
                subtasks: vec![
                    subtask(
                        "move behind the box",
                        gripper_goal(behind),
                        Predicate::GripperInRegion { region: behind_region },
                    ),
                    subtask("push the box into the green area", push_goal, success),
                ],
                needs_fingers: false,
                needs_rotation: false,
            }),
            initial_gripper: Some(InitialGripper {
                pose: Pose::from_translation(Vec3::new(bx - 0.12, by, 0.12)),
                closed: true,
            }),
        },
    }
}

fn pair_up(rng: &mut ChaCha8Rng) -> Layout {
    let half = [0.015, 0.04, 0.015];
    let (ax, ay) = xy(rng, (-0.2, -0.05), (-0.12, 0.0));
    let (bx, by) = loop {
        let p = xy(rng, (0.05, 0.2), (-0.15, 0.15));
        if (p.0 - ax).hypot(p.1 - ay) >= 0.2 {
            break p;
        }
    };
    let left = body("shoe_left", true, true, cuboid(half), Vec3::new(ax, ay, 0.015));
    let right = body("shoe_right", true, true, cuboid(half), Vec3::new(bx, by, 0.015));
    let target = Vec3::new(ax, ay + 0.09, 0.015);
    let success = Predicate::BodyNearBody {
        a: "shoe_left".into(),
        b: "shoe_right".into(),
        distance: 0.1,
    };
    let place_goal = OracleGoal {
        subject: "shoe_right".into(),
        target: GoalTarget::Point(target),
        hold: Some("shoe_right".into()),
    };
    let grasp_goal = OracleGoal {
        subject: GRIPPER_ID.into(),
        target: GoalTarget::Body("shoe_right".into()),
        hold: Some("shoe_right".into()),
    };
    Layout {
        bodies: vec![left, right],
        colors: vec![[120, 70, 40], [135, 85, 50]],
        patches: vec![],
        task: TaskSpec {
            instruction: "Pair up the shoes.".into(),
            success_predicate: success.clone(),
            oracle_goal: Some(place_goal.clone()),
            scripted_subtasks: Some(ScriptedPlan {
                subtasks: vec![
                    subtask(
                        "grasp the right shoe",
                        grasp_goal,
                        Predicate::GripperHolding {
                            body: "shoe_right".into(),
                        },
                    ),
                    subtask("place it next to the left shoe", place_goal, success),
                ],
                needs_fingers: true,
                needs_rotation: false,
            }),
            initial_gripper: None,
        },
    }
}

/// Builds template `name` for `seed`. The result equals what loading the
/// scene written by `write_generated` yields.
pub fn generate(name: &str, seed: u64) -> Result<SceneTwin, TemplateError> {
    let index = TEMPLATE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| TemplateError::Unknown(name.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[index as u64, seed]));
    let layout = match name {
        "reach" => reach(&mut rng),
        "press" => press(&mut rng),
        "pick-place" => pick_place(&mut rng),
        "push-region" => push_region(&mut rng),
        _ => pair_up(&mut rng),
    };
    let splats = splats(&layout, &mut rng);
    let ws = workspace();
    let mut scene = SceneTwin {
        bodies: layout.bodies,
        splats,
        cameras: default_rig(&ws, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE).expect("template workspace is not degenerate"),
        workspace: ws,
        support_plane_z: 0.0,
        anchor_threshold_m: ANCHOR_THRESHOLD,
        task: layout.task,
    };
    scene.validate()?;
    let bodies = scene.bodies.clone();
    scene.task.resolve(&bodies);
    Ok(scene)
}

/// Writes `scene` to `path` with its splats in a PLY file next to it
/// (`<stem>.splats.ply`).
pub fn write_generated(scene: &SceneTwin, path: &Path) -> Result<(), TwinError> {
    let stem = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('.').next().unwrap_or(n).to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "scene".into());
    let ply_name = format!("{stem}.splats.ply");
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    write_ply(&dir.join(&ply_name), &scene.splats)?;
    std::fs::write(path, scene_to_json(scene, Some(&ply_name))).map_err(|source| TwinError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Anchor counts per body id plus `STATIC`, for summaries.
pub fn anchor_histogram(scene: &SceneTwin) -> std::collections::BTreeMap<String, usize> {
    let mut out = std::collections::BTreeMap::new();
    for s in &scene.splats {
        let key = match &s.anchor {
            Some(Anchor::Body(id)) => id.clone(),
            _ => Anchor::STATIC_NAME.to_string(),
        };
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::load_scene;

    #[test]
    fn unknown_template() {
        assert!(matches!(generate("cook", 0), Err(TemplateError::Unknown(_))));
    }

    #[test]
    fn deterministic_and_valid() {
        for name in TEMPLATE_NAMES {
            let a = generate(name, 3).unwrap();
            let b = generate(name, 3).unwrap();
            assert_eq!(scene_to_json(&a, None), scene_to_json(&b, None), "{name}");
            assert_eq!(a.splats.len(), SPLAT_COUNT);
            assert!(a.task.scripted_subtasks.is_some() && a.task.oracle_goal.is_some());
            assert_ne!(scene_to_json(&a, None), scene_to_json(&generate(name, 4).unwrap(), None));
        }
    }

    #[test]
    fn written_scene_loads_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        for name in TEMPLATE_NAMES {
            let scene = generate(name, 11).unwrap();
            let path = dir.path().join(format!("{name}.scene"));
            write_generated(&scene, &path).unwrap();
            let loaded = load_scene(&path).unwrap();
            assert_eq!(loaded, scene, "{name}");
        }
    }

    #[test]
    fn pick_place_contract() {
        for seed in 0..20 {
            let s = generate("pick-place", seed).unwrap();
            assert_eq!(s.bodies.iter().filter(|b| b.graspable).count(), 1);
            assert!(matches!(s.task.success_predicate, Predicate::BodyInRegion { .. }));
        }
    }

    #[test]
    fn press_layouts_stay_inside_workspace() {
        let ws = workspace();
        for seed in 0..100 {
            let s = generate("press", seed).unwrap();
            for b in &s.bodies {
                let bb = b.world_aabb();
                assert!(ws.contains(&bb.min) && ws.contains(&bb.max), "seed {seed} body {}", b.id);
            }
            assert_eq!(s.bodies.len(), 3);
        }
    }

    #[test]
    fn body_splats_follow_their_bodies() {
        let s = generate("pick-place", 1).unwrap();
        let h = anchor_histogram(&s);
        assert!(h["cube"] > 0 && h["ball"] > 0);
        // tray is immovable, table sits below the anchoring threshold
        assert!(!h.contains_key("tray"));
        assert!(h[Anchor::STATIC_NAME] >= TABLE_GRID * TABLE_GRID);
    }
}
