//! Quasi-static simulation of a free-flying two-finger gripper.
//!
//! One call moves the gripper from its current pose to the action target
//! over `substeps` interpolation steps, carrying a held body, pushing movable
//! obstacles out of the way, and stopping short of anything it cannot push.
//! Finger commands take effect once the motion ends; unsupported bodies then
//! fall straight down.

pub mod contact;
pub mod gripper;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    canonicalize_axis_angle, interpolate_pose, quat_from_axis_angle, axis_angle_from_quat, Aabb, Pose, Vec3,
};
use crate::twin::{apply_transforms, BodyTransformSet, GoalTarget, OracleGoal, Predicate, SceneTwin, GRIPPER_ID};

use contact::{penetration, Proxy};
pub use gripper::Fingers;

/// Pseudo body id used in `blocked` events caused by the support plane.
pub const SUPPORT_PLANE_ID: &str = "support_plane";
const SUPPORT_TOLERANCE: f64 = 1e-3;
const MAX_PUSH_PASSES: usize = 16;

/// Target gripper pose (position + axis-angle) and finger command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub position: Vec3,
    pub rotation: Vec3,
    pub finger: f64,
}

impl Action {
    pub const DIM: usize = 7;

    pub fn closed(&self) -> bool {
        self.finger >= 0.5
    }

    pub fn target_pose(&self) -> Pose {
        Pose::new(self.position, quat_from_axis_angle(&self.rotation))
    }

    /// The action that leaves `gripper` where it is.
    pub fn hold(gripper: &GripperState) -> Action {
        Action {
            position: gripper.pose.position,
            rotation: axis_angle_from_quat(&gripper.pose.orientation),
            finger: if gripper.fingers.is_closed() { 1.0 } else { 0.0 },
        }
    }

    pub fn to_vector(&self) -> [f64; 7] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.finger,
        ]
    }

    pub fn from_vector(v: &[f64; 7]) -> Action {
        Action {
            position: Vec3::new(v[0], v[1], v[2]),
            rotation: Vec3::new(v[3], v[4], v[5]),
            finger: v[6],
        }
    }

    /// Clamps the position into `workspace`, wraps the rotation to
    /// magnitude `<= π`, and clamps the finger command to `[0, 1]`.
    pub fn canonicalized(&self, workspace: &Aabb) -> Action {
        Action {
            position: workspace.clamp(&self.position),
            rotation: canonicalize_axis_angle(&self.rotation),
            finger: self.finger.clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub pose: Pose,
    pub fingers: Fingers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held: Option<String>,
}

impl GripperState {
    /// Starting state from the task, or open fingers 0.2 m above the
    /// support plane over the workspace center.
    pub fn initial(scene: &SceneTwin) -> GripperState {
        match &scene.task.initial_gripper {
            Some(g) => GripperState {
                pose: g.pose,
                fingers: if g.closed { Fingers::Closed } else { Fingers::Open },
                held: None,
            },
            None => {
                let c = scene.workspace.center();
                let z = (scene.support_plane_z + 0.2).clamp(scene.workspace.min.z, scene.workspace.max.z);
                GripperState {
                    pose: Pose::from_translation(Vec3::new(c.x, c.y, z)),
                    fingers: Fingers::Open,
                    held: None,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grasp_radius: f64,
    pub push_enabled: bool,
    pub max_penetration: f64,
    pub settle_enabled: bool,
    pub substeps: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grasp_radius: 0.03,
            push_enabled: true,
            max_penetration: 1e-4,
            settle_enabled: true,
            substeps: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.grasp_radius > 0.0) {
            return Err("sim.grasp_radius must be positive".into());
        }
        if self.substeps < 1 {
            return Err("sim.substeps must be at least 1".into());
        }
        if !(self.max_penetration >= 0.0) {
            return Err("sim.max_penetration must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Grasp,
    Release,
    Push,
    Blocked,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub kind: EventKind,
    pub body: String,
    pub step_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub transforms: BodyTransformSet,
    pub gripper: GripperState,
    pub events: Vec<ContactEvent>,
}

fn event(kind: EventKind, body: &str, step_fraction: f64) -> ContactEvent {
    ContactEvent {
        kind,
        body: body.to_string(),
        step_fraction,
    }
}

struct Contacts<'a> {
    scene: &'a SceneTwin,
    config: &'a SimConfig,
    held: Option<usize>,
}

impl Contacts<'_> {
    fn proxy(&self, poses: &[Pose], i: usize) -> Proxy {
        Proxy::of_body(&self.scene.bodies[i], &poses[i])
    }

    /// Pushes movable bodies out of the gripper, the held body, and each
    /// other. Returns the pushed body indices, or the id of whatever blocks.
    fn resolve(&self, poses: &mut [Pose], gripper: &Pose, fingers: Fingers) -> Result<Vec<usize>, String> {
        let n = poses.len();
        let floor = self.scene.support_plane_z - self.config.max_penetration;
        let mut pushed: Vec<usize> = vec![];
        for _ in 0..MAX_PUSH_PASSES {
            let mut pushers: Vec<(Option<usize>, Proxy)> =
                gripper::finger_proxies(gripper, fingers).map(|p| (None, p)).to_vec();
            if let Some(h) = self.held {
                pushers.push((Some(h), self.proxy(poses, h)));
            }
            pushers.extend(pushed.iter().map(|&j| (Some(j), self.proxy(poses, j))));

            let mut changed = false;
            for (source, p) in pushers {
                // pushed bodies may have moved earlier in this pass
                let p = match source {
                    Some(i) => self.proxy(poses, i),
                    None => p,
                };
                if p.min_z() < floor {
                    return Err(match source {
                        Some(i) if Some(i) != self.held => self.scene.bodies[i].id.clone(),
                        _ => SUPPORT_PLANE_ID.to_string(),
                    });
                }
                for j in 0..n {
                    if Some(j) == self.held || Some(j) == source {
                        continue;
                    }
                    let Some((depth, normal)) = penetration(&p, &self.proxy(poses, j)) else {
                        continue;
                    };
                    if depth <= self.config.max_penetration {
                        continue;
                    }
                    let body = &self.scene.bodies[j];
                    if !(body.movable && self.config.push_enabled) {
                        return Err(body.id.clone());
                    }
                    poses[j].position += normal * depth;
                    if !pushed.contains(&j) {
                        pushed.push(j);
                    }
                    changed = true;
                }
            }
            if !changed {
                pushed.sort_unstable();
                return Ok(pushed);
            }
        }
        Err(pushed
            .last()
            .map(|&j| self.scene.bodies[j].id.clone())
            .unwrap_or_else(|| SUPPORT_PLANE_ID.to_string()))
    }

    /// First body (other than `skip`) the fingers would penetrate.
    fn finger_obstacle(&self, poses: &[Pose], gripper: &Pose, fingers: Fingers, skip: &[usize]) -> Option<String> {
        for p in gripper::finger_proxies(gripper, fingers) {
            if p.min_z() < self.scene.support_plane_z - self.config.max_penetration {
                return Some(SUPPORT_PLANE_ID.to_string());
            }
            for j in 0..poses.len() {
                if skip.contains(&j) || Some(j) == self.held {
                    continue;
                }
                if let Some((depth, _)) = penetration(&p, &self.proxy(poses, j)) {
                    if depth > self.config.max_penetration {
                        return Some(self.scene.bodies[j].id.clone());
                    }
                }
            }
        }
        None
    }
}

/// Simulates one action. Pure: the scene and gripper are not modified.
pub fn simulate_step(scene: &SceneTwin, gripper: &GripperState, action: &Action, config: &SimConfig) -> StepOutcome {
    let initial: Vec<Pose> = scene.bodies.iter().map(|b| b.pose).collect();
    let mut poses = initial.clone();
    let held = gripper.held.as_deref().and_then(|id| scene.body_index(id));
    let contacts = Contacts { scene, config, held };
    let held_rel = held.map(|h| gripper.pose.inverse().compose(&poses[h]));

    let start = gripper.pose;
    let target = action.target_pose();
    let substeps = config.substeps.max(1);
    let mut current = start;
    let mut reached = 1.0;
    let mut events = vec![];
    let mut pushed_once = BTreeSet::new();

    if target != start {
        for k in 1..=substeps {
            let fraction = k as f64 / substeps as f64;
            let next = interpolate_pose(&start, &target, fraction);
            let mut trial = poses.clone();
            if let (Some(h), Some(rel)) = (held, held_rel) {
                trial[h] = next.compose(&rel);
            }
            match contacts.resolve(&mut trial, &next, gripper.fingers) {
                Ok(pushed) => {
                    for j in pushed {
                        if pushed_once.insert(j) {
                            events.push(event(EventKind::Push, &scene.bodies[j].id, fraction));
                        }
                    }
                    poses = trial;
                    current = next;
                }
                Err(blocker) => {
                    reached = (k - 1) as f64 / substeps as f64;
                    events.push(event(EventKind::Blocked, &blocker, reached));
                    break;
                }
            }
        }
    }

    let mut fingers = gripper.fingers;
    let mut held_id = gripper.held.clone();
    if action.closed() && fingers == Fingers::Open {
        let tool = current.position;
        let mut candidate: Option<(usize, f64)> = None;
        let mut order: Vec<usize> = (0..poses.len()).collect();
        order.sort_by(|&a, &b| scene.bodies[a].id.cmp(&scene.bodies[b].id));
        for i in order {
            let body = &scene.bodies[i];
            if !(body.movable && body.graspable) {
                continue;
            }
            let d = body.shape.distance(&poses[i], &tool);
            if d <= config.grasp_radius && candidate.is_none_or(|(_, best)| d < best) {
                candidate = Some((i, d));
            }
        }
        let skip: Vec<usize> = candidate.map(|(i, _)| i).into_iter().collect();
        match contacts.finger_obstacle(&poses, &current, Fingers::Closed, &skip) {
            Some(blocker) => events.push(event(EventKind::Blocked, &blocker, reached)),
            None => {
                fingers = Fingers::Closed;
                if let Some((i, _)) = candidate {
                    held_id = Some(scene.bodies[i].id.clone());
                    events.push(event(EventKind::Grasp, &scene.bodies[i].id, reached));
                }
            }
        }
    } else if !action.closed() && fingers == Fingers::Closed {
        match contacts.finger_obstacle(&poses, &current, Fingers::Open, &[]) {
            Some(blocker) => events.push(event(EventKind::Blocked, &blocker, reached)),
            None => {
                fingers = Fingers::Open;
                if let Some(id) = held_id.take() {
                    events.push(event(EventKind::Release, &id, reached));
                }
            }
        }
    }

    if config.settle_enabled {
        let still_held = held_id.as_deref().and_then(|id| scene.body_index(id));
        settle(scene, &mut poses, still_held, reached, &mut events);
    }

    let transforms = scene
        .bodies
        .iter()
        .zip(initial.iter().zip(&poses))
        .filter(|(_, (before, after))| before != after)
        .map(|(b, (before, after))| (b.id.clone(), before.delta_to(after)))
        .collect();

    StepOutcome {
        transforms,
        gripper: GripperState {
            pose: current,
            fingers,
            held: held_id,
        },
        events,
    }
}

fn settle(scene: &SceneTwin, poses: &mut [Pose], held: Option<usize>, fraction: f64, events: &mut Vec<ContactEvent>) {
    let bounds = |poses: &[Pose], i: usize| Proxy::of_body(&scene.bodies[i], &poses[i]).bounds();
    let mut order: Vec<usize> = (0..poses.len())
        .filter(|&i| scene.bodies[i].movable && Some(i) != held)
        .collect();
    order.sort_by(|&a, &b| {
        bounds(poses, a)
            .min
            .z
            .partial_cmp(&bounds(poses, b).min.z)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for i in order {
        let b = bounds(poses, i);
        let mut floor = scene.support_plane_z;
        for j in 0..poses.len() {
            if j == i || Some(j) == held {
                continue;
            }
            let o = bounds(poses, j);
            if o.overlaps_xy(&b) && o.max.z <= b.min.z + SUPPORT_TOLERANCE {
                floor = floor.max(o.max.z);
            }
        }
        if b.min.z > floor + SUPPORT_TOLERANCE {
            poses[i].position.z -= b.min.z - floor;
            events.push(event(EventKind::Drop, &scene.bodies[i].id, fraction));
        }
    }
}

/// Folds `simulate_step` and `apply_transforms` over `actions`.
pub fn rollout(
    scene: &SceneTwin,
    gripper: &GripperState,
    actions: &[Action],
    config: &SimConfig,
) -> (SceneTwin, GripperState, Vec<Vec<ContactEvent>>) {
    let mut scene = scene.clone();
    let mut gripper = gripper.clone();
    let mut trace = Vec::with_capacity(actions.len());
    for action in actions {
        let out = simulate_step(&scene, &gripper, action, config);
        scene = apply_transforms(&scene, &out.transforms).expect("simulator only moves movable bodies");
        gripper = out.gripper;
        trace.push(out.events);
    }
    (scene, gripper, trace)
}

pub fn check_success(scene: &SceneTwin, gripper: &GripperState) -> bool {
    evaluate_predicate(&scene.task.success_predicate, scene, gripper)
}

pub fn evaluate_predicate(predicate: &Predicate, scene: &SceneTwin, gripper: &GripperState) -> bool {
    let pos = |id: &str| scene.body(id).map(|b| b.pose.position);
    match predicate {
        Predicate::BodyInRegion { body, region } => pos(body).is_some_and(|p| region.contains(&p)),
        Predicate::BodyNearBody { a, b, distance } => match (pos(a), pos(b)) {
            (Some(pa), Some(pb)) => (pa - pb).norm() <= *distance,
            _ => false,
        },
        Predicate::GripperInRegion { region } => region.contains(&gripper.pose.position),
        Predicate::BodyDisplaced {
            body,
            min_displacement,
            from,
        } => match (pos(body), from) {
            (Some(p), Some(origin)) => (p - origin).norm() >= *min_displacement,
            _ => false,
        },
        Predicate::GripperHolding { body } => gripper.held.as_deref() == Some(body.as_str()),
    }
}

/// Penalty, in meters, added when a goal requires holding a body that is
/// not held.
pub const HOLD_PENALTY: f64 = 0.1;

/// Ground-truth oracle score: negative distance of the goal subject to its
/// target, minus the hold penalty when applicable.
pub fn oracle_score(goal: &OracleGoal, scene: &SceneTwin, gripper: &GripperState) -> f64 {
    let locate = |id: &str| -> Option<Vec3> {
        if id == GRIPPER_ID {
            Some(gripper.pose.position)
        } else {
            scene.body(id).map(|b| b.pose.position)
        }
    };
    let subject = locate(&goal.subject);
    let target = match &goal.target {
        GoalTarget::Point(p) => Some(*p),
        GoalTarget::Body(id) => locate(id),
    };
    let (Some(s), Some(t)) = (subject, target) else {
        return f64::NEG_INFINITY;
    };
    let mut score = -(s - t).norm();
    if let Some(h) = &goal.hold {
        if gripper.held.as_deref() != Some(h.as_str()) {
            score -= HOLD_PENALTY;
        }
    }
    score
}
