use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, Vec3};

use super::{RigidBody, SceneTwin, TwinError, GRIPPER_ID};

/// What the episode is trying to achieve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub instruction: String,
    pub success_predicate: Predicate,
    /// Only consulted by the oracle critic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_goal: Option<OracleGoal>,
    /// Subtask script read by the oracle critic's decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted_subtasks: Option<ScriptedPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_gripper: Option<InitialGripper>,
}

/// Declarative success or progress test over the current twin state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    BodyInRegion {
        body: String,
        region: Aabb,
    },
    BodyNearBody {
        a: String,
        b: String,
        distance: f64,
    },
    GripperInRegion {
        region: Aabb,
    },
    /// `from` defaults to the body's position at load.
    BodyDisplaced {
        body: String,
        min_displacement: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<Vec3>,
    },
    GripperHolding {
        body: String,
    },
}

impl Predicate {
    fn referenced_bodies(&self) -> Vec<&str> {
        match self {
            Predicate::BodyInRegion { body, .. }
            | Predicate::BodyDisplaced { body, .. }
            | Predicate::GripperHolding { body } => vec![body],
            Predicate::BodyNearBody { a, b, .. } => vec![a, b],
            Predicate::GripperInRegion { .. } => vec![],
        }
    }

    fn validate(&self, scene: &SceneTwin, entity: &str) -> Result<(), TwinError> {
        for id in self.referenced_bodies() {
            if scene.body(id).is_none() {
                return Err(TwinError::invalid(entity, format!("unknown body {id:?}")));
            }
        }
        match self {
            Predicate::BodyInRegion { region, .. } | Predicate::GripperInRegion { region }
                if !region.is_ordered() =>
            {
                Err(TwinError::invalid(entity, "region min exceeds max"))
            }
            Predicate::BodyNearBody { distance, .. } if !(*distance >= 0.0) => {
                Err(TwinError::invalid(entity, "distance threshold must be non-negative"))
            }
            Predicate::BodyDisplaced { min_displacement, .. } if !(*min_displacement >= 0.0) => {
                Err(TwinError::invalid(entity, "min displacement must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    fn resolve(&mut self, bodies: &[RigidBody]) {
        if let Predicate::BodyDisplaced { body, from, .. } = self {
            if from.is_none() {
                if let Some(b) = bodies.iter().find(|b| &b.id == body) {
                    *from = Some(b.pose.position);
                }
            }
        }
    }
}

/// Where the oracle wants something to be. `subject` is a body id or
/// `"gripper"`; the target is a fixed point or the current position of a
/// body. With `hold` set, outcomes where the gripper is not holding that
/// body are penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGoal {
    pub subject: String,
    pub target: GoalTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalTarget {
    Point(Vec3),
    Body(String),
}

impl OracleGoal {
    fn validate(&self, scene: &SceneTwin, entity: &str) -> Result<(), TwinError> {
        let mut ids = vec![];
        if self.subject != GRIPPER_ID {
            ids.push(self.subject.as_str());
        }
        if let GoalTarget::Body(id) = &self.target {
            ids.push(id);
        }
        if let Some(id) = &self.hold {
            ids.push(id);
        }
        for id in ids {
            if scene.body(id).is_none() {
                return Err(TwinError::invalid(entity, format!("unknown body {id:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPlan {
    pub subtasks: Vec<ScriptedSubtask>,
    #[serde(default)]
    pub needs_fingers: bool,
    #[serde(default)]
    pub needs_rotation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSubtask {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<OracleGoal>,
    /// Completion test; the oracle advances past this subtask once it holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<Predicate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialGripper {
    pub pose: Pose,
    #[serde(default)]
    pub closed: bool,
}

impl TaskSpec {
    pub(crate) fn validate(&self, scene: &SceneTwin) -> Result<(), TwinError> {
        self.success_predicate.validate(scene, "task.success_predicate")?;
        if let Some(goal) = &self.oracle_goal {
            goal.validate(scene, "task.oracle_goal")?;
        }
        if let Some(plan) = &self.scripted_subtasks {
            if plan.subtasks.is_empty() {
                return Err(TwinError::invalid("task.scripted_subtasks", "needs at least one subtask"));
            }
            for (i, st) in plan.subtasks.iter().enumerate() {
                let entity = format!("task.scripted_subtasks[{i}]");
                if let Some(goal) = &st.goal {
                    goal.validate(scene, &entity)?;
                }
                if let Some(done) = &st.done {
                    done.validate(scene, &entity)?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn resolve(&mut self, bodies: &[RigidBody]) {
        self.success_predicate.resolve(bodies);
        if let Some(plan) = &mut self.scripted_subtasks {
            for st in &mut plan.subtasks {
                if let Some(done) = &mut st.done {
                    done.resolve(bodies);
                }
            }
        }
    }
}
