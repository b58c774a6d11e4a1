use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::critic::{template_hash, Critic, CriticError, CriticKind, Exchange, SubtaskPlan};
use crate::render::{render_view, CameraRig, RgbImage, ViewName};
use crate::sim::{check_success, evaluate_predicate, simulate_step, GripperState};
use crate::trace::{StepRecord, TerminalRecord, TerminalStatus, TraceHeader, SCHEMA_VERSION};
use crate::twin::{apply_transforms, ScriptedPlan, SceneTwin};

use super::{cem_step, init_distribution, Objective, PlanError, RunConfig, StepContext};

/// Receives trace records as an episode progresses.
pub trait EpisodeSink {
    fn header(&mut self, header: &TraceHeader) -> Result<(), String>;
    fn step(&mut self, record: &StepRecord) -> Result<(), String>;
    fn terminal(&mut self, terminal: &TerminalRecord) -> Result<(), String>;
}

/// Provenance recorded in the trace header.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOptions {
    pub scene_path: String,
    pub scene_hash: String,
    pub started_at_unix_s: u64,
}

impl EpisodeOptions {
    /// Stamped with the current time, or with `SOURCE_DATE_EPOCH` when that
    /// variable holds a valid timestamp.
    pub fn now(scene_path: impl Into<String>, scene_hash: impl Into<String>) -> Self {
        let started_at_unix_s = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        Self {
            scene_path: scene_path.into(),
            scene_hash: scene_hash.into(),
            started_at_unix_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub status: TerminalStatus,
    pub steps: usize,
    pub wall_time_s: f64,
    pub critic_queries: usize,
    pub simulations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn render_all(scene: &SceneTwin, gripper: &GripperState, rig: &CameraRig) -> Vec<RgbImage> {
    ViewName::ALL
        .iter()
        .map(|&v| render_view(scene, gripper, rig.get(v)).color)
        .collect()
}

/// The oracle objective for subtask `active`: the scripted subtask's goal
/// when the plan came from the script, otherwise the task's own goal.
fn objective_for(scene: &SceneTwin, script: Option<&ScriptedPlan>, active: usize, config: &RunConfig) -> Option<Objective> {
    let scoring = config.critic.scoring;
    if let Some(sub) = script.and_then(|s| s.subtasks.get(active)) {
        if let Some(goal) = &sub.goal {
            return Some(Objective {
                goal: goal.clone(),
                done: sub.done.clone(),
                scoring,
            });
        }
    }
    scene.task.oracle_goal.as_ref().map(|goal| Objective {
        goal: goal.clone(),
        done: Some(scene.task.success_predicate.clone()),
        scoring,
    })
}

struct Run<'a> {
    sink: &'a mut dyn EpisodeSink,
    started: Instant,
    queries: usize,
    simulations: usize,
    steps: usize,
}

impl Run<'_> {
    fn finish(
        &mut self,
        status: TerminalStatus,
        error: Option<String>,
        exchanges: Vec<Exchange>,
    ) -> Result<EpisodeSummary, PlanError> {
        let terminal = TerminalRecord {
            status,
            steps: self.steps,
            error: error.clone(),
            exchanges,
        };
        self.sink.terminal(&terminal).map_err(PlanError::Sink)?;
        Ok(EpisodeSummary {
            status,
            steps: self.steps,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            critic_queries: self.queries,
            simulations: self.simulations,
            error,
        })
    }
}

/// Runs one closed-loop episode: decompose the instruction, then plan,
/// execute and check success until the task succeeds or a budget runs out.
/// Critic failures end the episode with `ABORTED_CRITIC`; only invalid
/// configuration and sink failures are returned as errors.
pub fn plan_episode(
    scene: &SceneTwin,
    critic: &Critic,
    config: &RunConfig,
    options: &EpisodeOptions,
    sink: &mut dyn EpisodeSink,
) -> Result<EpisodeSummary, PlanError> {
    config.validate()?;
    scene.validate().map_err(|e| PlanError::Scene(e.to_string()))?;
    let planner = &config.planner;
    let size = config.render.image_size;
    let rig = scene.cameras.resized(size, size);
    let instruction = scene.task.instruction.as_str();
    let mut run = Run {
        sink,
        started: Instant::now(),
        queries: 0,
        simulations: 0,
        steps: 0,
    };

    let mut scene = scene.clone();
    let mut gripper = GripperState::initial(&scene);

    let mut decompose_log = vec![];
    let script = scene.task.scripted_subtasks.clone();
    let plan: Result<SubtaskPlan, CriticError> = if !planner.use_subtasks {
        Ok(SubtaskPlan {
            subtasks: vec![instruction.to_string()],
            needs_fingers: true,
            needs_rotation: true,
        })
    } else if matches!(critic.kind(), CriticKind::Random { .. }) {
        script
            .as_ref()
            .map(SubtaskPlan::from_script)
            .ok_or(CriticError::MissingScript)
    } else {
        let images = if critic.needs_images() {
            render_all(&scene, &gripper, &rig)
        } else {
            vec![]
        };
        critic.decompose(instruction, &images, script.as_ref(), &mut decompose_log)
    };
    // subtask goals and completion tests only line up with a scripted plan
    let scripted_plan = planner.use_subtasks && !matches!(critic.kind(), CriticKind::Remote(_));
    let script = if scripted_plan { script } else { None };

    let header = TraceHeader {
        schema_version: SCHEMA_VERSION,
        scene_path: options.scene_path.clone(),
        scene_hash: options.scene_hash.clone(),
        config: config.clone(),
        episode_seed: planner.episode_seed,
        critic: critic.kind().clone(),
        prompt_template_hash: template_hash(),
        started_at_unix_s: options.started_at_unix_s,
        workspace: scene.workspace,
        subtask_plan: plan.as_ref().ok().cloned(),
        decompose_exchanges: decompose_log,
    };
    run.sink.header(&header).map_err(PlanError::Sink)?;
    let plan = match plan {
        Ok(p) => p,
        Err(e) => return run.finish(TerminalStatus::AbortedCritic, Some(e.to_string()), vec![]),
    };

    if check_success(&scene, &gripper) {
        return run.finish(TerminalStatus::Success, None, vec![]);
    }

    let mut active = 0;
    let mut previous_view: Option<ViewName> = None;
    let mut uncertainty = init_distribution(&gripper, &plan, planner).position_std();
    for step in 0..planner.step_budget {
        if run.started.elapsed().as_secs_f64() >= planner.time_budget_s {
            return run.finish(
                TerminalStatus::FailedBudget,
                Some(format!("time budget of {} s exhausted", planner.time_budget_s)),
                vec![],
            );
        }
        let mut log = vec![];
        let images = if critic.needs_images() {
            render_all(&scene, &gripper, &rig)
        } else {
            vec![]
        };
        let completed: Vec<bool> = script
            .as_ref()
            .map(|s| {
                s.subtasks
                    .iter()
                    .map(|t| t.done.as_ref().is_some_and(|p| evaluate_predicate(p, &scene, &gripper)))
                    .collect()
            })
            .unwrap_or_default();
        active = match critic.select_active(instruction, &images, &plan, active, &completed, &mut log) {
            Ok(a) => a,
            Err(e) => return run.finish(TerminalStatus::AbortedCritic, Some(e.to_string()), log),
        };
        let subgoal = plan.subtasks[active].clone();
        let (view, view_fallback) = if planner.use_views {
            let key = [planner.episode_seed, step as u64];
            match critic.choose_view(&images, &subgoal, previous_view, &uncertainty, &rig, &key, &mut log) {
                Ok(c) => (c.view, c.fallback),
                Err(e) => return run.finish(TerminalStatus::AbortedCritic, Some(e.to_string()), log),
            }
        } else {
            (ViewName::TopDown, false)
        };
        let objective = objective_for(&scene, script.as_ref(), active, config);
        let ctx = StepContext {
            scene: &scene,
            gripper: &gripper,
            config,
            critic,
            camera: rig.get(view),
            instruction,
            subgoal: &subgoal,
            objective: objective.as_ref(),
            step,
            view,
            view_fallback,
            active_subtask: active,
        };
        let (action, mut result) = match cem_step(&ctx, init_distribution(&gripper, &plan, planner)) {
            Ok(r) => r,
            Err(mut f) => {
                log.append(&mut f.exchanges);
                return run.finish(TerminalStatus::AbortedCritic, Some(f.error.to_string()), log);
            }
        };
        log.append(&mut result.exchanges);
        result.exchanges = log;
        run.queries += result.critic_queries;
        run.simulations += result.simulations;
        if let Some(last) = result.distributions.last() {
            uncertainty = last.position_std();
        }

        let executed = simulate_step(&scene, &gripper, &action, &config.sim);
        scene = apply_transforms(&scene, &executed.transforms).expect("simulator only moves movable bodies");
        gripper = executed.gripper.clone();
        let success = check_success(&scene, &gripper);
        let record = StepRecord {
            step,
            plan: result,
            executed,
            body_poses: scene.body_poses(),
            success,
        };
        run.sink.step(&record).map_err(PlanError::Sink)?;
        run.steps += 1;
        previous_view = Some(view);
        if success {
            return run.finish(TerminalStatus::Success, None, vec![]);
        }
    }
    run.finish(
        TerminalStatus::FailedBudget,
        Some(format!("step budget of {} exhausted", planner.step_budget)),
        vec![],
    )
}
