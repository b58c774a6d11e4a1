//! Cross-entropy planning over single gripper actions.
//!
//! Each planning step samples candidate actions from a diagonal Gaussian,
//! simulates every candidate in the twin, lets the critic pick one winner
//! per fixed-size group, and refits the Gaussian to the winners. The mean of
//! the final distribution is the action executed in the twin.

mod config;
mod episode;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{Critic, CriticError, CriticKind, CriticQuery, CriticVerdict, Exchange, OracleScoring, SubtaskPlan};
use crate::geometry::{axis_angle_from_quat, chordal_mean, quat_from_axis_angle, Aabb, Vec3};
use crate::render::{render_view, Camera, ViewName};
use crate::seed::{self, Stream};
use crate::sim::{evaluate_predicate, oracle_score, simulate_step, Action, GripperState};
use crate::twin::{apply_transforms, OracleGoal, Predicate, SceneTwin};

pub use config::{CriticConfig, CriticName, PlannerConfig, RenderConfig, RunConfig};
pub use episode::{plan_episode, EpisodeOptions, EpisodeSink, EpisodeSummary};

/// Std given to dimensions the subtask plan says are not needed.
pub const FROZEN_STD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("INVALID_CONFIG: {0}")]
    Config(String),
    #[error("TRACE_WRITE_FAILED: {0}")]
    Sink(String),
    #[error("INVALID_SCENE: {0}")]
    Scene(String),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::Config(_) => "INVALID_CONFIG",
            PlanError::Sink(_) => "TRACE_WRITE_FAILED",
            PlanError::Scene(_) => "INVALID_SCENE",
        }
    }
}

/// Diagonal Gaussian over action vectors (position, axis-angle, finger).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub mean: [f64; 7],
    pub std: [f64; 7],
    /// Dimensions held at `FROZEN_STD`, exempt from the std floor.
    pub frozen: [bool; 7],
}

impl ActionDistribution {
    pub fn position_std(&self) -> Vec3 {
        Vec3::new(self.std[0], self.std[1], self.std[2])
    }

    pub fn mean_action(&self, workspace: &Aabb) -> Action {
        Action::from_vector(&self.mean).canonicalized(workspace)
    }
}

/// Which action dimensions to freeze for a subtask plan.
pub fn frozen_mask(plan: &SubtaskPlan) -> [bool; 7] {
    let r = !plan.needs_rotation;
    [false, false, false, r, r, r, !plan.needs_fingers]
}

/// Gaussian centered on the current gripper state.
pub fn init_distribution(gripper: &GripperState, plan: &SubtaskPlan, config: &PlannerConfig) -> ActionDistribution {
    let frozen = frozen_mask(plan);
    let mut std = config.init_std;
    for (s, f) in std.iter_mut().zip(frozen) {
        if f {
            *s = FROZEN_STD;
        }
    }
    ActionDistribution {
        mean: Action::hold(gripper).to_vector(),
        std,
        frozen,
    }
}

/// `n` independent draws; draw `i` uses the random stream keyed by
/// `key ++ [i]`, so results do not depend on evaluation order.
pub fn sample_actions(dist: &ActionDistribution, n: usize, workspace: &Aabb, key: &[u64]) -> Vec<Action> {
    (0..n)
        .map(|i| {
            let mut rng = seed::rng(Stream::Sample, &[key, &[i as u64]].concat());
            let mut v = [0.0; 7];
            for d in 0..7 {
                let z: f64 = StandardNormal.sample(&mut rng);
                v[d] = dist.mean[d] + dist.std[d] * z;
            }
            Action::from_vector(&v).canonicalized(workspace)
        })
        .collect()
}

/// Mean and spread of a non-empty action set. Rotations average through
/// the chordal quaternion mean; their spread is the RMS of each component
/// of the log map relative to that mean.
fn fit(elites: &[Action], config: &PlannerConfig, frozen: [bool; 7]) -> ActionDistribution {
    let n = elites.len() as f64;
    let vecs: Vec<[f64; 7]> = elites.iter().map(Action::to_vector).collect();
    let mut mean = [0.0; 7];
    let mut std = [0.0; 7];
    for d in [0, 1, 2, 6] {
        let m = vecs.iter().map(|v| v[d]).sum::<f64>() / n;
        mean[d] = m;
        std[d] = (vecs.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / n).sqrt();
    }
    let quats: Vec<_> = elites.iter().map(|a| quat_from_axis_angle(&a.rotation)).collect();
    let q_mean = chordal_mean(&quats);
    let aa = axis_angle_from_quat(&q_mean);
    mean[3..6].copy_from_slice(aa.as_slice());
    let mut sq = Vec3::zeros();
    for q in &quats {
        let d = axis_angle_from_quat(&(q_mean.inverse() * q));
        sq += d.component_mul(&d);
    }
    for k in 0..3 {
        std[3 + k] = (sq[k] / n).sqrt();
    }
    for d in 0..7 {
        std[d] = if frozen[d] { FROZEN_STD } else { std[d].max(config.std_floor[d]) };
    }
    ActionDistribution { mean, std, frozen }
}

/// Refits the sampling distribution to the elites.
pub fn refit(elites: &[Action], config: &PlannerConfig, frozen: [bool; 7]) -> Result<ActionDistribution, PlanError> {
    if elites.len() < 2 {
        return Err(PlanError::Config(format!("refit needs at least 2 elites, got {}", elites.len())));
    }
    Ok(fit(elites, config, frozen))
}

/// What the oracle measures for the active subtask.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub goal: OracleGoal,
    pub done: Option<Predicate>,
    pub scoring: OracleScoring,
}

impl Objective {
    pub fn score(&self, scene: &SceneTwin, gripper: &GripperState) -> f64 {
        if self.scoring == OracleScoring::SuccessPredicateProgress
            && self.done.as_ref().is_some_and(|p| evaluate_predicate(p, scene, gripper))
        {
            return 1.0;
        }
        oracle_score(&self.goal, scene, gripper)
    }
}

/// Everything fixed during one planning step.
pub struct StepContext<'a> {
    pub scene: &'a SceneTwin,
    pub gripper: &'a GripperState,
    pub config: &'a RunConfig,
    pub critic: &'a Critic,
    pub camera: &'a Camera,
    pub instruction: &'a str,
    pub subgoal: &'a str,
    pub objective: Option<&'a Objective>,
    pub step: usize,
    pub view: ViewName,
    pub view_fallback: bool,
    pub active_subtask: usize,
}

/// A critic failure together with the remote exchanges that led to it.
#[derive(Debug)]
pub struct StepFailure {
    pub error: CriticError,
    pub exchanges: Vec<Exchange>,
}

/// Result of one tournament round.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub elites: Vec<usize>,
    pub verdicts: Vec<CriticVerdict>,
    /// Objective score of every candidate, when an objective is known.
    pub scores: Option<Vec<f64>>,
    pub simulations: usize,
    pub queries: usize,
    pub exchanges: Vec<Exchange>,
}

/// Simulates every candidate, then runs one critic query per consecutive
/// group of `group_size` candidates and returns the winners' indices.
pub fn evaluate_candidates(ctx: &StepContext, actions: &[Action], iteration: usize) -> Result<Evaluation, StepFailure> {
    let planner = &ctx.config.planner;
    let fail = |error, exchanges| StepFailure { error, exchanges };
    if matches!(ctx.critic.kind(), CriticKind::Oracle { .. }) && ctx.objective.is_none() {
        return Err(fail(
            CriticError::InvalidQuery("the oracle critic needs an oracle goal".into()),
            vec![],
        ));
    }
    let needs_images = ctx.critic.needs_images();
    // bodies suffice for scoring; splats only matter when rendering
    let light = SceneTwin {
        bodies: ctx.scene.bodies.clone(),
        splats: vec![],
        cameras: ctx.scene.cameras.clone(),
        workspace: ctx.scene.workspace,
        support_plane_z: ctx.scene.support_plane_z,
        anchor_threshold_m: ctx.scene.anchor_threshold_m,
        task: ctx.scene.task.clone(),
    };
    let outcomes: Vec<(f64, Option<crate::render::RgbImage>)> = actions
        .par_iter()
        .map(|a| {
            let out = simulate_step(&light, ctx.gripper, a, &ctx.config.sim);
            let moved = apply_transforms(&light, &out.transforms).expect("simulator only moves movable bodies");
            let score = ctx.objective.map_or(f64::NAN, |o| o.score(&moved, &out.gripper));
            let image = needs_images.then(|| {
                let full = apply_transforms(ctx.scene, &out.transforms).expect("same bodies as the light scene");
                render_view(&full, &out.gripper, ctx.camera).color
            });
            (score, image)
        })
        .collect();
    let scores: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let g = planner.group_size;
    let groups = actions.len() / g;
    let context = format!("Planning step {}.", ctx.step);
    let episode = planner.episode_seed;
    let query_group = |j: usize| -> Result<(CriticVerdict, Vec<Exchange>), StepFailure> {
        let range = j * g..(j + 1) * g;
        let query = if needs_images {
            let imgs = outcomes[range.clone()].iter().map(|o| o.1.clone().expect("rendered")).collect();
            CriticQuery::with_images(ctx.subgoal, context.clone(), imgs)
        } else {
            CriticQuery::blind(ctx.subgoal, context.clone(), g)
        };
        let mut log = vec![];
        let key = [episode, ctx.step as u64, iteration as u64, j as u64];
        match ctx
            .critic
            .select_best(ctx.instruction, &query, Some(&scores[range]), &key, &mut log)
        {
            Ok(v) => Ok((v, log)),
            Err(e) => Err(fail(e, log)),
        }
    };
    let results: Vec<Result<(CriticVerdict, Vec<Exchange>), StepFailure>> = if needs_images {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(planner.critic_parallelism)
            .build()
            .expect("critic thread pool");
        pool.install(|| (0..groups).into_par_iter().map(query_group).collect())
    } else {
        (0..groups).map(query_group).collect()
    };
    let mut eval = Evaluation {
        elites: Vec::with_capacity(groups),
        verdicts: Vec::with_capacity(groups),
        scores: ctx.objective.map(|_| scores),
        simulations: actions.len(),
        queries: groups,
        exchanges: vec![],
    };
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((v, log)) => {
                eval.elites.push(j * g + v.chosen_index);
                eval.verdicts.push(v);
                eval.exchanges.extend(log);
            }
            Err(mut f) => {
                let mut all = std::mem::take(&mut eval.exchanges);
                all.append(&mut f.exchanges);
                return Err(fail(f.error, all));
            }
        }
    }
    Ok(eval)
}

/// Bookkeeping for one planning step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStepResult {
    pub chosen_action: Action,
    pub chosen_view: ViewName,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub view_fallback: bool,
    pub active_subtask: usize,
    pub initial_distribution: ActionDistribution,
    /// Distribution fitted to the elites after each round.
    pub distributions: Vec<ActionDistribution>,
    pub elites: Vec<Vec<usize>>,
    pub verdicts: Vec<Vec<CriticVerdict>>,
    /// Objective scores of the elites per round, when an objective exists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elite_scores: Vec<Vec<f64>>,
    pub simulations: usize,
    pub critic_queries: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<Exchange>,
}

/// Runs the sample, evaluate, refit loop from `initial`. Without CEM a
/// single round runs and the elites' mean is returned directly.
pub fn cem_step(ctx: &StepContext, initial: ActionDistribution) -> Result<(Action, PlanStepResult), StepFailure> {
    let planner = &ctx.config.planner;
    let ws = &ctx.scene.workspace;
    let mut dist = initial.clone();
    let mut result = PlanStepResult {
        chosen_action: initial.mean_action(ws),
        chosen_view: ctx.view,
        view_fallback: ctx.view_fallback,
        active_subtask: ctx.active_subtask,
        initial_distribution: initial,
        distributions: vec![],
        elites: vec![],
        verdicts: vec![],
        elite_scores: vec![],
        simulations: 0,
        critic_queries: 0,
        exchanges: vec![],
    };
    for it in 0..planner.rounds() {
        let key = [planner.episode_seed, ctx.step as u64, it as u64];
        let actions = sample_actions(&dist, planner.n_samples, ws, &key);
        let eval = match evaluate_candidates(ctx, &actions, it) {
            Ok(e) => e,
            Err(mut f) => {
                result.exchanges.append(&mut f.exchanges);
                return Err(StepFailure {
                    error: f.error,
                    exchanges: result.exchanges,
                });
            }
        };
        let elites: Vec<Action> = eval.elites.iter().map(|&i| actions[i]).collect();
        dist = fit(&elites, planner, dist.frozen);
        result.simulations += eval.simulations;
        result.critic_queries += eval.queries;
        if let Some(s) = &eval.scores {
            result.elite_scores.push(eval.elites.iter().map(|&i| s[i]).collect());
        }
        result.distributions.push(dist.clone());
        result.elites.push(eval.elites);
        result.verdicts.push(eval.verdicts);
        result.exchanges.extend(eval.exchanges);
    }
    result.chosen_action = dist.mean_action(ws);
    Ok((result.chosen_action, result))
}
