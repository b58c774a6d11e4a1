//! Outcome critics: pick the best outcome of a group, split an instruction
//! into subtasks, track the active subtask and choose the next camera.
//!
//! Three implementations share one interface: a geometric oracle driven by
//! simulator scores, a seeded uniform-random baseline, and a remote
//! vision-chat model.

mod parse;
pub mod prompt;
mod remote;
pub mod stub;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::render::{CameraRig, RgbImage, ViewName};
use crate::seed::{self, Stream};
use crate::twin::ScriptedPlan;

pub use parse::{index_below, last_integer, subtask_plan, view_name};
pub use prompt::template_hash;
pub use remote::{Exchange, RemoteConfig, API_KEY_ENV};
use prompt::Prompt;
use remote::RemoteClient;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("REMOTE_CRITIC_FAILED: {0}")]
    RemoteFailed(String),
    #[error("UNSUPPORTED_CRITIC_OP: {0}")]
    Unsupported(String),
    #[error("MISSING_SCRIPTED_SUBTASKS: the task has no scripted subtasks")]
    MissingScript,
    #[error("INVALID_CRITIC_QUERY: {0}")]
    InvalidQuery(String),
    #[error("INVALID_CRITIC_CONFIG: {0}")]
    InvalidConfig(String),
}

impl CriticError {
    pub fn code(&self) -> &'static str {
        match self {
            CriticError::RemoteFailed(_) => "REMOTE_CRITIC_FAILED",
            CriticError::Unsupported(_) => "UNSUPPORTED_CRITIC_OP",
            CriticError::MissingScript => "MISSING_SCRIPTED_SUBTASKS",
            CriticError::InvalidQuery(_) => "INVALID_CRITIC_QUERY",
            CriticError::InvalidConfig(_) => "INVALID_CRITIC_CONFIG",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleScoring {
    /// Negative distance of the goal subject to its target.
    #[default]
    DistanceToGoal,
    /// Like distance-to-goal, but any outcome satisfying the active
    /// completion predicate scores 1.
    SuccessPredicateProgress,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CriticKind {
    Oracle {
        #[serde(default)]
        scoring: OracleScoring,
    },
    Random {
        #[serde(default)]
        seed: u64,
    },
    Remote(RemoteConfig),
}

impl CriticKind {
    pub fn name(&self) -> &'static str {
        match self {
            CriticKind::Oracle { .. } => "oracle",
            CriticKind::Random { .. } => "random",
            CriticKind::Remote(_) => "remote",
        }
    }
}

/// One group of outcomes to choose from. Critics that only look at scores
/// accept a query without images.
#[derive(Clone, Debug)]
pub struct CriticQuery {
    pub subgoal: String,
    pub context: String,
    pub images: Vec<RgbImage>,
    pub count: usize,
}

impl CriticQuery {
    pub fn with_images(subgoal: impl Into<String>, context: impl Into<String>, images: Vec<RgbImage>) -> Self {
        let count = images.len();
        Self {
            subgoal: subgoal.into(),
            context: context.into(),
            images,
            count,
        }
    }

    pub fn blind(subgoal: impl Into<String>, context: impl Into<String>, count: usize) -> Self {
        Self {
            subgoal: subgoal.into(),
            context: context.into(),
            images: vec![],
            count,
        }
    }

    fn validate(&self) -> Result<(), CriticError> {
        if self.count == 0 {
            return Err(CriticError::InvalidQuery("a query needs at least one outcome".into()));
        }
        if !self.images.is_empty() && self.images.len() != self.count {
            return Err(CriticError::InvalidQuery("image count does not match outcome count".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub chosen_index: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskPlan {
    pub subtasks: Vec<String>,
    pub needs_fingers: bool,
    pub needs_rotation: bool,
}

impl SubtaskPlan {
    pub fn from_script(script: &ScriptedPlan) -> SubtaskPlan {
        SubtaskPlan {
            subtasks: script.subtasks.iter().map(|s| s.text.clone()).collect(),
            needs_fingers: script.needs_fingers,
            needs_rotation: script.needs_rotation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewChoice {
    pub view: ViewName,
    /// The remote critic repeated the forbidden view after a reprompt and
    /// the fixed order was used instead.
    pub fallback: bool,
}

/// First view in the fixed order that differs from `previous`.
pub fn fallback_view(previous: Option<ViewName>) -> ViewName {
    ViewName::ALL
        .into_iter()
        .find(|v| Some(*v) != previous)
        .expect("four views")
}

/// Index of the largest score; the lowest index wins ties and NaN never
/// wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

pub struct Critic {
    kind: CriticKind,
    remote: Option<RemoteClient>,
}

impl std::fmt::Debug for Critic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Critic").field("kind", &self.kind).finish()
    }
}

impl Critic {
    pub fn new(kind: CriticKind) -> Result<Self, CriticError> {
        let remote = match &kind {
            CriticKind::Remote(cfg) => Some(RemoteClient::new(cfg.clone())?),
            _ => None,
        };
        Ok(Self { kind, remote })
    }

    pub fn kind(&self) -> &CriticKind {
        &self.kind
    }

    /// Whether queries must carry rendered images.
    pub fn needs_images(&self) -> bool {
        self.remote.is_some()
    }

    /// Picks one outcome of `query`. The oracle needs one score per
    /// outcome; `key` seeds the random critic.
    pub fn select_best(
        &self,
        instruction: &str,
        query: &CriticQuery,
        scores: Option<&[f64]>,
        key: &[u64],
        log: &mut Vec<Exchange>,
    ) -> Result<CriticVerdict, CriticError> {
        query.validate()?;
        match &self.kind {
            CriticKind::Oracle { .. } => {
                let scores = scores
                    .filter(|s| s.len() == query.count)
                    .ok_or_else(|| CriticError::InvalidQuery("oracle needs one score per outcome".into()))?;
                Ok(CriticVerdict {
                    chosen_index: argmax(scores),
                    rationale: String::new(),
                })
            }
            CriticKind::Random { seed } => {
                let mut rng = seed::rng(Stream::Critic, &[&[*seed], key].concat());
                Ok(CriticVerdict {
                    chosen_index: rng.gen_range(0..query.count),
                    rationale: String::new(),
                })
            }
            CriticKind::Remote(_) => {
                if query.images.is_empty() {
                    return Err(CriticError::InvalidQuery("remote critic needs images".into()));
                }
                let count = query.count.to_string();
                let last = (query.count - 1).to_string();
                let p = Prompt::new(
                    prompt::SELECT_BEST,
                    &[
                        ("instruction", instruction),
                        ("subgoal", &query.subgoal),
                        ("context", &query.context),
                        ("count", &count),
                        ("last", &last),
                    ],
                    Prompt::numbered_images(&query.images),
                );
                let (chosen_index, rationale) =
                    self.client().ask("select_best", &p, |r| index_below(r, query.count), log)?;
                Ok(CriticVerdict {
                    chosen_index,
                    rationale,
                })
            }
        }
    }

    /// Splits `instruction` into subtasks. The oracle reads the task's
    /// scripted plan; the random critic cannot decompose.
    pub fn decompose(
        &self,
        instruction: &str,
        images: &[RgbImage],
        scripted: Option<&ScriptedPlan>,
        log: &mut Vec<Exchange>,
    ) -> Result<SubtaskPlan, CriticError> {
        match &self.kind {
            CriticKind::Oracle { .. } => scripted
                .filter(|s| !s.subtasks.is_empty())
                .map(SubtaskPlan::from_script)
                .ok_or(CriticError::MissingScript),
            CriticKind::Random { .. } => Err(CriticError::Unsupported("the random critic cannot decompose".into())),
            CriticKind::Remote(_) => {
                let p = Prompt::new(
                    prompt::DECOMPOSE,
                    &[("instruction", instruction)],
                    Prompt::numbered_images(images),
                );
                Ok(self.client().ask("decompose", &p, subtask_plan, log)?.0)
            }
        }
    }

    /// Index of the subtask to work on. Oracle and random critics advance
    /// past every leading subtask whose completion flag is set, starting at
    /// `last_active`, so the index never decreases.
    pub fn select_active(
        &self,
        instruction: &str,
        images: &[RgbImage],
        plan: &SubtaskPlan,
        last_active: usize,
        completed: &[bool],
        log: &mut Vec<Exchange>,
    ) -> Result<usize, CriticError> {
        let n = plan.subtasks.len();
        if n == 0 {
            return Err(CriticError::InvalidQuery("empty subtask plan".into()));
        }
        match &self.kind {
            CriticKind::Oracle { .. } | CriticKind::Random { .. } => {
                let mut i = last_active.min(n - 1);
                while i + 1 < n && completed.get(i).copied().unwrap_or(false) {
                    i += 1;
                }
                Ok(i)
            }
            CriticKind::Remote(_) => {
                let list = plan
                    .subtasks
                    .iter()
                    .enumerate()
                    .map(|(i, s)| format!("{i}. {s}"))
                    .collect::<Vec<_>>()
                    .join("\n");
                let last = last_active.to_string();
                let p = Prompt::new(
                    prompt::SELECT_ACTIVE,
                    &[("instruction", instruction), ("subtasks", &list), ("last_active", &last)],
                    Prompt::numbered_images(images),
                );
                Ok(self.client().ask("select_active", &p, |r| index_below(r, n), log)?.0)
            }
        }
    }

    /// Next camera, never equal to `previous`. `uncertainty` is the
    /// positional spread of the current action distribution.
    #[allow(clippy::too_many_arguments)]
    pub fn choose_view(
        &self,
        images: &[RgbImage],
        subgoal: &str,
        previous: Option<ViewName>,
        uncertainty: &Vec3,
        rig: &CameraRig,
        key: &[u64],
        log: &mut Vec<Exchange>,
    ) -> Result<ViewChoice, CriticError> {
        let allowed: Vec<ViewName> = ViewName::ALL.into_iter().filter(|v| Some(*v) != previous).collect();
        match &self.kind {
            CriticKind::Oracle { .. } => Ok(ViewChoice {
                view: oracle_view(&allowed, uncertainty, rig),
                fallback: false,
            }),
            CriticKind::Random { seed } => {
                let mut rng = seed::rng(Stream::View, &[&[*seed], key].concat());
                Ok(ViewChoice {
                    view: allowed[rng.gen_range(0..allowed.len())],
                    fallback: false,
                })
            }
            CriticKind::Remote(_) => {
                let rule = match previous {
                    Some(p) => format!("The previous step used the {p} view, which may not be chosen again."),
                    None => "There is no previous view; any camera may be chosen.".to_string(),
                };
                let mut p = Prompt::new(
                    prompt::CHOOSE_VIEW,
                    &[("subgoal", subgoal), ("previous_rule", &rule)],
                    Prompt::numbered_images(images),
                );
                let (view, _) = self.client().ask("choose_view", &p, view_name, log)?;
                if Some(view) != previous {
                    return Ok(ViewChoice { view, fallback: false });
                }
                let names = allowed.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(", ");
                let prev = view.as_str();
                p.after.push(
                    prompt::fill(prompt::VIEW_REPROMPT, &[("previous", prev), ("allowed", &names)])
                        .trim_end()
                        .to_string(),
                );
                let (view, _) = self.client().ask("choose_view", &p, view_name, log)?;
                if Some(view) != previous {
                    Ok(ViewChoice { view, fallback: false })
                } else {
                    Ok(ViewChoice {
                        view: fallback_view(previous),
                        fallback: true,
                    })
                }
            }
        }
    }

    fn client(&self) -> &RemoteClient {
        self.remote.as_ref().expect("remote kind always has a client")
    }
}

/// The allowed view whose optical axis is most orthogonal to the dominant
/// uncertainty axis; ties follow the fixed view order.
fn oracle_view(allowed: &[ViewName], uncertainty: &Vec3, rig: &CameraRig) -> ViewName {
    let mut dominant = 0;
    for i in 1..3 {
        if uncertainty[i].abs() > uncertainty[dominant].abs() {
            dominant = i;
        }
    }
    let mut axis = Vec3::zeros();
    axis[dominant] = 1.0;
    let mut best = allowed[0];
    let mut best_dot = f64::INFINITY;
    for &v in allowed {
        let d = rig.get(v).forward().dot(&axis).abs();
        if d < best_dot - 1e-9 {
            best = v;
            best_dot = d;
        }
    }
    best
}
