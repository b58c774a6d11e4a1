use serde::{Deserialize, Serialize};

use crate::critic::{CriticKind, OracleScoring, RemoteConfig};
use crate::render::DEFAULT_IMAGE_SIZE;
use crate::sim::SimConfig;

use super::PlanError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_samples: usize,
    pub group_size: usize,
    pub iterations: usize,
    pub step_budget: usize,
    pub time_budget_s: f64,
    pub use_views: bool,
    pub use_subtasks: bool,
    pub use_cem: bool,
    /// Per-dimension minimum std: position (m), axis-angle (rad), finger.
    pub std_floor: [f64; 7],
    pub init_std: [f64; 7],
    pub episode_seed: u64,
    /// Maximum concurrent remote critic queries.
    pub critic_parallelism: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_samples: 90,
            group_size: 5,
            iterations: 3,
            step_budget: 30,
            time_budget_s: 300.0,
            use_views: true,
            use_subtasks: true,
            use_cem: true,
            std_floor: [0.005, 0.005, 0.005, 0.02, 0.02, 0.02, 0.02],
            init_std: [0.10, 0.10, 0.10, 0.4, 0.4, 0.4, 0.5],
            episode_seed: 0,
            critic_parallelism: 4,
        }
    }
}

impl PlannerConfig {
    /// Number of groups, and so of elites, per iteration.
    pub fn groups(&self) -> usize {
        self.n_samples / self.group_size
    }

    /// Sampling rounds per planning step.
    pub fn rounds(&self) -> usize {
        if self.use_cem {
            self.iterations
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::Config(m));
        for (name, v) in [
            ("n_samples", self.n_samples),
            ("group_size", self.group_size),
            ("iterations", self.iterations),
            ("step_budget", self.step_budget),
            ("critic_parallelism", self.critic_parallelism),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.n_samples.is_multiple_of(self.group_size) {
            return bad(format!(
                "n_samples ({}) must be divisible by group_size ({})",
                self.n_samples, self.group_size
            ));
        }
        if self.use_cem && self.groups() < 2 {
            return bad("refitting needs at least 2 groups (n_samples / group_size >= 2)".into());
        }
        if !(self.time_budget_s > 0.0) {
            return bad("time_budget_s must be positive".into());
        }
        if self.std_floor.iter().chain(&self.init_std).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("std_floor and init_std entries must be positive and finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticName {
    #[default]
    Oracle,
    Random,
    Remote,
}

/// Flat critic settings as they appear in a run-config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub kind: CriticName,
    pub scoring: OracleScoring,
    pub seed: u64,
    pub endpoint: String,
    pub model: String,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        let remote = RemoteConfig::new("", "");
        Self {
            kind: CriticName::Oracle,
            scoring: OracleScoring::DistanceToGoal,
            seed: 0,
            endpoint: String::new(),
            model: String::new(),
            retries: remote.retries,
            backoff_ms: remote.backoff_ms,
            timeout_s: remote.timeout_s,
        }
    }
}

impl CriticConfig {
    pub fn to_kind(&self) -> CriticKind {
        match self.kind {
            CriticName::Oracle => CriticKind::Oracle { scoring: self.scoring },
            CriticName::Random => CriticKind::Random { seed: self.seed },
            CriticName::Remote => CriticKind::Remote(RemoteConfig {
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                retries: self.retries,
                backoff_ms: self.backoff_ms,
                timeout_s: self.timeout_s,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub image_size: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

/// Everything an episode needs besides the scene, as loaded from a
/// run-config file with `[planner]`, `[sim]`, `[critic]` and `[render]`
/// sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    pub critic: CriticConfig,
    pub render: RenderConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.planner.validate()?;
        self.sim.validate().map_err(PlanError::Config)?;
        if self.render.image_size < 16 {
            return Err(PlanError::Config("render.image_size must be at least 16".into()));
        }
        if self.critic.kind == CriticName::Remote && self.critic.endpoint.trim().is_empty() {
            return Err(PlanError::Config("the remote critic requires an endpoint".into()));
        }
        Ok(())
    }
}
