use std::f64::consts::PI;

use serde::Serialize;

use crate::render::ViewName;

use super::{EpisodeTrace, TerminalStatus};

const EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LintViolation {
    pub rule: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for LintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.step {
            Some(s) => write!(f, "[{}] step {s}: {}", self.rule, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

/// Checks every planner invariant that is observable from the trace alone.
pub fn lint(trace: &EpisodeTrace) -> Vec<LintViolation> {
    let mut out = vec![];
    let mut push = |rule, step, message: String| out.push(LintViolation { rule, step, message });
    let h = &trace.header;
    let p = &h.config.planner;
    let n = trace.steps.len();

    if n > p.step_budget {
        push("step-budget", None, format!("{n} steps exceed the budget of {}", p.step_budget));
    }
    match &trace.terminal {
        None => push("terminal", None, "missing terminal record".into()),
        Some(t) => {
            if t.steps != n {
                push("terminal", None, format!("terminal counts {} steps, trace has {n}", t.steps));
            }
            if t.status == TerminalStatus::Success && trace.steps.last().is_some_and(|s| !s.success) {
                push("terminal", None, "SUCCESS but the final step is not successful".into());
            }
        }
    }

    if p.group_size == 0 || !p.n_samples.is_multiple_of(p.group_size) {
        push("config", None, "n_samples is not divisible by group_size".into());
        return out;
    }
    let groups = p.groups();
    let rounds = p.rounds();
    for (i, s) in trace.steps.iter().enumerate() {
        let r = &s.plan;
        let at = Some(i);
        if s.step != i {
            push("step-index", at, format!("recorded index {}", s.step));
        }
        if s.success && i + 1 != n {
            push("terminal", at, "successful step is not the last step".into());
        }
        if r.critic_queries != rounds * groups {
            push(
                "query-count",
                at,
                format!("{} critic queries, expected {}", r.critic_queries, rounds * groups),
            );
        }
        if r.simulations != rounds * p.n_samples {
            push(
                "simulation-count",
                at,
                format!("{} simulations, expected {}", r.simulations, rounds * p.n_samples),
            );
        }
        if r.distributions.len() != rounds {
            push(
                "distribution-count",
                at,
                format!("{} distributions, expected {rounds}", r.distributions.len()),
            );
        }
        for (k, d) in r.distributions.iter().enumerate() {
            for dim in 0..7 {
                if !d.frozen[dim] && d.std[dim] < p.std_floor[dim] - EPS {
                    push(
                        "std-floor",
                        at,
                        format!("round {k} dim {dim}: std {} below floor {}", d.std[dim], p.std_floor[dim]),
                    );
                }
            }
        }
        if r.elites.len() != rounds || r.verdicts.len() != rounds {
            push("elite-count", at, format!("{} elite rounds, expected {rounds}", r.elites.len()));
        }
        for (k, elites) in r.elites.iter().enumerate() {
            if elites.len() != groups {
                push("elite-count", at, format!("round {k}: {} elites, expected {groups}", elites.len()));
            }
            for (j, &e) in elites.iter().enumerate() {
                if e / p.group_size != j {
                    push("elite-group", at, format!("round {k}: elite {e} is not from group {j}"));
                }
            }
        }
        for (k, verdicts) in r.verdicts.iter().enumerate() {
            if verdicts.iter().any(|v| v.chosen_index >= p.group_size) {
                push("verdict-range", at, format!("round {k}: chosen index out of range"));
            }
        }
        let a = &r.chosen_action;
        if !h.workspace.contains(&a.position) {
            push("workspace", at, "chosen position outside the workspace".into());
        }
        if a.rotation.norm() > PI + EPS || !(0.0..=1.0).contains(&a.finger) {
            push("canonical-action", at, "chosen action is not canonical".into());
        }
        if p.use_views {
            if i > 0 && trace.steps[i - 1].plan.chosen_view == r.chosen_view {
                push("view-repeat", at, format!("view {} repeats the previous step", r.chosen_view));
            }
        } else if r.chosen_view != ViewName::TopDown {
            push("view-fixed", at, format!("view {} with views disabled", r.chosen_view));
        }
    }
    out
}
