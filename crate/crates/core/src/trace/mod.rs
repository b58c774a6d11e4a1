//! Episode traces: one JSON header line, one line per planning step, one
//! terminal line. Files are appended and synced record by record, so a
//! reader always sees a consistent prefix.

mod lint;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{CriticKind, Exchange, SubtaskPlan};
use crate::geometry::{Aabb, Pose};
use crate::planner::{EpisodeSink, PlanStepResult, RunConfig};
use crate::render::render_view;
use crate::sim::{check_success, simulate_step, GripperState, StepOutcome};
use crate::twin::{apply_transforms, scene_content_hash, SceneTwin};

pub use lint::{lint, LintViolation};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_EXTENSION: &str = ".trace.jsonl";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("TRACE_IO: {0}")]
    Io(String),
    #[error("TRACE_PARSE: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("TRACE_TERMINATED: the trace already has a terminal record")]
    Terminated,
    #[error("HASH_MISMATCH: trace was recorded against scene {expected}, file hashes to {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("DIVERGENCE at step {step}: {field} differs")]
    Divergence { step: usize, field: String },
    #[error("TRACE_INVALID: {0}")]
    Invalid(String),
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::Io(_) => "TRACE_IO",
            TraceError::Parse { .. } => "TRACE_PARSE",
            TraceError::Terminated => "TRACE_TERMINATED",
            TraceError::HashMismatch { .. } => "HASH_MISMATCH",
            TraceError::Divergence { .. } => "DIVERGENCE",
            TraceError::Invalid(_) => "TRACE_INVALID",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub scene_path: String,
    pub scene_hash: String,
    pub config: RunConfig,
    pub episode_seed: u64,
    pub critic: CriticKind,
    pub prompt_template_hash: String,
    pub started_at_unix_s: u64,
    pub workspace: Aabb,
    pub subtask_plan: Option<SubtaskPlan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decompose_exchanges: Vec<Exchange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub plan: PlanStepResult,
    /// Result of executing the chosen action in the twin.
    pub executed: StepOutcome,
    /// Every body pose after execution.
    pub body_poses: BTreeMap<String, Pose>,
    pub success: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalStatus {
    Success,
    FailedBudget,
    AbortedCritic,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Success => "SUCCESS",
            TerminalStatus::FailedBudget => "FAILED_BUDGET",
            TerminalStatus::AbortedCritic => "ABORTED_CRITIC",
        }
    }
}

impl std::fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub status: TerminalStatus,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<Exchange>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(Box<TraceHeader>),
    Step(Box<StepRecord>),
    Terminal(TerminalRecord),
}

fn line_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("trace records serialize");
    s.push('\n');
    s
}

fn header_line(h: &TraceHeader) -> String {
    line_json(&Line::Header(Box::new(h.clone())))
}

fn step_line(r: &StepRecord) -> String {
    line_json(&Line::Step(Box::new(r.clone())))
}

fn terminal_line(t: &TerminalRecord) -> String {
    line_json(&Line::Terminal(t.clone()))
}

/// A whole episode in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub terminal: Option<TerminalRecord>,
}

impl EpisodeTrace {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            steps: vec![],
            terminal: None,
        }
    }

    pub fn append_step(&mut self, record: StepRecord) -> Result<(), TraceError> {
        if self.terminal.is_some() {
            return Err(TraceError::Terminated);
        }
        self.steps.push(record);
        Ok(())
    }

    pub fn terminate(&mut self, terminal: TerminalRecord) -> Result<(), TraceError> {
        if self.terminal.is_some() {
            return Err(TraceError::Terminated);
        }
        self.terminal = Some(terminal);
        Ok(())
    }

    pub fn status(&self) -> Option<TerminalStatus> {
        self.terminal.as_ref().map(|t| t.status)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = header_line(&self.header);
        for s in &self.steps {
            out.push_str(&step_line(s));
        }
        if let Some(t) = &self.terminal {
            out.push_str(&terminal_line(t));
        }
        out
    }

    /// Parses trace text. An unterminated final line that does not parse is
    /// treated as an interrupted write and ignored.
    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let mut header = None;
        let mut steps = vec![];
        let mut terminal = None;
        for (i, raw) in lines.iter().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<Line>(raw);
            let line = match parsed {
                Ok(l) => l,
                Err(_) if i + 1 == lines.len() && !complete => break,
                Err(e) => {
                    return Err(TraceError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            };
            let misplaced = |what: &str| TraceError::Parse {
                line: i + 1,
                message: format!("unexpected {what} record"),
            };
            match line {
                Line::Header(h) if header.is_none() => header = Some(*h),
                Line::Header(_) => return Err(misplaced("header")),
                Line::Step(_) | Line::Terminal(_) if header.is_none() => return Err(misplaced("record before header")),
                Line::Step(_) if terminal.is_some() => return Err(misplaced("step after terminal")),
                Line::Step(s) => steps.push(*s),
                Line::Terminal(_) if terminal.is_some() => return Err(misplaced("second terminal")),
                Line::Terminal(t) => terminal = Some(t),
            }
        }
        let header = header.ok_or_else(|| TraceError::Invalid("missing header".into()))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(TraceError::Invalid(format!(
                "unsupported schema version {}",
                header.schema_version
            )));
        }
        Ok(Self { header, steps, terminal })
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))
    }
}

/// Collects an episode in memory.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    trace: Option<EpisodeTrace>,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// The recorded trace; `None` if no header was ever written.
    pub fn into_trace(self) -> Option<EpisodeTrace> {
        self.trace
    }
}

impl EpisodeSink for TraceRecorder {
    fn header(&mut self, header: &TraceHeader) -> Result<(), String> {
        if self.trace.is_some() {
            return Err("header already written".into());
        }
        self.trace = Some(EpisodeTrace::new(header.clone()));
        Ok(())
    }

    fn step(&mut self, record: &StepRecord) -> Result<(), String> {
        let t = self.trace.as_mut().ok_or("step before header")?;
        t.append_step(record.clone()).map_err(|e| e.to_string())
    }

    fn terminal(&mut self, terminal: &TerminalRecord) -> Result<(), String> {
        let t = self.trace.as_mut().ok_or("terminal before header")?;
        t.terminate(terminal.clone()).map_err(|e| e.to_string())
    }
}

/// Appends records to a trace file, syncing each one to storage before
/// returning.
pub struct TraceWriter {
    path: PathBuf,
    file: Option<File>,
    terminated: bool,
    steps: usize,
}

impl TraceWriter {
    /// Creates (or truncates) `path`; the header is written by the first
    /// `header` call.
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Some(file),
            terminated: false,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn write_line(&mut self, line: &str) -> Result<(), TraceError> {
        let io = |e: std::io::Error| TraceError::Io(format!("{}: {e}", self.path.display()));
        let file = self.file.as_mut().ok_or_else(|| TraceError::Io("trace file closed".into()))?;
        file.write_all(line.as_bytes()).map_err(io)?;
        file.sync_data().map_err(io)
    }

    pub fn write_header(&mut self, header: &TraceHeader) -> Result<(), TraceError> {
        self.write_line(&header_line(header))
    }

    pub fn append_step(&mut self, record: &StepRecord) -> Result<(), TraceError> {
        if self.terminated {
            return Err(TraceError::Terminated);
        }
        self.write_line(&step_line(record))?;
        self.steps += 1;
        Ok(())
    }

    pub fn finish(&mut self, terminal: &TerminalRecord) -> Result<(), TraceError> {
        if self.terminated {
            return Err(TraceError::Terminated);
        }
        self.write_line(&terminal_line(terminal))?;
        self.terminated = true;
        Ok(())
    }
}

impl EpisodeSink for TraceWriter {
    fn header(&mut self, header: &TraceHeader) -> Result<(), String> {
        self.write_header(header).map_err(|e| e.to_string())
    }

    fn step(&mut self, record: &StepRecord) -> Result<(), String> {
        self.append_step(record).map_err(|e| e.to_string())
    }

    fn terminal(&mut self, terminal: &TerminalRecord) -> Result<(), String> {
        self.finish(terminal).map_err(|e| e.to_string())
    }
}

fn same<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_value(a).ok() == serde_json::to_value(b).ok()
}

/// Twin state after each step of `trace`, recomputed from its chosen
/// actions. Checks each recomputed step against the record.
fn replay_states(
    trace: &EpisodeTrace,
    scene: &SceneTwin,
    mut visit: impl FnMut(usize, &SceneTwin, &GripperState) -> Result<(), TraceError>,
) -> Result<(), TraceError> {
    let mut scene = scene.clone();
    let mut gripper = GripperState::initial(&scene);
    for (i, rec) in trace.steps.iter().enumerate() {
        let out = simulate_step(&scene, &gripper, &rec.plan.chosen_action, &trace.header.config.sim);
        let diverged = |field: &str| TraceError::Divergence {
            step: i,
            field: field.to_string(),
        };
        if rec.step != i {
            return Err(diverged("step index"));
        }
        if !same(&out.transforms, &rec.executed.transforms) {
            return Err(diverged("transforms"));
        }
        if !same(&out.events, &rec.executed.events) {
            return Err(diverged("events"));
        }
        if !same(&out.gripper, &rec.executed.gripper) {
            return Err(diverged("gripper"));
        }
        scene = apply_transforms(&scene, &out.transforms).map_err(|e| TraceError::Invalid(e.to_string()))?;
        gripper = out.gripper;
        if !same(&scene.body_poses(), &rec.body_poses) {
            return Err(diverged("body poses"));
        }
        if check_success(&scene, &gripper) != rec.success {
            return Err(diverged("success"));
        }
        visit(i, &scene, &gripper)?;
    }
    Ok(())
}

/// Re-executes the recorded actions against `scene` without planning or
/// critic calls and checks every recorded outcome.
pub fn replay(trace: &EpisodeTrace, scene: &SceneTwin) -> Result<(), TraceError> {
    replay_states(trace, scene, |_, _, _| Ok(()))
}

/// Loads the scene at `scene_path`, checks its hash against the trace
/// header, and replays.
pub fn replay_file(trace: &EpisodeTrace, scene_path: &Path) -> Result<(), TraceError> {
    let actual = scene_content_hash(scene_path).map_err(|e| TraceError::Invalid(e.to_string()))?;
    if actual != trace.header.scene_hash {
        return Err(TraceError::HashMismatch {
            expected: trace.header.scene_hash.clone(),
            actual,
        });
    }
    let scene = crate::twin::load_scene(scene_path).map_err(|e| TraceError::Invalid(e.to_string()))?;
    replay(trace, &scene)
}

/// File name of a dumped frame.
pub fn frame_name(step: usize, view: crate::render::ViewName) -> String {
    format!("step_{step:03}_{view}.png")
}

/// Writes the chosen-view image after every step to `dir`; returns the
/// number of images written.
pub fn dump_frames(trace: &EpisodeTrace, scene: &SceneTwin, dir: &Path) -> Result<usize, TraceError> {
    std::fs::create_dir_all(dir).map_err(|e| TraceError::Io(format!("{}: {e}", dir.display())))?;
    let size = trace.header.config.render.image_size;
    let rig = scene.cameras.resized(size, size);
    let mut count = 0;
    replay_states(trace, scene, |i, state, gripper| {
        let view = trace.steps[i].plan.chosen_view;
        let img = render_view(state, gripper, rig.get(view)).color;
        img.write_png(&dir.join(frame_name(i, view)))
            .map_err(|e| TraceError::Io(e.to_string()))?;
        count += 1;
        Ok(())
    })?;
    Ok(count)
}

#[cfg(test)]
mod tests;
