use std::sync::OnceLock;

use super::*;
use crate::critic::Critic;
use crate::geometry::Vec3;
use crate::planner::{plan_episode, EpisodeOptions};
use crate::render::ViewName;
use crate::templates::generate;

fn recorded() -> &'static (SceneTwin, EpisodeTrace) {
    static CELL: OnceLock<(SceneTwin, EpisodeTrace)> = OnceLock::new();
    CELL.get_or_init(|| {
        let scene = generate("push-region", 2).unwrap();
        let mut config = RunConfig::default();
        config.planner.step_budget = 3;
        config.render.image_size = 48;
        let critic = Critic::new(config.critic.to_kind()).unwrap();
        let mut rec = TraceRecorder::new();
        let opts = EpisodeOptions {
            scene_path: "push.scene".into(),
            scene_hash: "abc".into(),
            started_at_unix_s: 1_700_000_000,
        };
        plan_episode(&scene, &critic, &config, &opts, &mut rec).unwrap();
        (scene, rec.into_trace().unwrap())
    })
}

#[test]
fn jsonl_round_trip_is_byte_identical() {
    let (_, trace) = recorded();
    let text = trace.to_jsonl();
    let back = EpisodeTrace::from_jsonl(&text).unwrap();
    assert_eq!(&back, trace);
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(text.lines().count(), trace.steps.len() + 2);
    for (line, ty) in text.lines().zip(["header", "step"]) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["type"], ty);
    }
}

#[test]
fn no_records_after_terminal() {
    let (_, trace) = recorded();
    let mut t = trace.clone();
    assert!(t.terminal.is_some());
    let step = t.steps[0].clone();
    assert!(matches!(t.append_step(step), Err(TraceError::Terminated)));
    let term = t.terminal.clone().unwrap();
    assert!(matches!(t.terminate(term), Err(TraceError::Terminated)));
}

#[test]
fn interrupted_last_line_is_ignored() {
    let (_, trace) = recorded();
    let text = trace.to_jsonl();
    let cut = text.trim_end().rfind('\n').unwrap() + 1;
    let partial = format!("{}{}", &text[..cut], &text[cut..cut + 20]);
    let t = EpisodeTrace::from_jsonl(&partial).unwrap();
    assert_eq!(t.steps.len(), trace.steps.len());
    assert!(t.terminal.is_none());

    // the same garbage in the middle of the file is an error
    let bad = format!("{}{}\n{}", &text[..cut], &text[cut..cut + 20], &text[cut..]);
    assert!(matches!(EpisodeTrace::from_jsonl(&bad), Err(TraceError::Parse { .. })));
}

#[test]
fn structural_errors() {
    let (_, trace) = recorded();
    let text = trace.to_jsonl();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    let no_header = lines.join("\n") + "\n";
    assert!(EpisodeTrace::from_jsonl(&no_header).is_err());
    let twice = format!("{header}\n{header}\n");
    assert!(matches!(EpisodeTrace::from_jsonl(&twice), Err(TraceError::Parse { line: 2, .. })));
    assert!(matches!(EpisodeTrace::from_jsonl(""), Err(TraceError::Invalid(_))));
}

#[test]
fn replay_reproduces_the_recording() {
    let (scene, trace) = recorded();
    assert!(!trace.steps.is_empty());
    replay(trace, scene).unwrap();
}

#[test]
fn tampered_action_diverges() {
    let (scene, trace) = recorded();
    let mut t = trace.clone();
    let last = t.steps.len() - 1;
    t.steps[last].plan.chosen_action.position += Vec3::new(0.05, 0.0, 0.0);
    match replay(&t, scene) {
        Err(TraceError::Divergence { step, .. }) => assert_eq!(step, last),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn hash_mismatch_is_reported() {
    let (scene, trace) = recorded();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("push.scene");
    crate::templates::write_generated(scene, &path).unwrap();
    let mut t = trace.clone();
    t.header.scene_hash = scene_content_hash(&path).unwrap();
    replay_file(&t, &path).unwrap();
    t.header.scene_hash = "0".repeat(64);
    let err = replay_file(&t, &path).unwrap_err();
    assert_eq!(err.code(), "HASH_MISMATCH");
}

#[test]
fn frames_are_named_by_step_and_view() {
    assert_eq!(frame_name(3, ViewName::TopDown), "step_003_top-down.png");
    let (scene, trace) = recorded();
    let dir = tempfile::tempdir().unwrap();
    let n = dump_frames(trace, scene, dir.path()).unwrap();
    assert_eq!(n, trace.steps.len());
    for (i, s) in trace.steps.iter().enumerate() {
        let p = dir.path().join(frame_name(i, s.plan.chosen_view));
        let img = crate::render::RgbImage::from_png(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(img.width, 48);
    }
}

#[test]
fn writer_syncs_a_readable_prefix() {
    let (_, trace) = recorded();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(format!("ep{TRACE_EXTENSION}"));
    let mut w = TraceWriter::create(&path).unwrap();
    w.write_header(&trace.header).unwrap();
    w.append_step(&trace.steps[0]).unwrap();
    let prefix = EpisodeTrace::read(&path).unwrap();
    assert_eq!(prefix.steps.len(), 1);
    assert!(prefix.terminal.is_none());
    for s in &trace.steps[1..] {
        w.append_step(s).unwrap();
    }
    w.finish(trace.terminal.as_ref().unwrap()).unwrap();
    assert!(matches!(w.append_step(&trace.steps[0]), Err(TraceError::Terminated)));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), trace.to_jsonl());
}

#[test]
fn lint_accepts_planner_output_and_flags_tampering() {
    let (_, trace) = recorded();
    assert!(lint(trace).is_empty(), "{:?}", lint(trace));

    let mut t = trace.clone();
    t.steps[0].plan.critic_queries = 53;
    t.steps[0].plan.distributions[0].std[0] = 0.001;
    t.steps[0].plan.elites[1][0] = 7;
    let rules: Vec<&str> = lint(&t).iter().map(|v| v.rule).collect();
    assert!(rules.contains(&"query-count"));
    assert!(rules.contains(&"std-floor"));
    assert!(rules.contains(&"elite-group"));

    let mut t = trace.clone();
    t.terminal = None;
    assert!(lint(&t).iter().any(|v| v.rule == "terminal"));
}
