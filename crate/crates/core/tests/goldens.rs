mod common;

use std::path::PathBuf;

use common::{check_golden, goldens_dir};
use pwf_core::critic::Critic;
use pwf_core::planner::{plan_episode, EpisodeOptions};
use pwf_core::templates::{generate, write_generated};
use pwf_core::trace::{dump_frames, frame_name, lint, replay_file, EpisodeTrace, TerminalStatus, TraceRecorder};
use pwf_core::twin::{load_scene, scene_content_hash};
use pwf_core::RunConfig;

fn fixture() -> PathBuf {
    goldens_dir().join("press-button.scene")
}

fn press_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.planner.episode_seed = 7;
    config
}

#[test]
fn press_template_matches_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("press-button.scene");
    write_generated(&generate("press", 0).unwrap(), &path).unwrap();
    check_golden("press-button.scene", &std::fs::read(&path).unwrap()).unwrap();
    check_golden("press-button.splats.ply", &std::fs::read(dir.path().join("press-button.splats.ply")).unwrap())
        .unwrap();
}

#[test]
fn fixture_scene_loads() {
    let scene = load_scene(&fixture()).unwrap();
    assert_eq!(scene.bodies.len(), 3);
    assert_eq!(scene.splats.len(), 5000);
    assert_eq!(scene.cameras.iter().count(), 4);
}

fn record() -> EpisodeTrace {
    let path = fixture();
    let scene = load_scene(&path).unwrap();
    let config = press_config();
    let critic = Critic::new(config.critic.to_kind()).unwrap();
    let opts = EpisodeOptions {
        scene_path: "press-button.scene".into(),
        scene_hash: scene_content_hash(&path).unwrap(),
        started_at_unix_s: 1_700_000_000,
    };
    let mut rec = TraceRecorder::new();
    plan_episode(&scene, &critic, &config, &opts, &mut rec).unwrap();
    rec.into_trace().unwrap()
}

#[test]
fn oracle_episode_matches_the_recorded_trace() {
    let trace = record();
    assert_eq!(trace.status(), Some(TerminalStatus::Success));
    assert!(lint(&trace).is_empty());
    check_golden("press-button.trace.jsonl", trace.to_jsonl().as_bytes()).unwrap();
}

#[test]
fn recorded_trace_replays_against_the_fixture() {
    let trace = EpisodeTrace::read(&goldens_dir().join("press-button.trace.jsonl")).unwrap();
    replay_file(&trace, &fixture()).unwrap();
}

#[test]
fn dumped_frames_are_byte_identical() {
    let trace = record();
    let scene = load_scene(&fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let n = dump_frames(&trace, &scene, dir.path()).unwrap();
    assert_eq!(n, trace.steps.len());
    for (i, step) in trace.steps.iter().enumerate() {
        let name = frame_name(i, step.plan.chosen_view);
        let bytes = std::fs::read(dir.path().join(&name)).unwrap();
        check_golden(&format!("frames/{name}"), &bytes).unwrap();
    }
}
