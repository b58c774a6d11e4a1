use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pwf_core::trace::EpisodeTrace;
use pwf_core::RgbImage;
use serde_json::Value;

const COMMANDS: [&str; 8] = [
    "validate",
    "gen-scene",
    "plan",
    "replay",
    "render",
    "stub-server",
    "dump-frames",
    "lint",
];

const PLAN_FLAGS: [&str; 29] = [
    "--scene",
    "--config",
    "--out",
    "--critic",
    "--endpoint",
    "--model",
    "--scoring",
    "--critic-seed",
    "--retries",
    "--backoff-ms",
    "--timeout",
    "--seed",
    "--no-views",
    "--no-subtasks",
    "--no-cem",
    "--steps",
    "--time-budget",
    "--samples",
    "--group-size",
    "--iters",
    "--std-floor",
    "--init-std",
    "--critic-parallelism",
    "--grasp-radius",
    "--no-push",
    "--max-penetration",
    "--no-settle",
    "--substeps",
    "--image-size",
];

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/goldens/press-button.scene")
}

fn pwf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwf"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("PWF_CRASH_AFTER_STEP")
        .output()
        .expect("pwf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

/// Copies the press-button fixture into `dir` and returns the scene name.
fn stage_fixture(dir: &Path) -> &'static str {
    let src = fixture();
    std::fs::copy(&src, dir.join("press-button.scene")).unwrap();
    std::fs::copy(src.with_file_name("press-button.splats.ply"), dir.join("press-button.splats.ply")).unwrap();
    "press-button.scene"
}

fn plan_press(dir: &Path, extra: &[&str]) -> Output {
    let scene = stage_fixture(dir);
    let mut args = vec!["plan", "--scene", scene, "--critic", "oracle", "--seed", "7", "--out", "ep.trace.jsonl"];
    args.extend_from_slice(extra);
    pwf(&args, dir)
}

#[test]
fn help_lists_every_command_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = pwf(&["--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for c in COMMANDS {
        assert!(text.contains(c), "top-level help lacks {c}");
    }
    let plan = stdout(&pwf(&["plan", "--help"], dir.path()));
    for f in PLAN_FLAGS {
        assert!(plan.contains(f), "plan help lacks {f}");
    }
    let render = stdout(&pwf(&["render", "--help"], dir.path()));
    for f in ["--scene", "--view", "--out", "--size", "--depth-out"] {
        assert!(render.contains(f), "render help lacks {f}");
    }
}

#[test]
fn usage_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["plan"], &["plan", "--scene", "x", "--critic", "psychic"]] {
        let out = pwf(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&out)["error"]["code"], "USAGE");
    }
}

#[test]
fn validate_accepts_the_fixture_silently() {
    let dir = tempfile::tempdir().unwrap();
    let out = pwf(&["validate", "--scene", fixture().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
}

#[test]
fn validate_reports_bad_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pwf(&["validate", "--scene", "missing.scene"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["code"], "IO_ERROR");

    std::fs::write(dir.path().join("broken.scene"), "{\"bodies\": 3}").unwrap();
    let out = pwf(&["validate", "--scene", "broken.scene"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["code"], "SCENE_PARSE_ERROR");
}

#[test]
fn oracle_plan_on_the_fixture_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = plan_press(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    let summary: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(summary["status"], "SUCCESS");
    assert!(summary["steps"].as_u64().unwrap() >= 1);
    assert!(summary["wall_time_s"].is_number());
    assert_eq!(summary["critic_queries"].as_u64().unwrap(), 54 * summary["steps"].as_u64().unwrap());
    let trace = EpisodeTrace::read(&dir.path().join("ep.trace.jsonl")).unwrap();
    assert_eq!(trace.header.config.planner.episode_seed, 7);
    assert_eq!(trace.steps.len() as u64, summary["steps"].as_u64().unwrap());
}

#[test]
fn indivisible_samples_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = plan_press(dir.path(), &["--samples", "91", "--group-size", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["code"], "INVALID_CONFIG");
    assert!(err["error"]["message"].as_str().unwrap().contains("divisible"));
    assert!(!dir.path().join("ep.trace.jsonl").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[planner]\nn_samples = 10\ngroup_size = 5\nstep_budget = 1\nuse_views = true\n\n[sim]\nsubsteps = 8\n\n[render]\nimage_size = 40\n",
    )
    .unwrap();
    let out = plan_press(dir.path(), &["--config", "run.toml", "--samples", "20", "--no-views", "--substeps", "12"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let c = EpisodeTrace::read(&dir.path().join("ep.trace.jsonl")).unwrap().header.config;
    assert_eq!(c.planner.n_samples, 20);
    assert_eq!(c.planner.group_size, 5);
    assert_eq!(c.planner.step_budget, 1);
    assert!(!c.planner.use_views);
    assert_eq!(c.sim.substeps, 12);
    assert_eq!(c.render.image_size, 40);
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[planner]\nsamples = 90\n").unwrap();
    let out = plan_press(dir.path(), &["--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["code"], "INVALID_CONFIG");
}

#[test]
fn gen_scene_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.scene", "b.scene"] {
        let o = pwf(&["gen-scene", "--template", "pick-place", "--seed", "4", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    let (a, b) = (read("a.scene"), read("b.scene"));
    let sa = String::from_utf8(a).unwrap().replace("a.splats.ply", "");
    let sb = String::from_utf8(b).unwrap().replace("b.splats.ply", "");
    assert_eq!(sa, sb);
    assert_eq!(read("a.splats.ply"), read("b.splats.ply"));
    assert_eq!(pwf(&["validate", "--scene", "a.scene"], dir.path()).status.code(), Some(0));

    let o = pwf(&["gen-scene", "--template", "juggle", "--out", "c.scene"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "UNKNOWN_TEMPLATE");
}

#[test]
fn gen_scene_matches_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwf(&["gen-scene", "--template", "press", "--seed", "0", "--out", "press-button.scene"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("press-button.scene")).unwrap(), std::fs::read(fixture()).unwrap());
}

#[test]
fn crash_after_step_leaves_a_readable_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let scene = stage_fixture(dir.path());
    for k in [1usize, 2] {
        let trace = format!("crash{k}.trace.jsonl");
        let out = Command::new(env!("CARGO_BIN_EXE_pwf"))
            .args(["plan", "--scene", scene, "--critic", "random", "--steps", "5", "--out", &trace])
            .current_dir(dir.path())
            .env("PWF_CRASH_AFTER_STEP", k.to_string())
            .output()
            .unwrap();
        assert!(!out.status.success());
        assert!(out.stdout.is_empty());
        let t = EpisodeTrace::read(&dir.path().join(&trace)).unwrap();
        assert_eq!(t.steps.len(), k);
        assert!(t.terminal.is_none());
    }
}

#[test]
fn replay_lint_and_frames_on_a_recorded_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(plan_press(dir.path(), &[]).status.code(), Some(0));
    let d = dir.path();

    let out = pwf(&["replay", "--trace", "ep.trace.jsonl", "--scene", "press-button.scene"], d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = pwf(&["lint", "--trace", "ep.trace.jsonl"], d);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    let out = pwf(&["dump-frames", "--trace", "ep.trace.jsonl", "--scene", "press-button.scene", "--out", "frames"], d);
    assert_eq!(out.status.code(), Some(0));
    let trace = EpisodeTrace::read(&d.join("ep.trace.jsonl")).unwrap();
    let frames = std::fs::read_dir(d.join("frames")).unwrap().count();
    assert_eq!(frames, trace.steps.len());

    let mut tampered = trace.clone();
    tampered.steps[0].plan.chosen_action.position.x += 0.05;
    tampered.write(&d.join("bad.trace.jsonl")).unwrap();
    let out = pwf(&["replay", "--trace", "bad.trace.jsonl", "--scene", "press-button.scene"], d);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["code"], "DIVERGENCE");

    tampered.steps[0].plan.critic_queries += 1;
    tampered.write(&d.join("bad.trace.jsonl")).unwrap();
    let out = pwf(&["lint", "--trace", "bad.trace.jsonl"], d);
    assert_eq!(out.status.code(), Some(1));
    let first: Value = serde_json::from_str(stdout(&out).lines().next().unwrap()).unwrap();
    assert_eq!(first["rule"], "query-count");
}

#[test]
fn render_writes_png_and_depth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = stage_fixture(dir.path());
    let out = pwf(
        &["render", "--scene", scene, "--view", "top-down", "--out", "td.png", "--size", "48", "--depth-out", "td.pfm"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let img = RgbImage::from_png(&std::fs::read(dir.path().join("td.png")).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (48, 48));
    let pfm = std::fs::read(dir.path().join("td.pfm")).unwrap();
    assert!(pfm.starts_with(b"Pf\n48 48\n"));
}

#[test]
fn remote_plan_against_the_stub_server() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = stage_fixture(d);
    let plan = "Plan:\n1. move above the button\n2. press down\nfingers: no\nrotation: no";
    let script = serde_json::json!({
        "replies": [plan, "Current subtask: 0", "ANSWER: front"],
        "default": "ANSWER: 0",
    });
    std::fs::write(d.join("script.json"), script.to_string()).unwrap();
    let mut server = Command::new(env!("CARGO_BIN_EXE_pwf"))
        .args(["stub-server", "--port", "0", "--script", "script.json"])
        .current_dir(d)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = serde_json::from_str::<Value>(&line).unwrap()["url"].as_str().unwrap().to_string();

    let out = pwf(
        &[
            "plan", "--scene", scene, "--critic", "remote", "--endpoint", &url, "--model", "stub", "--steps", "1",
            "--samples", "10", "--iters", "1", "--image-size", "32", "--out", "remote.trace.jsonl",
        ],
        d,
    );
    server.kill().unwrap();
    server.wait().unwrap();
    let summary: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["steps"], 1);
    let trace = EpisodeTrace::read(&d.join("remote.trace.jsonl")).unwrap();
    assert_eq!(trace.steps[0].plan.elites[0], vec![0, 5]);
    assert!(!trace.steps[0].plan.exchanges.is_empty());
}
