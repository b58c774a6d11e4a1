#![allow(dead_code)]

use std::path::PathBuf;

use pwf_core::critic::stub::{StubReply, StubScript, StubServer};
use pwf_core::critic::{Critic, CriticKind, CriticQuery, Exchange, RemoteConfig, SubtaskPlan};
use pwf_core::render::{default_rig, CameraRig};
use pwf_core::{Aabb, RgbImage, Vec3, ViewName};

pub fn goldens_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("goldens")
}

pub fn updating_goldens() -> bool {
    std::env::var_os("UPDATE_GOLDENS").is_some_and(|v| !v.is_empty() && v != "0")
}

/// Compares `actual` with the golden file `rel`, or rewrites the file when
/// `UPDATE_GOLDENS` is set.
pub fn check_golden(rel: &str, actual: &[u8]) -> Result<(), String> {
    let path = goldens_dir().join(rel);
    if updating_goldens() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("golden {}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the recorded output", path.display()))
    }
}

/// Recorded request body, normalized to pretty JSON with a trailing newline.
pub fn payload(body: &str) -> Vec<u8> {
    let v: serde_json::Value = serde_json::from_str(body).expect("request body is JSON");
    let mut s = serde_json::to_string_pretty(&v).unwrap();
    s.push('\n');
    s.into_bytes()
}

pub fn test_images(n: usize) -> Vec<RgbImage> {
    (0..n)
        .map(|i| RgbImage::filled(8, 8, [40 * i as u8, 200 - 30 * i as u8, 90]))
        .collect()
}

pub fn test_rig() -> CameraRig {
    let ws = Aabb::new(Vec3::new(-0.3, -0.3, 0.0), Vec3::new(0.3, 0.3, 0.4));
    default_rig(&ws, 64, 64).unwrap()
}

pub fn remote(server: &StubServer, retries: u32) -> Critic {
    let mut cfg = RemoteConfig::new(server.url(), "stub-model");
    cfg.retries = retries;
    cfg.backoff_ms = 1;
    cfg.timeout_s = 10.0;
    Critic::new(CriticKind::Remote(cfg)).unwrap()
}

fn server(replies: Vec<StubReply>) -> StubServer {
    StubServer::start(
        0,
        StubScript {
            replies,
            default: None,
        },
    )
    .expect("stub server starts")
}

fn text(s: &str) -> StubReply {
    StubReply::Content(s.to_string())
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const INSTRUCTION: &str = "Press the button.";

fn plan() -> SubtaskPlan {
    SubtaskPlan {
        subtasks: vec!["move above button".into(), "press down".into()],
        needs_fingers: false,
        needs_rotation: false,
    }
}

fn select_best(replies: Vec<StubReply>, retries: u32) -> (StubServer, Result<usize, String>, Vec<Exchange>) {
    let s = server(replies);
    let critic = remote(&s, retries);
    let query = CriticQuery::with_images("press down", "Planning step 0.", test_images(3));
    let mut log = vec![];
    let r = critic
        .select_best(INSTRUCTION, &query, None, &[0, 0, 0, 0], &mut log)
        .map(|v| v.chosen_index)
        .map_err(|e| e.code().to_string());
    (s, r, log)
}

fn golden_request(s: &StubServer, index: usize, name: &str) -> Result<(), String> {
    let reqs = s.requests();
    let req = reqs.get(index).ok_or_else(|| format!("request {index} missing"))?;
    ensure(req.path == "/v1/chat/completions", format!("path {}", req.path))?;
    check_golden(&format!("requests/{name}.json"), &payload(&req.body))
}

fn sc_select_best() -> Result<(), String> {
    let (s, r, log) = select_best(vec![text("Image 2 shows the gripper on the button.\nBest outcome: 2")], 3);
    ensure(r == Ok(2), format!("chose {r:?}"))?;
    ensure(log.len() == 1 && log[0].error.is_none(), "one clean exchange")?;
    let body: serde_json::Value = serde_json::from_str(&s.requests()[0].body).unwrap();
    ensure(body["temperature"] == 0, "temperature 0")?;
    ensure(body["model"] == "stub-model", "model name")?;
    golden_request(&s, 0, "select_best")
}

fn sc_malformed_retry() -> Result<(), String> {
    let (s, r, log) = select_best(vec![text("I cannot tell."), text("ANSWER: 1")], 3);
    ensure(r == Ok(1), format!("chose {r:?}"))?;
    ensure(s.requests().len() == 2, "two requests")?;
    ensure(log.len() == 2 && log[0].error.is_some() && log[1].error.is_none(), "exchange log")?;
    ensure(s.requests()[0].body == s.requests()[1].body, "retry resends the same request")
}

fn sc_out_of_range_retry() -> Result<(), String> {
    let (_, r, log) = select_best(vec![text("ANSWER: 7"), text("ANSWER: 0")], 3);
    ensure(r == Ok(0), format!("chose {r:?}"))?;
    ensure(log.len() == 2, "two exchanges")
}

fn sc_http_error_retry() -> Result<(), String> {
    let busy = StubReply::Raw {
        status: 503,
        body: "{\"error\":\"busy\"}".into(),
    };
    let (_, r, log) = select_best(vec![busy, text("ANSWER: 2")], 3);
    ensure(r == Ok(2), format!("chose {r:?}"))?;
    ensure(log[0].status == Some(503), "503 recorded")
}

fn sc_retries_exhausted() -> Result<(), String> {
    let (s, r, log) = select_best(vec![text("hmm"), text("no"), text("maybe")], 2);
    ensure(r == Err("REMOTE_CRITIC_FAILED".into()), format!("got {r:?}"))?;
    ensure(s.requests().len() == 3 && log.len() == 3, "1 + 2 retries")
}

fn sc_decompose() -> Result<(), String> {
    let s = server(vec![text(
        "Plan:\n1. move above the button\n2. press the button down\nfingers: no\nrotation: no",
    )]);
    let critic = remote(&s, 3);
    let mut log = vec![];
    let p = critic
        .decompose(INSTRUCTION, &test_images(4), None, &mut log)
        .map_err(|e| e.to_string())?;
    ensure(p.subtasks == ["move above the button", "press the button down"], format!("{p:?}"))?;
    ensure(!p.needs_fingers && !p.needs_rotation, "flags")?;
    golden_request(&s, 0, "decompose")
}

fn sc_select_active() -> Result<(), String> {
    let s = server(vec![text("The gripper is above the button.\nCurrent subtask: 1")]);
    let critic = remote(&s, 3);
    let mut log = vec![];
    let i = critic
        .select_active(INSTRUCTION, &test_images(4), &plan(), 0, &[], &mut log)
        .map_err(|e| e.to_string())?;
    ensure(i == 1, format!("active {i}"))?;
    golden_request(&s, 0, "select_active")
}

fn choose(replies: Vec<StubReply>, previous: Option<ViewName>) -> (StubServer, Result<(ViewName, bool), String>) {
    let s = server(replies);
    let critic = remote(&s, 3);
    let mut log = vec![];
    let r = critic
        .choose_view(
            &test_images(4),
            "press down",
            previous,
            &Vec3::new(0.1, 0.1, 0.1),
            &test_rig(),
            &[0, 0],
            &mut log,
        )
        .map(|c| (c.view, c.fallback))
        .map_err(|e| e.to_string());
    (s, r)
}

fn sc_choose_view() -> Result<(), String> {
    let (s, r) = choose(vec![text("The left camera shows the gap.\nANSWER: left")], None);
    ensure(r == Ok((ViewName::Left, false)), format!("{r:?}"))?;
    golden_request(&s, 0, "choose_view")
}

fn sc_choose_view_reprompt() -> Result<(), String> {
    let (s, r) = choose(vec![text("ANSWER: left"), text("ANSWER: top-down")], Some(ViewName::Left));
    ensure(r == Ok((ViewName::TopDown, false)), format!("{r:?}"))?;
    ensure(s.requests().len() == 2, "one reprompt")?;
    golden_request(&s, 1, "choose_view_reprompt")
}

fn sc_choose_view_fallback() -> Result<(), String> {
    let (s, r) = choose(vec![text("ANSWER: front"), text("front")], Some(ViewName::Front));
    ensure(r == Ok((ViewName::Left, true)), format!("{r:?}"))?;
    ensure(s.requests().len() == 2, "exactly one reprompt")
}

pub type Scenario = (&'static str, fn() -> Result<(), String>);

pub const REMOTE_SCENARIOS: [Scenario; 10] = [
    ("select_best", sc_select_best),
    ("malformed_reply_retry", sc_malformed_retry),
    ("out_of_range_retry", sc_out_of_range_retry),
    ("http_error_retry", sc_http_error_retry),
    ("retries_exhausted", sc_retries_exhausted),
    ("decompose", sc_decompose),
    ("select_active", sc_select_active),
    ("choose_view", sc_choose_view),
    ("choose_view_reprompt", sc_choose_view_reprompt),
    ("choose_view_fallback", sc_choose_view_fallback),
];

pub fn run_scenario(name: &str) -> Result<(), String> {
    let (_, f) = REMOTE_SCENARIOS.iter().find(|(n, _)| *n == name).expect("known scenario");
    f()
}
