mod common;

use common::run_scenario;
use pwf_core::critic::stub::{StubReply, StubScript, StubServer};
use pwf_core::critic::Critic;
use pwf_core::planner::{plan_episode, CriticName, EpisodeOptions, RunConfig};
use pwf_core::templates::generate;
use pwf_core::trace::{lint, TraceRecorder};
use pwf_core::TerminalStatus;

macro_rules! scenario {
    ($($name:ident),* $(,)?) => {$(
        #[test]
        fn $name() {
            if let Err(e) = run_scenario(stringify!($name)) {
                panic!("{e}");
            }
        }
    )*};
}

scenario!(
    select_best,
    malformed_reply_retry,
    out_of_range_retry,
    http_error_retry,
    retries_exhausted,
    decompose,
    select_active,
    choose_view,
    choose_view_reprompt,
    choose_view_fallback,
);

fn small_remote_config(url: String) -> RunConfig {
    let mut c = RunConfig::default();
    c.planner.n_samples = 10;
    c.planner.group_size = 5;
    c.planner.iterations = 2;
    c.planner.step_budget = 1;
    c.render.image_size = 32;
    c.critic.kind = CriticName::Remote;
    c.critic.endpoint = url;
    c.critic.model = "stub-model".into();
    c.critic.backoff_ms = 1;
    c
}

fn options() -> EpisodeOptions {
    EpisodeOptions {
        scene_path: "press.scene".into(),
        scene_hash: "0".into(),
        started_at_unix_s: 0,
    }
}

#[test]
fn remote_episode_records_every_exchange() {
    let script = StubScript {
        replies: vec![
            StubReply::Content("1. move above the button\n2. press down\nfingers: no\nrotation: no".into()),
            StubReply::Content("Current subtask: 0".into()),
            StubReply::Content("ANSWER: right".into()),
        ],
        default: Some(StubReply::Content("Best outcome: 3".into())),
    };
    let server = StubServer::start(0, script).unwrap();
    let config = small_remote_config(server.url());
    let critic = Critic::new(config.critic.to_kind()).unwrap();
    let scene = generate("press", 0).unwrap();
    let mut rec = TraceRecorder::new();
    let summary = plan_episode(&scene, &critic, &config, &options(), &mut rec).unwrap();
    let trace = rec.into_trace().unwrap();
    assert_eq!(summary.steps, 1);
    assert_eq!(summary.critic_queries, 4);
    assert_eq!(server.requests().len(), 1 + 1 + 1 + 4);
    let plan = trace.header.subtask_plan.as_ref().unwrap();
    assert_eq!(plan.subtasks.len(), 2);
    assert_eq!(trace.header.decompose_exchanges.len(), 1);
    let step = &trace.steps[0];
    assert_eq!(step.plan.chosen_view, pwf_core::ViewName::Right);
    assert!(step.plan.elites.iter().flatten().all(|e| e % 5 == 3));
    // select_active, choose_view and four select_best exchanges
    assert_eq!(step.plan.exchanges.len(), 6);
    assert!(lint(&trace).is_empty(), "{:?}", lint(&trace));
}

#[test]
fn unreachable_endpoint_aborts_the_episode() {
    let server = StubServer::start(
        0,
        StubScript {
            replies: vec![],
            default: Some(StubReply::Raw {
                status: 500,
                body: "{}".into(),
            }),
        },
    )
    .unwrap();
    let mut config = small_remote_config(server.url());
    config.critic.retries = 1;
    let critic = Critic::new(config.critic.to_kind()).unwrap();
    let scene = generate("press", 1).unwrap();
    let mut rec = TraceRecorder::new();
    let summary = plan_episode(&scene, &critic, &config, &options(), &mut rec).unwrap();
    assert_eq!(summary.status, TerminalStatus::AbortedCritic);
    assert_eq!(summary.steps, 0);
    let trace = rec.into_trace().unwrap();
    assert_eq!(trace.status(), Some(TerminalStatus::AbortedCritic));
    assert_eq!(trace.header.decompose_exchanges.len(), 2);
    assert!(summary.error.unwrap().contains("REMOTE_CRITIC_FAILED"));
}
