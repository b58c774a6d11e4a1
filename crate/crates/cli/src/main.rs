//! `pwf`: validate and generate scenes, plan episodes in the twin, replay
//! and lint traces, render views, and serve a scripted critic.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pwf_core::critic::stub::{StubScript, StubServer};
use pwf_core::critic::{Critic, OracleScoring};
use pwf_core::planner::{plan_episode, CriticName, EpisodeOptions, EpisodeSink, RunConfig};
use pwf_core::render::{render_view, write_pfm, ViewName};
use pwf_core::sim::GripperState;
use pwf_core::templates::{generate, write_generated};
use pwf_core::trace::{
    dump_frames, lint, replay_file, EpisodeTrace, StepRecord, TerminalRecord, TerminalStatus, TraceHeader,
    TraceWriter,
};
use pwf_core::twin::{load_scene, scene_content_hash};

/// Crash injection for tests: abort the process right after this many
/// steps have been written to the trace.
const CRASH_AFTER_STEP_ENV: &str = "PWF_CRASH_AFTER_STEP";

#[derive(Parser, Debug)]
#[command(name = "pwf", version, about = "Plan gripper actions in a digital twin with a critic in the loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a scene file (and its splat PLY); prints nothing when valid.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Write a seeded fixture scene (reach, press, pick-place, push-region, pair-up).
    GenScene {
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene file to write; splats go to `<stem>.splats.ply` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one planning episode and record its trace.
    Plan(Box<PlanArgs>),
    /// Re-execute a trace's actions and check every recorded outcome.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Render one camera view of a scene to PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = ViewArg::Front)]
        view: ViewArg,
        #[arg(long)]
        out: PathBuf,
        /// Image width and height in pixels.
        #[arg(long)]
        size: Option<u32>,
        /// Also write the depth buffer as PFM.
        #[arg(long)]
        depth_out: Option<PathBuf>,
    },
    /// Serve scripted chat-completions replies on 127.0.0.1.
    StubServer {
        #[arg(long, default_value_t = 8089)]
        port: u16,
        /// JSON reply script: an array of replies or {"replies": [...], "default": ...}.
        #[arg(long)]
        script: PathBuf,
    },
    /// Write the chosen-view image after every step of a trace.
    DumpFrames {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check planner invariants on a trace file.
    Lint {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ViewArg {
    Front,
    Left,
    Right,
    TopDown,
}

impl From<ViewArg> for ViewName {
    fn from(v: ViewArg) -> Self {
        match v {
            ViewArg::Front => ViewName::Front,
            ViewArg::Left => ViewName::Left,
            ViewArg::Right => ViewName::Right,
            ViewArg::TopDown => ViewName::TopDown,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriticArg {
    Oracle,
    Random,
    Remote,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoringArg {
    DistanceToGoal,
    SuccessPredicateProgress,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    scene: PathBuf,
    /// TOML run config with [planner], [sim], [critic] and [render] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file to write.
    #[arg(long, default_value = "episode.trace.jsonl")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// One flag per run-config key; a flag given on the command line wins over
/// the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// critic.kind
    #[arg(long, value_enum)]
    critic: Option<CriticArg>,
    /// critic.endpoint
    #[arg(long)]
    endpoint: Option<String>,
    /// critic.model
    #[arg(long)]
    model: Option<String>,
    /// critic.scoring
    #[arg(long, value_enum)]
    scoring: Option<ScoringArg>,
    /// critic.seed
    #[arg(long)]
    critic_seed: Option<u64>,
    /// critic.retries
    #[arg(long)]
    retries: Option<u32>,
    /// critic.backoff_ms
    #[arg(long)]
    backoff_ms: Option<u64>,
    /// critic.timeout_s
    #[arg(long)]
    timeout: Option<f64>,
    /// planner.episode_seed
    #[arg(long)]
    seed: Option<u64>,
    /// planner.use_views = false
    #[arg(long)]
    no_views: bool,
    /// planner.use_subtasks = false
    #[arg(long)]
    no_subtasks: bool,
    /// planner.use_cem = false
    #[arg(long)]
    no_cem: bool,
    /// planner.step_budget
    #[arg(long)]
    steps: Option<usize>,
    /// planner.time_budget_s
    #[arg(long)]
    time_budget: Option<f64>,
    /// planner.n_samples
    #[arg(long)]
    samples: Option<usize>,
    /// planner.group_size
    #[arg(long)]
    group_size: Option<usize>,
    /// planner.iterations
    #[arg(long)]
    iters: Option<usize>,
    /// planner.std_floor, 7 comma-separated values
    #[arg(long, value_delimiter = ',', value_name = "V0,..,V6")]
    std_floor: Option<Vec<f64>>,
    /// planner.init_std, 7 comma-separated values
    #[arg(long, value_delimiter = ',', value_name = "V0,..,V6")]
    init_std: Option<Vec<f64>>,
    /// planner.critic_parallelism
    #[arg(long)]
    critic_parallelism: Option<usize>,
    /// sim.grasp_radius
    #[arg(long)]
    grasp_radius: Option<f64>,
    /// sim.push_enabled = false
    #[arg(long)]
    no_push: bool,
    /// sim.max_penetration
    #[arg(long)]
    max_penetration: Option<f64>,
    /// sim.settle_enabled = false
    #[arg(long)]
    no_settle: bool,
    /// sim.substeps
    #[arg(long)]
    substeps: Option<u32>,
    /// render.image_size
    #[arg(long)]
    image_size: Option<u32>,
}

fn seven(flag: &str, v: &[f64]) -> Result<[f64; 7], Failure> {
    <[f64; 7]>::try_from(v).map_err(|_| Failure::usage("USAGE", format!("{flag} takes 7 comma-separated values, got {}", v.len())))
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) -> Result<(), Failure> {
        if let Some(k) = self.critic {
            c.critic.kind = match k {
                CriticArg::Oracle => CriticName::Oracle,
                CriticArg::Random => CriticName::Random,
                CriticArg::Remote => CriticName::Remote,
            };
        }
        if let Some(v) = &self.endpoint {
            c.critic.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            c.critic.model = v.clone();
        }
        if let Some(s) = self.scoring {
            c.critic.scoring = match s {
                ScoringArg::DistanceToGoal => OracleScoring::DistanceToGoal,
                ScoringArg::SuccessPredicateProgress => OracleScoring::SuccessPredicateProgress,
            };
        }
        let p = &mut c.planner;
        macro_rules! set {
            ($($flag:ident => $target:expr),* $(,)?) => {$(
                if let Some(v) = self.$flag.clone() {
                    $target = v;
                }
            )*};
        }
        set!(
            critic_seed => c.critic.seed,
            retries => c.critic.retries,
            backoff_ms => c.critic.backoff_ms,
            timeout => c.critic.timeout_s,
            seed => p.episode_seed,
            steps => p.step_budget,
            time_budget => p.time_budget_s,
            samples => p.n_samples,
            group_size => p.group_size,
            iters => p.iterations,
            critic_parallelism => p.critic_parallelism,
            grasp_radius => c.sim.grasp_radius,
            max_penetration => c.sim.max_penetration,
            substeps => c.sim.substeps,
            image_size => c.render.image_size,
        );
        if let Some(v) = &self.std_floor {
            p.std_floor = seven("--std-floor", v)?;
        }
        if let Some(v) = &self.init_std {
            p.init_std = seven("--init-std", v)?;
        }
        if self.no_views {
            p.use_views = false;
        }
        if self.no_subtasks {
            p.use_subtasks = false;
        }
        if self.no_cem {
            p.use_cem = false;
        }
        if self.no_push {
            c.sim.push_enabled = false;
        }
        if self.no_settle {
            c.sim.settle_enabled = false;
        }
        Ok(())
    }
}

/// A failure reported as JSON on stderr; usage errors exit 2, everything
/// else 1.
struct Failure {
    usage: bool,
    code: String,
    message: String,
}

impl Failure {
    fn new(code: &str, message: impl ToString) -> Self {
        Self {
            usage: false,
            code: code.into(),
            message: message.to_string(),
        }
    }

    fn usage(code: &str, message: impl ToString) -> Self {
        Self {
            usage: true,
            ..Self::new(code, message)
        }
    }
}

type CliResult = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage("INVALID_CONFIG", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::usage("INVALID_CONFIG", format!("{}: {e}", path.display())))
}

/// Forwards to the trace writer and aborts the process after `limit` steps.
struct CrashAfter<'a> {
    inner: &'a mut TraceWriter,
    limit: Option<usize>,
}

impl EpisodeSink for CrashAfter<'_> {
    fn header(&mut self, header: &TraceHeader) -> Result<(), String> {
        self.inner.header(header)
    }

    fn step(&mut self, record: &StepRecord) -> Result<(), String> {
        self.inner.step(record)?;
        if self.limit.is_some_and(|k| self.inner.steps() >= k) {
            std::process::abort();
        }
        Ok(())
    }

    fn terminal(&mut self, terminal: &TerminalRecord) -> Result<(), String> {
        self.inner.terminal(terminal)
    }
}

fn plan(args: &PlanArgs) -> CliResult {
    let mut config = load_config(args.config.as_deref())?;
    args.overrides.apply(&mut config)?;
    config.validate().map_err(|e| Failure::usage(e.code(), e))?;
    let scene = load_scene(&args.scene).map_err(|e| Failure::new(e.code(), e))?;
    let hash = scene_content_hash(&args.scene).map_err(|e| Failure::new(e.code(), e))?;
    let critic = Critic::new(config.critic.to_kind()).map_err(|e| Failure::usage(e.code(), e))?;
    let mut writer = TraceWriter::create(&args.out).map_err(|e| Failure::new(e.code(), e))?;
    let limit = std::env::var(CRASH_AFTER_STEP_ENV).ok().and_then(|v| v.trim().parse().ok());
    let mut sink = CrashAfter {
        inner: &mut writer,
        limit,
    };
    let options = EpisodeOptions::now(args.scene.display().to_string(), hash);
    let summary = plan_episode(&scene, &critic, &config, &options, &mut sink).map_err(|e| Failure::new(e.code(), e))?;
    println!(
        "{}",
        json!({
            "status": summary.status,
            "steps": summary.steps,
            "wall_time_s": summary.wall_time_s,
            "critic_queries": summary.critic_queries,
            "simulations": summary.simulations,
            "trace": args.out.display().to_string(),
        })
    );
    if summary.status == TerminalStatus::Success {
        Ok(())
    } else {
        Err(Failure::new(
            summary.status.as_str(),
            summary.error.unwrap_or_else(|| summary.status.to_string()),
        ))
    }
}

fn read_trace(path: &Path) -> Result<EpisodeTrace, Failure> {
    EpisodeTrace::read(path).map_err(|e| Failure::new(e.code(), e))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Validate { scene } => {
            load_scene(&scene).map_err(|e| Failure::new(e.code(), e))?;
        }
        Command::GenScene { template, seed, out } => {
            let scene = generate(&template, seed).map_err(|e| Failure::usage(e.code(), e))?;
            write_generated(&scene, &out).map_err(|e| Failure::new(e.code(), e))?;
        }
        Command::Plan(args) => plan(&args)?,
        Command::Replay { trace, scene } => {
            let t = read_trace(&trace)?;
            replay_file(&t, &scene).map_err(|e| Failure::new(e.code(), e))?;
            println!("{}", json!({"steps": t.steps.len(), "divergence": null}));
        }
        Command::Render {
            scene,
            view,
            out,
            size,
            depth_out,
        } => {
            let s = load_scene(&scene).map_err(|e| Failure::new(e.code(), e))?;
            let rig = match size {
                Some(n) if n < 1 => return Err(Failure::usage("INVALID_ARGUMENT", "--size must be positive")),
                Some(n) => s.cameras.resized(n, n),
                None => s.cameras.clone(),
            };
            let image = render_view(&s, &GripperState::initial(&s), rig.get(view.into()));
            image.color.write_png(&out).map_err(|e| Failure::new("IO_ERROR", e))?;
            if let Some(d) = depth_out {
                write_pfm(&d, image.width(), image.height(), &image.depth).map_err(|e| Failure::new("IO_ERROR", e))?;
            }
        }
        Command::StubServer { port, script } => {
            let script = StubScript::load(&script).map_err(|e| Failure::usage("INVALID_SCRIPT", e))?;
            let server = StubServer::start(port, script).map_err(|e| Failure::new("IO_ERROR", e))?;
            println!("{}", json!({"url": server.url()}));
            server.join();
        }
        Command::DumpFrames { trace, scene, out } => {
            let t = read_trace(&trace)?;
            let s = load_scene(&scene).map_err(|e| Failure::new(e.code(), e))?;
            let n = dump_frames(&t, &s, &out).map_err(|e| Failure::new(e.code(), e))?;
            println!("{}", json!({"frames": n}));
        }
        Command::Lint { trace } => {
            let t = read_trace(&trace)?;
            let violations = lint(&t);
            for v in &violations {
                println!("{}", serde_json::to_string(v).expect("violation serializes"));
            }
            if !violations.is_empty() {
                return Err(Failure::new("LINT_VIOLATIONS", format!("{} violation(s)", violations.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let message = e.to_string();
            eprintln!("{}", json!({"error": {"code": "USAGE", "message": message.trim_end()}}));
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({"error": {"code": f.code, "message": f.message}}));
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
