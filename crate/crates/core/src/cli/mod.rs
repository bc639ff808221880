//! Command-line entry point.
//!
//! Flags win over `SEMLAND_*` environment variables, which win over values
//! in the scenario file. Exit codes: 0 ok, 2 usage or invalid input,
//! 3 infeasible scenario or no path, 4 I/O.

pub mod plot;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::search::{plan_request, PlanRequest, SearchError};
use crate::semantics::{
    default_entries, index, kb::load_entries, retrieve, KnowledgeBase, RemoteConfig, SemanticsError,
};
use crate::sim::{
    builtin, metrics_csv, run_experiment, run_trial, write_trace, BackendKind, Pipeline, Scenario,
    SimError, TrialRun, Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Io(m) => m,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ScenarioInfeasible(_) => CliError::Infeasible(e.to_string()),
            SimError::Io(_) => CliError::Io(e.to_string()),
            SimError::InvalidScenario(_) | SimError::MalformedTrace(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<SemanticsError> for CliError {
    fn from(e: SemanticsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "semland",
    version,
    about = "Semantics-aware UAV landing planner and simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan a reference trajectory from a JSON request.
    Plan {
        /// Request JSON with start, goal, corridor, unsafe_regions and config; `-` reads stdin.
        #[arg(long)]
        input: PathBuf,
        /// Write the trajectory here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one seeded trial and print its result as JSON.
    Trial {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = VariantArg::Full)]
        variant: VariantArg,
    },
    /// Run Baseline, NoisyReasoner and Full over consecutive seeds and print the metrics CSV.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, env = "SEMLAND_TRIALS", default_value_t = 50)]
        trials: usize,
        /// Worker threads for independent trials.
        #[arg(long, env = "SEMLAND_JOBS", default_value_t = 1)]
        jobs: usize,
    },
    /// Inspect the knowledge base.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Render a trace as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scenario whose target is drawn; defaults to the final reference point.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Index the knowledge base and print a summary.
    Index {
        #[arg(long, env = "SEMLAND_KB")]
        kb: Option<PathBuf>,
    },
    /// Rank entries for a caption.
    Query {
        #[arg(long, env = "SEMLAND_KB")]
        kb: Option<PathBuf>,
        #[arg(long)]
        caption: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario (open_field, urban, grassland).
    #[arg(long, env = "SEMLAND_SCENARIO")]
    scenario: String,
    /// Knowledge base JSON; the bundled one when absent.
    #[arg(long, env = "SEMLAND_KB")]
    kb: Option<PathBuf>,
    #[arg(long, value_enum, env = "SEMLAND_BACKEND", default_value_t = BackendArg::Deterministic)]
    backend: BackendArg,
    /// Remote endpoint settings (JSON); SEMLAND_LLM_URL and SEMLAND_LLM_MODEL override it.
    #[arg(long, env = "SEMLAND_LLM_CONFIG")]
    llm_config: Option<PathBuf>,
    /// Perception latency; the scenario's when absent.
    #[arg(long, env = "SEMLAND_LATENCY_MS")]
    latency_ms: Option<f64>,
    /// Seed; the scenario's when absent.
    #[arg(long, env = "SEMLAND_SEED")]
    seed: Option<u64>,
    /// Directory for results, traces and plots.
    #[arg(long, env = "SEMLAND_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Also write an SVG next to every trace.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Deterministic,
    Remote,
    Noisy,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Baseline,
    NoisyReasoner,
    Full,
}

/// Parse `argv` (program name first), run the subcommand and return the
/// exit code. Diagnostics go to stderr as one line.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("semland: {}", e.message().lines().next().unwrap_or(""));
            e.code()
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Plan { input, out } => cmd_plan(&input, out.as_deref()),
        Command::Trial { run, variant } => cmd_trial(&run, variant),
        Command::Experiment { run, trials, jobs } => cmd_experiment(&run, trials, jobs),
        Command::Kb { command } => match command {
            KbCommand::Index { kb } => cmd_kb_index(kb.as_deref()),
            KbCommand::Query { kb, caption, k } => cmd_kb_query(kb.as_deref(), &caption, k),
        },
        Command::Plot {
            trace,
            out,
            scenario,
        } => {
            let target = scenario
                .map(|s| load_scenario(&s))
                .transpose()?
                .map(|s| s.target());
            plot::plot_trace(&trace, &out, target)?;
            Ok(String::new())
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// A file path, or a bundled scenario name when no such file exists.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = builtin(arg) {
            return Ok(s);
        }
    }
    Ok(Scenario::from_json(&read_file(path)?)?)
}

pub fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase, CliError> {
    let entries = match path {
        Some(p) => load_entries(&read_file(p)?)?,
        None => default_entries(),
    };
    Ok(index(entries)?)
}

fn remote_config(path: Option<&Path>) -> Result<RemoteConfig, CliError> {
    let mut cfg = match path {
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => RemoteConfig::default(),
    };
    let env = RemoteConfig::from_env();
    if std::env::var_os("SEMLAND_LLM_URL").is_some() {
        cfg.url = env.url;
    }
    if std::env::var_os("SEMLAND_LLM_MODEL").is_some() {
        cfg.model = env.model;
    }
    if env.api_key.is_some() {
        cfg.api_key = env.api_key;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

struct Setup {
    scenario: Scenario,
    kb: KnowledgeBase,
    backend: BackendKind,
    latency: Option<f64>,
}

fn setup(run: &RunArgs) -> Result<Setup, CliError> {
    let mut scenario = load_scenario(&run.scenario)?;
    if let Some(seed) = run.seed {
        scenario.seed = seed;
    }
    let latency = match run.latency_ms {
        Some(ms) if !(ms >= 0.0 && ms.is_finite()) => {
            return Err(CliError::Usage(
                "latency_ms must be a non-negative number".into(),
            ))
        }
        Some(ms) => Some(ms / 1000.0),
        None => None,
    };
    let backend = match run.backend {
        BackendArg::Deterministic => BackendKind::Deterministic,
        BackendArg::Noisy => BackendKind::Noisy,
        BackendArg::Malformed => BackendKind::Malformed,
        BackendArg::Remote => BackendKind::Remote(remote_config(run.llm_config.as_deref())?),
    };
    Ok(Setup {
        scenario,
        kb: load_kb(run.kb.as_deref())?,
        backend,
        latency,
    })
}

fn pipeline(variant: Variant, s: &Setup) -> Pipeline {
    let mut p = Pipeline::new(variant);
    p.backend = s.backend.clone();
    p.latency = s.latency;
    p
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Trace (and optional SVG) for `run`, recorded relative to `dir`.
fn save_run(
    dir: &Path,
    stem: &str,
    run: &mut TrialRun,
    scenario: &Scenario,
    plot: bool,
) -> Result<(), CliError> {
    let name = format!("{stem}.jsonl");
    write_trace(&dir.join(&name), &run.trace)?;
    if plot {
        write_file(
            &dir.join(format!("{stem}.svg")),
            &plot::render_svg(&run.trace, Some(scenario.target())),
        )?;
    }
    run.result.trace_path = Some(name);
    Ok(())
}

fn cmd_plan(input: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let text = if input == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
        s
    } else {
        read_file(input)?
    };
    let req: PlanRequest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("plan request: {e}")))?;
    let traj = to_json(&plan_request(&req)?);
    match out {
        Some(p) => write_file(p, &traj).map(|_| String::new()),
        None => Ok(traj),
    }
}

fn cmd_trial(run: &RunArgs, variant: VariantArg) -> Result<String, CliError> {
    let s = setup(run)?;
    let variant = match variant {
        VariantArg::Baseline => Variant::Baseline,
        VariantArg::NoisyReasoner => Variant::NoisyReasoner,
        VariantArg::Full => Variant::Full,
    };
    let mut trial = run_trial(&s.scenario, &pipeline(variant, &s), &s.kb)?;
    if let Some(dir) = &run.out_dir {
        create_dir(dir)?;
        save_run(dir, "trace", &mut trial, &s.scenario, run.plot)?;
        write_file(&dir.join("result.json"), &to_json(&trial.result))?;
    }
    Ok(to_json(&trial.result))
}

fn cmd_experiment(run: &RunArgs, trials: usize, jobs: usize) -> Result<String, CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let s = setup(run)?;
    let pipelines: Vec<Pipeline> = [Variant::Baseline, Variant::NoisyReasoner, Variant::Full]
        .into_iter()
        .map(|v| pipeline(v, &s))
        .collect();
    let trace_dir = run.out_dir.as_ref().map(|d| d.join("traces"));
    if let Some(d) = &trace_dir {
        create_dir(d)?;
    }
    let report = run_experiment(
        &s.scenario,
        trials,
        s.scenario.seed,
        &pipelines,
        &s.kb,
        jobs,
        |p, r| {
            if let Some(d) = &trace_dir {
                let stem = format!("{}_{:04}", p.variant.label(), r.result.seed);
                save_run(d, &stem, r, &s.scenario, run.plot)
                    .map_err(|e| SimError::Io(e.message().to_string()))?;
                r.result.trace_path = r.result.trace_path.take().map(|n| format!("traces/{n}"));
            }
            Ok(())
        },
    )?;
    let csv = metrics_csv(&report.rows);
    if let Some(dir) = &run.out_dir {
        write_file(&dir.join("metrics.csv"), &csv)?;
        write_file(&dir.join("metrics.json"), &to_json(&report))?;
    }
    Ok(csv)
}

fn cmd_kb_index(path: Option<&Path>) -> Result<String, CliError> {
    let kb = load_kb(path)?;
    let classes: Vec<&str> = kb.entries().iter().map(|e| e.class_name.as_str()).collect();
    Ok(to_json(&serde_json::json!({
        "entries": kb.entries().len(),
        "chunks": kb.chunk_count(),
        "alpha": kb.alpha(),
        "classes": classes,
    })))
}

fn cmd_kb_query(path: Option<&Path>, caption: &str, k: usize) -> Result<String, CliError> {
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let kb = load_kb(path)?;
    let mut out = String::new();
    for (rank, hit) in retrieve(&kb, caption, k).iter().enumerate() {
        let e = &kb.entries()[hit.id];
        let _ = writeln!(out, "{}\t{}\t{:.4}", rank + 1, e.class_name, hit.score);
    }
    Ok(out)
}
