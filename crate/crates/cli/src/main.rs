mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use strot::backend::{BackendConfig, CompletionBackend, HttpBackend, Script, ScriptedBackend, Secret, API_KEY_ENV};
use strot::bench::{compute_metrics, load_dataset, run_suite, BenchSuite};
use strot::orchestrator::{replay, Mode, Outcome, SessionConfig, SessionTranscript};
use strot::plan::{render_schema_metadata, UserQuery};
use strot::profiler::{build_context, ProfilerConfig};
use strot::run_query;

use config::FileConfig;

const EXIT_MODEL_FAILURE: u8 = 1;
const EXIT_INFRASTRUCTURE: u8 = 2;

#[derive(Parser)]
#[command(name = "strot", version, about = "Plan, synthesize and run analyses over CSV files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileFormat {
    Json,
    Prompt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strot,
    OneShot,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strot => Mode::Strot,
            ModeArg::OneShot => Mode::OneShot,
        }
    }
}

#[derive(clap::Args)]
struct LiveArgs {
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// TOML settings file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the schema context for a CSV file.
    Profile {
        csv: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ProfileFormat::Json)]
        format: ProfileFormat,
    },
    /// Answer one question about a CSV file.
    Ask {
        csv: PathBuf,
        query: String,
        #[arg(long, value_enum, default_value_t = BackendKind::Http)]
        backend: BackendKind,
        /// Script file for the scripted backend.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Refine budget.
        #[arg(long = "T")]
        refine_budget: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Strot)]
        mode: ModeArg,
        /// Write the session transcript (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        live: LiveArgs,
    },
    /// Re-run a transcript's recorded completions and compare the results.
    Replay {
        transcript: PathBuf,
        /// Dataset to use instead of the one recorded in the transcript.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a benchmark suite and report success rates.
    Bench {
        suite: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        live: LiveArgs,
    },
}

fn session_config(file: &FileConfig) -> SessionConfig {
    let mut cfg = SessionConfig::default();
    if let Some(t) = file.refine_budget {
        cfg.refine_budget = t;
    }
    if let Some(k) = file.k {
        cfg.k = k;
    }
    if let Some(s) = file.seed {
        cfg.seed = s;
    }
    if let Some(t) = file.plan_temperature {
        cfg.policy.plan_temperature = t;
    }
    if let Some(t) = file.synth_temperature {
        cfg.policy.synth_temperature = t;
    }
    if let Some(t) = file.refine_temperature {
        cfg.policy.refine_temperature = t;
    }
    for (model, price) in &file.pricing {
        cfg.pricing.insert(model.clone(), *price);
    }
    cfg
}

fn http_backend(live: &LiveArgs, file: &FileConfig) -> Result<HttpBackend> {
    let endpoint = live
        .endpoint
        .clone()
        .or_else(|| file.endpoint.clone())
        .context("the http backend needs --endpoint or `endpoint` in the config file")?;
    let model = live
        .model
        .clone()
        .or_else(|| file.model.clone())
        .context("the http backend needs --model or `model` in the config file")?;
    let key = Secret::from_env().with_context(|| format!("{API_KEY_ENV} is not set"))?;
    let mut cfg = BackendConfig::new(endpoint, model, key);
    if let Some(secs) = file.timeout_secs {
        cfg.timeout = Duration::from_secs(secs);
    }
    if let Some(max) = file.max_output_tokens {
        cfg.max_output_tokens = max;
    }
    Ok(HttpBackend::new(cfg)?)
}

fn scripted_backend(path: Option<&Path>) -> Result<ScriptedBackend> {
    let path = path.context("the scripted backend needs --fixtures")?;
    Ok(ScriptedBackend::new(Script::load(path)?)?)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn profile(csv: &Path, k: usize, seed: u64, format: ProfileFormat) -> Result<u8> {
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let dataset = load_dataset(csv)?;
    let context = build_context(&dataset, k, seed, &ProfilerConfig::default());
    match format {
        ProfileFormat::Json => emit(&(context.to_canonical_json() + "\n"))?,
        ProfileFormat::Prompt => emit(&render_schema_metadata(&context, None))?,
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn ask(
    csv: &Path,
    query: &str,
    backend_kind: BackendKind,
    fixtures: Option<&Path>,
    overrides: (Option<usize>, Option<usize>, Option<u64>),
    mode: Mode,
    out: Option<&Path>,
    live: &LiveArgs,
) -> Result<u8> {
    let file = FileConfig::load(live.config.as_deref())?;
    let mut config = session_config(&file);
    let (t, k, seed) = overrides;
    config.refine_budget = t.unwrap_or(config.refine_budget);
    config.k = k.unwrap_or(config.k);
    config.seed = seed.unwrap_or(config.seed);
    config.mode = mode;
    if config.k == 0 {
        bail!("--k must be at least 1");
    }
    let query = UserQuery::new(query).map_err(|_| anyhow::anyhow!("the query is empty"))?;
    let dataset = load_dataset(csv)?;
    let backend: Box<dyn CompletionBackend> = match backend_kind {
        BackendKind::Http => Box::new(http_backend(live, &file)?),
        BackendKind::Scripted => Box::new(scripted_backend(fixtures)?),
    };
    let mut transcript = run_query(&query, &dataset, backend.as_ref(), &config);
    transcript.dataset_source = Some(csv.display().to_string());
    if let Some(path) = out {
        std::fs::write(path, transcript.to_jsonl())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let t = &transcript.totals;
    let cost = t
        .estimated_cost
        .map(|c| format!("${c:.4}"))
        .unwrap_or_else(|| "n/a".into());
    eprintln!(
        "{} backend call(s), {} refine(s), {} tokens, cost {cost}",
        transcript.backend_calls(),
        transcript.refine_attempts(),
        t.total
    );
    Ok(match &transcript.outcome {
        Outcome::Success { result } => {
            emit(&(serde_json::to_string_pretty(result)? + "\n"))?;
            0
        }
        Outcome::Failure { report } => {
            eprint!("{report}");
            EXIT_MODEL_FAILURE
        }
        Outcome::Infrastructure { stage, error } => {
            eprintln!("backend failure during {stage}: {error}");
            EXIT_INFRASTRUCTURE
        }
    })
}

fn replay_cmd(path: &Path, data: Option<&Path>) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let transcript = SessionTranscript::from_jsonl(&text)?;
    let csv = match (data, &transcript.dataset_source) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(src)) => PathBuf::from(src),
        (None, None) => bail!("transcript does not record its dataset; pass --data"),
    };
    let dataset = load_dataset(&csv)?;
    let report = replay(&transcript, &dataset, &ProfilerConfig::default())?;
    emit(&(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(if report.identical() { 0 } else { EXIT_MODEL_FAILURE })
}

fn bench(suite_path: &Path, mode: Option<Mode>, out: Option<&Path>, live: &LiveArgs) -> Result<u8> {
    let file = FileConfig::load(live.config.as_deref())?;
    let mut suite = BenchSuite::load(suite_path)?;
    if let Some(m) = mode {
        suite.mode = m;
    }
    let base = session_config(&file);
    let needs_live = suite.entries.iter().any(|e| e.live);
    let backend = if needs_live { Some(http_backend(live, &file)?) } else { None };
    let shared = backend.map(std::sync::Arc::new);
    let factory = shared.clone().map(|b| {
        move || -> Result<Box<dyn CompletionBackend>, strot::backend::BackendError> {
            Ok(Box::new(ArcBackend(b.clone())))
        }
    });
    let transcripts = run_suite(
        &suite,
        &base,
        factory
            .as_ref()
            .map(|f| f as &(dyn Fn() -> Result<Box<dyn CompletionBackend>, strot::backend::BackendError> + Sync)),
    )?;
    let report = compute_metrics(&transcripts);
    emit(&report.render_table())?;
    if let Some(path) = out {
        std::fs::write(path, report.to_json_pretty() + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(0)
}

struct ArcBackend(std::sync::Arc<HttpBackend>);

impl CompletionBackend for ArcBackend {
    fn model_id(&self) -> &str {
        self.0.model_id()
    }

    fn complete(&self, prompt: &strot::prompt::Prompt) -> Result<strot::backend::Completion, strot::backend::BackendError> {
        self.0.complete(prompt)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("STROT_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Profile { csv, k, seed, format } => profile(csv, *k, *seed, *format),
        Command::Ask {
            csv,
            query,
            backend,
            fixtures,
            refine_budget,
            k,
            seed,
            mode,
            out,
            live,
        } => ask(
            csv,
            query,
            *backend,
            fixtures.as_deref(),
            (*refine_budget, *k, *seed),
            (*mode).into(),
            out.as_deref(),
            live,
        ),
        Command::Replay { transcript, data } => replay_cmd(transcript, data.as_deref()),
        Command::Bench { suite, mode, out, live } => bench(suite, mode.map(Into::into), out.as_deref(), live),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INFRASTRUCTURE)
        }
    }
}
