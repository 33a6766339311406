//! The query loop: context, plan, synthesize, execute, refine.
//!
//! A session makes one plan call, one synthesis call and at most `T` refine
//! calls. A plan that fails to parse is re-requested once for free; later
//! re-plans draw on the same budget as refinements. Backend infrastructure
//! errors end the session immediately and never consume budget.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::backend::{BackendError, Completion, CompletionBackend, DecodingPolicy, TokenEstimator};
use crate::dataset::Dataset;
use crate::dsl::{parse_program, validate_against_plan, DSL_SCHEMA_V1};
use crate::executor::{execute, ResultPayload};
use crate::plan::{
    parse_plan, render_plan_prompt_with_feedback, render_schema_metadata, AnalysisPlan, UserQuery,
    SECTION_FORMAT, SECTION_INSTRUCTION, SECTION_SCHEMA, USER_GOAL_PREFIX,
};
use crate::profiler::{build_context, ProfilerConfig, SchemaContext};
use crate::prompt::{Prompt, Stage};
use crate::trace::{render_error, ErrorCode, ErrorTrace};

pub const DEFAULT_REFINE_BUDGET: usize = 3;
pub const TRANSCRIPT_VERSION: u32 = 1;

pub const SECTION_PLAN: &str = "Analysis Plan";
pub const SECTION_DSL: &str = "DSL Schema v1";
pub const SECTION_PREVIOUS: &str = "Previous Program";
pub const SECTION_ERROR: &str = "Error Trace";
pub const SECTION_SCHEMA_HEADER: &str = "Schema Header";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Strot,
    /// Single flat prompt straight to a program; no plan, no refinement.
    OneShot,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Strot => "strot",
            Mode::OneShot => "one_shot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPricing {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

/// USD rates keyed by model id. Defaults are public list prices as of
/// February 2025.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingTable(pub BTreeMap<String, ModelPricing>);

impl Default for PricingTable {
    fn default() -> Self {
        let rows = [
            ("gpt-4-turbo", 0.01, 0.03),
            ("claude-3-opus", 0.015, 0.075),
            // quoted as a single per-token rate for both directions
            ("gemini-1.5-pro", 0.125, 0.125),
        ];
        Self(
            rows.into_iter()
                .map(|(id, i, o)| {
                    (
                        id.to_string(),
                        ModelPricing {
                            input_per_1k: i,
                            output_per_1k: o,
                        },
                    )
                })
                .collect(),
        )
    }
}

impl PricingTable {
    pub fn get(&self, model_id: &str) -> Option<ModelPricing> {
        self.0.get(model_id).copied()
    }

    pub fn insert(&mut self, model_id: impl Into<String>, pricing: ModelPricing) {
        self.0.insert(model_id.into(), pricing);
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Refinement budget `T`.
    pub refine_budget: usize,
    pub k: usize,
    pub seed: u64,
    pub mode: Mode,
    pub policy: DecodingPolicy,
    pub profiler: ProfilerConfig,
    pub estimator: TokenEstimator,
    pub pricing: PricingTable,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            refine_budget: DEFAULT_REFINE_BUDGET,
            k: crate::profiler::DEFAULT_SAMPLE_COUNT,
            seed: 42,
            mode: Mode::Strot,
            policy: DecodingPolicy::default(),
            profiler: ProfilerConfig::default(),
            estimator: TokenEstimator::default(),
            pricing: PricingTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parsed {
    Plan { plan: AnalysisPlan },
    Program { program: serde_json::Value },
    Error { error: ErrorTrace },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Execution {
    Ok { result: ResultPayload },
    Error { error: ErrorTrace },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based position in the session.
    pub t: usize,
    pub stage: Stage,
    pub prompt: Prompt,
    pub completion: Completion,
    pub parsed: Parsed,
    pub execution: Option<Execution>,
}

impl Attempt {
    /// The failure this attempt ended with, if any.
    pub fn error(&self) -> Option<&ErrorTrace> {
        match (&self.parsed, &self.execution) {
            (Parsed::Error { error }, _) => Some(error),
            (_, Some(Execution::Error { error })) => Some(error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub t: usize,
    pub stage: Stage,
    pub code: Option<ErrorCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub last_error: ErrorTrace,
    pub rendered: String,
    pub refine_attempts: usize,
    pub history: Vec<AttemptSummary>,
}

impl fmt::Display for FailureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "failed after {} refine attempt(s)", self.refine_attempts)?;
        for a in &self.history {
            let code = a.code.map(|c| c.as_str()).unwrap_or("ok");
            writeln!(f, "  #{} {}: {}", a.t, a.stage, code)?;
        }
        f.write_str(&self.rendered)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success { result: ResultPayload },
    Failure { report: FailureReport },
    /// The backend could not be reached or refused the request.
    Infrastructure { stage: Stage, error: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTokens {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl StageTokens {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub plan: StageTokens,
    pub synthesize: StageTokens,
    pub refine: StageTokens,
    pub total: u64,
    /// USD; `None` when the model has no pricing entry.
    pub estimated_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TokenLedger {
    pub fn prompt_tokens(&self) -> u64 {
        self.plan.prompt_tokens + self.synthesize.prompt_tokens + self.refine.prompt_tokens
    }

    pub fn completion_tokens(&self) -> u64 {
        self.plan.completion_tokens + self.synthesize.completion_tokens + self.refine.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub version: u32,
    pub query: String,
    pub dataset: String,
    /// Where the dataset was loaded from, when known. Lets `replay` find it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_source: Option<String>,
    pub model_id: String,
    pub mode: Mode,
    pub refine_budget: usize,
    pub k: usize,
    pub seed: u64,
    pub policy: DecodingPolicy,
    pub context_digest: String,
    pub attempts: Vec<Attempt>,
    pub outcome: Outcome,
    pub totals: TokenLedger,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported transcript version {0}")]
    Version(u32),
    #[error("transcript has no summary record")]
    MissingSummary,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    version: u32,
    query: String,
    dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset_source: Option<String>,
    model_id: String,
    mode: Mode,
    refine_budget: usize,
    k: usize,
    seed: u64,
    policy: DecodingPolicy,
    context_digest: String,
    outcome: Outcome,
    totals: TokenLedger,
}

fn tagged_line<T: Serialize>(record: &str, value: &T) -> String {
    let mut map = serde_json::Map::new();
    map.insert("record".into(), record.into());
    match serde_json::to_value(value).expect("record serializes") {
        serde_json::Value::Object(fields) => map.extend(fields),
        _ => unreachable!("records are structs"),
    }
    serde_json::to_string(&map).expect("record serializes")
}

impl SessionTranscript {
    pub fn refine_attempts(&self) -> usize {
        self.attempts.iter().filter(|a| a.stage == Stage::Refine).count()
    }

    pub fn backend_calls(&self) -> usize {
        self.attempts.len()
    }

    /// The accepted plan, if planning succeeded.
    pub fn plan(&self) -> Option<&AnalysisPlan> {
        self.attempts.iter().rev().find_map(|a| match &a.parsed {
            Parsed::Plan { plan } => Some(plan),
            _ => None,
        })
    }

    pub fn refine_prompts(&self) -> impl Iterator<Item = &Prompt> {
        self.attempts
            .iter()
            .filter(|a| a.stage == Stage::Refine)
            .map(|a| &a.prompt)
    }

    /// Canonical line-delimited form: one `attempt` record per line, then one
    /// `summary` record. Latency is never written.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.attempts {
            out.push_str(&tagged_line("attempt", a));
            out.push('\n');
        }
        let summary = Summary {
            version: self.version,
            query: self.query.clone(),
            dataset: self.dataset.clone(),
            dataset_source: self.dataset_source.clone(),
            model_id: self.model_id.clone(),
            mode: self.mode,
            refine_budget: self.refine_budget,
            k: self.k,
            seed: self.seed,
            policy: self.policy,
            context_digest: self.context_digest.clone(),
            outcome: self.outcome.clone(),
            totals: self.totals.clone(),
        };
        out.push_str(&tagged_line("summary", &summary));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut attempts = Vec::new();
        let mut summary: Option<Summary> = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |message: String| TranscriptError::Malformed { line: i + 1, message };
            let mut value: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let record = value.remove("record");
            let value = serde_json::Value::Object(value);
            match record.as_ref().and_then(|r| r.as_str()) {
                Some("attempt") => {
                    attempts.push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?)
                }
                Some("summary") => {
                    let s: Summary = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
                    if s.version != TRANSCRIPT_VERSION {
                        return Err(TranscriptError::Version(s.version));
                    }
                    summary = Some(s);
                }
                other => return Err(bad(format!("unknown record type {other:?}"))),
            }
        }
        let s = summary.ok_or(TranscriptError::MissingSummary)?;
        Ok(Self {
            version: s.version,
            query: s.query,
            dataset: s.dataset,
            dataset_source: s.dataset_source,
            model_id: s.model_id,
            mode: s.mode,
            refine_budget: s.refine_budget,
            k: s.k,
            seed: s.seed,
            policy: s.policy,
            context_digest: s.context_digest,
            attempts,
            outcome: s.outcome,
            totals: s.totals,
        })
    }
}

/// Sums tokens per stage and prices them for the transcript's model.
pub fn account_tokens(transcript: &SessionTranscript, pricing: &PricingTable) -> TokenLedger {
    ledger_for(&transcript.attempts, &transcript.model_id, pricing)
}

fn ledger_for(attempts: &[Attempt], model_id: &str, pricing: &PricingTable) -> TokenLedger {
    let mut ledger = TokenLedger::default();
    for a in attempts {
        let slot = match a.stage {
            Stage::Plan => &mut ledger.plan,
            Stage::Synthesize => &mut ledger.synthesize,
            Stage::Refine => &mut ledger.refine,
        };
        slot.prompt_tokens += a.completion.prompt_tokens;
        slot.completion_tokens += a.completion.completion_tokens;
    }
    ledger.total = ledger.plan.total() + ledger.synthesize.total() + ledger.refine.total();
    ledger.estimated_cost = if ledger.total == 0 {
        Some(0.0)
    } else {
        match pricing.get(model_id) {
            Some(p) => Some(
                ledger.prompt_tokens() as f64 / 1000.0 * p.input_per_1k
                    + ledger.completion_tokens() as f64 / 1000.0 * p.output_per_1k,
            ),
            None => {
                ledger
                    .warnings
                    .push(format!("no pricing entry for model '{model_id}'; cost not estimated"));
                None
            }
        }
    };
    ledger
}

fn program_constraint() -> &'static str {
    "Return only one JSON object that follows DSL v1 and implements the plan. Use column names exactly as listed. No prose, comments or code fences."
}

/// Synthesis prompt: schema for the plan's fields, the plan itself, the DSL
/// reference and the output constraint.
pub fn render_synthesis_prompt(
    plan: &AnalysisPlan,
    context: &SchemaContext,
    policy: &DecodingPolicy,
) -> Prompt {
    Prompt::new(Stage::Synthesize, policy.temperature_for(Stage::Synthesize))
        .section(SECTION_SCHEMA, render_schema_metadata(context, Some(&plan.fields_used)))
        .section(SECTION_PLAN, plan.to_json_pretty())
        .section(SECTION_DSL, DSL_SCHEMA_V1)
        .section(SECTION_FORMAT, program_constraint())
}

/// Refine prompt for a failed program. `earlier_failures` counts failed
/// attempts before `prior_program`; only the latest pair is shown in full.
///
/// Panics if `error` is blank.
pub fn render_refine_prompt(
    prior_program: &str,
    error: &str,
    plan: &AnalysisPlan,
    context: &SchemaContext,
    policy: &DecodingPolicy,
    earlier_failures: usize,
) -> Prompt {
    assert!(!error.trim().is_empty(), "refine prompt needs a non-empty error");
    let mut error_body = error.trim_end().to_string();
    if earlier_failures > 0 {
        error_body.push_str(&format!(
            "\n({earlier_failures} earlier attempt(s) also failed.)"
        ));
    }
    let mut plan_body = plan.to_json_pretty();
    let columns: Vec<String> = plan
        .fields_used
        .iter()
        .filter_map(|f| context.column(f))
        .map(|c| format!("{} ({})", c.name, c.semantic_type.as_str()))
        .collect();
    plan_body.push_str(&format!("\nColumns: {}", columns.join(", ")));
    let prior = if prior_program.trim().is_empty() {
        "(empty response)"
    } else {
        prior_program.trim()
    };
    Prompt::new(Stage::Refine, policy.temperature_for(Stage::Refine))
        .section(SECTION_PREVIOUS, prior)
        .section(SECTION_ERROR, error_body)
        .section(SECTION_PLAN, plan_body)
        .section(SECTION_DSL, DSL_SCHEMA_V1)
        .section(SECTION_FORMAT, program_constraint())
}

/// Flat baseline prompt: column names and types only, the query, the DSL.
pub fn render_one_shot_prompt(
    context: &SchemaContext,
    query: &UserQuery,
    policy: &DecodingPolicy,
) -> Prompt {
    let header: Vec<String> = context
        .columns
        .iter()
        .map(|c| format!("{} ({})", c.name, c.semantic_type.as_str()))
        .collect();
    Prompt::new(Stage::Synthesize, policy.temperature_for(Stage::Synthesize))
        .section(SECTION_SCHEMA_HEADER, header.join(", "))
        .section(SECTION_INSTRUCTION, format!("{USER_GOAL_PREFIX} {}", query.as_str()))
        .section(SECTION_DSL, DSL_SCHEMA_V1)
        .section(SECTION_FORMAT, program_constraint())
}

struct Session<'a> {
    backend: &'a dyn CompletionBackend,
    config: &'a SessionConfig,
    context: SchemaContext,
    dataset: &'a Dataset,
    attempts: Vec<Attempt>,
}

enum Call {
    Done(Completion),
    Infrastructure(BackendError),
}

impl Session<'_> {
    fn call(&self, prompt: &Prompt) -> Call {
        match self.backend.complete(prompt) {
            Ok(c) => Call::Done(c),
            Err(BackendError::EmptyCompletion) => Call::Done(Completion {
                text: String::new(),
                prompt_tokens: self.config.estimator.estimate_prompt(prompt),
                completion_tokens: 0,
                latency_ms: 0,
            }),
            Err(e) => Call::Infrastructure(e),
        }
    }

    fn record(&mut self, prompt: Prompt, completion: Completion, parsed: Parsed, execution: Option<Execution>) {
        let t = self.attempts.len() + 1;
        debug!(t, stage = %prompt.stage, "attempt recorded");
        self.attempts.push(Attempt {
            t,
            stage: prompt.stage,
            prompt,
            completion,
            parsed,
            execution,
        });
    }

    /// Parses, checks and runs one program completion.
    fn evaluate(&self, text: &str, plan: Option<&AnalysisPlan>) -> (Parsed, Option<Execution>) {
        if text.trim().is_empty() {
            let error = ErrorTrace::new(ErrorCode::EmptyCompletion, "the model returned an empty response");
            return (Parsed::Error { error }, None);
        }
        let program = match parse_program(text, &self.context) {
            Ok(p) => p,
            Err(e) => return (Parsed::Error { error: e.to_trace() }, None),
        };
        if let Some(plan) = plan {
            if let Err(m) = validate_against_plan(&program, plan) {
                return (Parsed::Error { error: m.to_trace() }, None);
            }
        }
        let parsed = Parsed::Program {
            program: serde_json::to_value(&program).expect("program serializes"),
        };
        let execution = match execute(&program, self.dataset) {
            Ok(result) => Execution::Ok { result },
            Err(error) => Execution::Error { error },
        };
        (parsed, Some(execution))
    }

    fn failure(&self) -> Outcome {
        let last = self
            .attempts
            .iter()
            .rev()
            .find_map(Attempt::error)
            .cloned()
            .unwrap_or_else(|| ErrorTrace::new(ErrorCode::MalformedObject, "no attempt was made"));
        Outcome::Failure {
            report: FailureReport {
                rendered: render_error(&last),
                last_error: last,
                refine_attempts: self.attempts.iter().filter(|a| a.stage == Stage::Refine).count(),
                history: self
                    .attempts
                    .iter()
                    .map(|a| AttemptSummary {
                        t: a.t,
                        stage: a.stage,
                        code: a.error().map(|e| e.code),
                    })
                    .collect(),
            },
        }
    }

    fn run_strot(&mut self, query: &UserQuery) -> Outcome {
        let policy = self.config.policy;
        let budget = self.config.refine_budget;
        let mut spent = 0usize;
        let mut free_replan = true;
        let mut feedback: Option<(String, String)> = None;

        let plan = loop {
            let prompt = render_plan_prompt_with_feedback(
                &self.context,
                query,
                &policy,
                feedback.as_ref().map(|(p, e)| (p.as_str(), e.as_str())),
            );
            let completion = match self.call(&prompt) {
                Call::Done(c) => c,
                Call::Infrastructure(e) => return infra(Stage::Plan, e),
            };
            let parsed = if completion.text.trim().is_empty() {
                Err(ErrorTrace::new(ErrorCode::EmptyCompletion, "the model returned an empty response"))
            } else {
                parse_plan(&completion.text, &self.context).map_err(|e| e.to_trace())
            };
            match parsed {
                Ok(plan) => {
                    for w in &plan.warnings {
                        warn!("plan: {w}");
                    }
                    self.record(prompt, completion, Parsed::Plan { plan: plan.clone() }, None);
                    break plan;
                }
                Err(error) => {
                    let text = completion.text.clone();
                    let rendered = render_error(&error);
                    self.record(prompt, completion, Parsed::Error { error }, None);
                    if free_replan {
                        free_replan = false;
                    } else if spent < budget {
                        spent += 1;
                    } else {
                        return self.failure();
                    }
                    info!("plan rejected, re-planning");
                    feedback = Some((text, rendered));
                }
            }
        };

        let mut prompt = render_synthesis_prompt(&plan, &self.context, &policy);
        let mut failures = 0usize;
        loop {
            let stage = prompt.stage;
            let completion = match self.call(&prompt) {
                Call::Done(c) => c,
                Call::Infrastructure(e) => return infra(stage, e),
            };
            let (parsed, execution) = self.evaluate(&completion.text, Some(&plan));
            let text = completion.text.clone();
            self.record(prompt, completion, parsed, execution);
            let last = self.attempts.last().expect("just recorded");
            let error = match (&last.execution, last.error()) {
                (Some(Execution::Ok { result }), _) => {
                    return Outcome::Success {
                        result: result.clone(),
                    }
                }
                (_, Some(e)) => e.clone(),
                _ => unreachable!("an attempt either succeeds or carries an error"),
            };
            if spent >= budget {
                return self.failure();
            }
            spent += 1;
            info!(code = %error.code, refine = spent, "program failed, refining");
            prompt = render_refine_prompt(&text, &render_error(&error), &plan, &self.context, &policy, failures);
            failures += 1;
        }
    }

    fn run_one_shot(&mut self, query: &UserQuery) -> Outcome {
        let prompt = render_one_shot_prompt(&self.context, query, &self.config.policy);
        let completion = match self.call(&prompt) {
            Call::Done(c) => c,
            Call::Infrastructure(e) => return infra(Stage::Synthesize, e),
        };
        let (parsed, execution) = self.evaluate(&completion.text, None);
        self.record(prompt, completion, parsed, execution);
        match &self.attempts[0].execution {
            Some(Execution::Ok { result }) => Outcome::Success {
                result: result.clone(),
            },
            _ => self.failure(),
        }
    }
}

fn infra(stage: Stage, error: BackendError) -> Outcome {
    warn!(%stage, %error, "backend failure, aborting session");
    Outcome::Infrastructure {
        stage,
        error: error.to_string(),
    }
}

/// Runs one query end to end. Never fails: every way a session can end is an
/// [`Outcome`].
pub fn run_query(
    query: &UserQuery,
    dataset: &Dataset,
    backend: &dyn CompletionBackend,
    config: &SessionConfig,
) -> SessionTranscript {
    let context = build_context(dataset, config.k, config.seed, &config.profiler);
    run_query_with_context(query, dataset, context, backend, config)
}

/// As [`run_query`], with a prebuilt context for `dataset`.
pub fn run_query_with_context(
    query: &UserQuery,
    dataset: &Dataset,
    context: SchemaContext,
    backend: &dyn CompletionBackend,
    config: &SessionConfig,
) -> SessionTranscript {
    for w in config.policy.warnings() {
        warn!("{w}");
    }
    let context_digest = context.digest();
    let mut session = Session {
        backend,
        config,
        context,
        dataset,
        attempts: Vec::new(),
    };
    let outcome = match config.mode {
        Mode::Strot => session.run_strot(query),
        Mode::OneShot => session.run_one_shot(query),
    };
    let totals = ledger_for(&session.attempts, backend.model_id(), &config.pricing);
    for w in &totals.warnings {
        debug!("{w}");
    }
    SessionTranscript {
        version: TRANSCRIPT_VERSION,
        query: query.as_str().to_string(),
        dataset: dataset.name().to_string(),
        dataset_source: None,
        model_id: backend.model_id().to_string(),
        mode: config.mode,
        refine_budget: config.refine_budget,
        k: config.k,
        seed: config.seed,
        policy: config.policy,
        context_digest,
        attempts: session.attempts,
        outcome,
        totals,
    }
}

/// Serves a recorded session's completions back in order, refusing any prompt
/// that differs from the recorded one.
struct ReplayBackend {
    model_id: String,
    attempts: Vec<(Prompt, Completion)>,
    next: std::sync::Mutex<usize>,
}

impl CompletionBackend for ReplayBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError> {
        let mut next = self.next.lock().expect("replay lock");
        let ordinal = *next + 1;
        let exhausted = || BackendError::ScriptExhausted {
            stage: prompt.stage.to_string(),
            ordinal,
        };
        let (recorded, completion) = self.attempts.get(*next).ok_or_else(exhausted)?;
        if recorded != prompt {
            return Err(exhausted());
        }
        *next += 1;
        Ok(completion.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub context_matches: bool,
    pub attempts_recorded: usize,
    pub attempts_replayed: usize,
    /// 1-based index of the first attempt whose canonical line differs.
    pub first_divergence: Option<usize>,
    pub outcome_matches: bool,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.context_matches
            && self.first_divergence.is_none()
            && self.attempts_recorded == self.attempts_replayed
            && self.outcome_matches
    }
}

/// Re-runs a recorded session against `dataset`, feeding back the recorded
/// completions, and compares every attempt and the outcome byte for byte.
pub fn replay(transcript: &SessionTranscript, dataset: &Dataset, profiler: &ProfilerConfig) -> Result<ReplayReport, UserQueryError> {
    let query = UserQuery::new(transcript.query.clone()).map_err(|_| UserQueryError)?;
    let backend = ReplayBackend {
        model_id: transcript.model_id.clone(),
        attempts: transcript
            .attempts
            .iter()
            .map(|a| (a.prompt.clone(), a.completion.clone()))
            .collect(),
        next: std::sync::Mutex::new(0),
    };
    let config = SessionConfig {
        refine_budget: transcript.refine_budget,
        k: transcript.k,
        seed: transcript.seed,
        mode: transcript.mode,
        policy: transcript.policy,
        profiler: profiler.clone(),
        ..SessionConfig::default()
    };
    let rerun = run_query(&query, dataset, &backend, &config);
    let line = |a: &Attempt| tagged_line("attempt", a);
    let first_divergence = transcript
        .attempts
        .iter()
        .zip(&rerun.attempts)
        .position(|(a, b)| line(a) != line(b))
        .map(|i| i + 1);
    let outcome_json = |o: &Outcome| serde_json::to_string(o).expect("outcome serializes");
    Ok(ReplayReport {
        context_matches: rerun.context_digest == transcript.context_digest,
        attempts_recorded: transcript.attempts.len(),
        attempts_replayed: rerun.attempts.len(),
        first_divergence,
        outcome_matches: outcome_json(&rerun.outcome) == outcome_json(&transcript.outcome),
    })
}

#[derive(Debug, Error)]
#[error("transcript query is empty")]
pub struct UserQueryError;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Fixture, Persona, Script, ScriptedBackend};
    use crate::dataset::Column;
    use crate::dsl::tests::REGION_PROGRAM;

    const PLAN: &str = r#"{"steps": ["Group rows by WHO Region", "Sum deaths and New cases within each group"], "fields_used": ["deaths", "New cases", "WHO Region"], "transformation_type": "group", "description": "Totals per region."}"#;

    fn dataset() -> Dataset {
        let regions = ["Europe", "Americas", "Africa"];
        let n = 30;
        Dataset::new(
            "covid",
            vec![
                Column::from_text("country", &(0..n).map(|i| format!("C{i}")).collect::<Vec<_>>()),
                Column::from_text("deaths", &(0..n).map(|i| (i * 7).to_string()).collect::<Vec<_>>()),
                Column::from_text("New cases", &(0..n).map(|i| (i * 3 + 1).to_string()).collect::<Vec<_>>()),
                Column::from_text("WHO Region", &(0..n).map(|i| regions[i % 3]).collect::<Vec<_>>()),
            ],
        )
        .unwrap()
    }

    fn query() -> UserQuery {
        UserQuery::new("Compare deaths and new cases per WHO region.").unwrap()
    }

    fn run(fixtures: Vec<Fixture>, budget: usize) -> SessionTranscript {
        let backend = ScriptedBackend::new(Script::new(fixtures)).unwrap();
        let config = SessionConfig {
            refine_budget: budget,
            ..SessionConfig::default()
        };
        run_query(&query(), &dataset(), &backend, &config)
    }

    #[test]
    fn happy_path_two_calls() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM),
            ],
            3,
        );
        assert!(t.outcome.is_success(), "{:?}", t.outcome);
        assert_eq!(t.attempts.iter().map(|a| a.stage).collect::<Vec<_>>(), [Stage::Plan, Stage::Synthesize]);
        let Outcome::Success {
            result: ResultPayload::Chart { labels, .. },
        } = &t.outcome
        else {
            panic!()
        };
        assert_eq!(labels, &["Europe", "Americas", "Africa"]);
    }

    #[test]
    fn bad_field_recovers_with_one_refine() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM).with_persona(Persona::EmitBadField {
                    field: "New cases".into(),
                }),
                Fixture::for_stage(Stage::Refine, REGION_PROGRAM),
            ],
            3,
        );
        assert!(t.outcome.is_success());
        assert_eq!(t.refine_attempts(), 1);
        let refine = t.refine_prompts().next().unwrap();
        let body = refine.render();
        assert!(body.contains("\"newcases\""));
        assert!(body.contains("did you mean: 'New cases'"));
        assert!(body.contains("Group rows by WHO Region"));
        assert_eq!(refine.stage, Stage::Refine);
        assert_eq!(refine.temperature, 0.25);
    }

    #[test]
    fn always_malformed_exhausts_budget() {
        for budget in [0, 1, 3] {
            let t = run(
                vec![
                    Fixture::for_stage(Stage::Plan, PLAN),
                    Fixture::for_stage(Stage::Synthesize, "x").with_persona(Persona::EmitMalformedObject),
                    Fixture::for_stage(Stage::Refine, "x")
                        .with_persona(Persona::EmitMalformedObject)
                        .repeating(),
                ],
                budget,
            );
            let Outcome::Failure { report } = &t.outcome else { panic!() };
            assert_eq!(report.refine_attempts, budget);
            assert_eq!(report.last_error.code, ErrorCode::MalformedObject);
            assert_eq!(t.backend_calls(), 2 + budget);
        }
    }

    #[test]
    fn refine_prompt_carries_latest_pair() {
        let bad = REGION_PROGRAM.replace("\"WHO Region\"]", "\"Region\"]");
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, "{}"),
                Fixture::for_stage(Stage::Refine, bad.clone()),
                Fixture::for_stage(Stage::Refine, REGION_PROGRAM),
            ],
            3,
        );
        assert!(t.outcome.is_success());
        let prompts: Vec<&Prompt> = t.refine_prompts().collect();
        assert_eq!(prompts.len(), 2);
        assert_eq!(prompts[0].section_body(SECTION_PREVIOUS), Some("{}"));
        assert_eq!(prompts[1].section_body(SECTION_PREVIOUS), Some(bad.trim()));
        let err = prompts[1].section_body(SECTION_ERROR).unwrap();
        assert!(err.contains(&render_error(t.attempts[2].error().unwrap()).trim_end().to_string()));
        assert!(err.contains("1 earlier attempt(s)"));
    }

    #[test]
    fn bad_plan_gets_one_free_replan() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, "no plan here"),
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM),
            ],
            0,
        );
        assert!(t.outcome.is_success());
        let replan = &t.attempts[1].prompt;
        assert_eq!(replan.sections.len(), 3);
        assert!(replan.section_body(SECTION_INSTRUCTION).unwrap().contains("no plan here"));
        assert_eq!(t.refine_attempts(), 0);
    }

    #[test]
    fn replans_beyond_the_free_one_use_budget() {
        let t = run(vec![Fixture::for_stage(Stage::Plan, "nope").repeating()], 2);
        assert!(matches!(t.outcome, Outcome::Failure { .. }));
        assert_eq!(t.backend_calls(), 4);
    }

    #[test]
    fn empty_completion_is_model_failure() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, "x").with_persona(Persona::EmitEmpty),
                Fixture::for_stage(Stage::Refine, REGION_PROGRAM),
            ],
            1,
        );
        assert!(t.outcome.is_success());
        assert_eq!(t.attempts[1].error().unwrap().code, ErrorCode::EmptyCompletion);
        assert!(t.refine_prompts().next().unwrap().render().contains("(empty response)"));
    }

    #[test]
    fn exhausted_script_is_infrastructure() {
        let t = run(vec![Fixture::for_stage(Stage::Plan, PLAN)], 3);
        assert!(matches!(
            t.outcome,
            Outcome::Infrastructure {
                stage: Stage::Synthesize,
                ..
            }
        ));
        assert_eq!(t.refine_attempts(), 0);
    }

    #[test]
    fn plan_mismatch_enters_refine() {
        let plan = PLAN.replace("\"group\"", "\"rank\"");
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, plan),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM).repeating(),
                Fixture::for_stage(Stage::Refine, REGION_PROGRAM).repeating(),
            ],
            1,
        );
        let Outcome::Failure { report } = &t.outcome else { panic!() };
        assert_eq!(report.last_error.code, ErrorCode::PlanMismatch);
    }

    #[test]
    fn synthesis_prompt_lists_only_plan_fields() {
        let ctx = build_context(&dataset(), 5, 42, &ProfilerConfig::default());
        let plan = parse_plan(PLAN, &ctx).unwrap();
        let p = render_synthesis_prompt(&plan, &ctx, &DecodingPolicy::default());
        let schema = p.section_body(SECTION_SCHEMA).unwrap();
        assert!(!schema.contains("country"));
        assert_eq!(schema.lines().count(), 4);
        assert_eq!(p.section_body(SECTION_DSL), Some(DSL_SCHEMA_V1));
        assert_eq!(p.stage, Stage::Synthesize);
        assert_eq!(p.render(), render_synthesis_prompt(&plan, &ctx, &DecodingPolicy::default()).render());
    }

    #[test]
    #[should_panic(expected = "non-empty error")]
    fn refine_prompt_requires_error() {
        let ctx = build_context(&dataset(), 5, 42, &ProfilerConfig::default());
        let plan = parse_plan(PLAN, &ctx).unwrap();
        render_refine_prompt("{}", "  ", &plan, &ctx, &DecodingPolicy::default(), 0);
    }

    #[test]
    fn ledger_cost_arithmetic() {
        let mut t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM),
            ],
            3,
        );
        t.attempts[0].completion.prompt_tokens = 1000;
        t.attempts[0].completion.completion_tokens = 200;
        t.attempts[1].completion.prompt_tokens = 500;
        t.attempts[1].completion.completion_tokens = 300;
        t.model_id = "gpt-4-turbo".into();
        let ledger = account_tokens(&t, &PricingTable::default());
        assert_eq!(ledger.total, 2000);
        assert!((ledger.estimated_cost.unwrap() - 0.030).abs() < 1e-12);

        t.model_id = "mystery".into();
        let ledger = account_tokens(&t, &PricingTable::default());
        assert_eq!(ledger.estimated_cost, None);
        assert_eq!(ledger.warnings.len(), 1);

        t.attempts.clear();
        let ledger = account_tokens(&t, &PricingTable::default());
        assert_eq!((ledger.total, ledger.estimated_cost), (0, Some(0.0)));
    }

    #[test]
    fn jsonl_round_trip_and_replay() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM).with_persona(Persona::EmitBadField {
                    field: "New cases".into(),
                }),
                Fixture::for_stage(Stage::Refine, REGION_PROGRAM),
            ],
            3,
        );
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert!(!text.contains("latency"));
        let back = SessionTranscript::from_jsonl(&text).unwrap();
        assert_eq!(back.to_jsonl(), text);
        let report = replay(&back, &dataset(), &ProfilerConfig::default()).unwrap();
        assert!(report.identical(), "{report:?}");
    }

    #[test]
    fn replay_detects_changed_data() {
        let t = run(
            vec![
                Fixture::for_stage(Stage::Plan, PLAN),
                Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM),
            ],
            3,
        );
        let mut d = dataset();
        let deaths: Vec<String> = (0..30).map(|i| (i * 7 + 1).to_string()).collect();
        d = Dataset::new(
            "covid",
            d.columns()
                .iter()
                .map(|c| if c.name() == "deaths" { Column::from_text("deaths", &deaths) } else { c.clone() })
                .collect(),
        )
        .unwrap();
        let report = replay(&t, &d, &ProfilerConfig::default()).unwrap();
        assert!(!report.identical());
    }

    #[test]
    fn one_shot_single_call() {
        let backend = ScriptedBackend::new(Script::new(vec![Fixture::for_stage(Stage::Synthesize, REGION_PROGRAM)])).unwrap();
        let config = SessionConfig {
            mode: Mode::OneShot,
            ..SessionConfig::default()
        };
        let t = run_query(&query(), &dataset(), &backend, &config);
        assert!(t.outcome.is_success());
        assert_eq!(t.backend_calls(), 1);
        assert!(t.attempts[0].prompt.section_body(SECTION_SCHEMA_HEADER).unwrap().contains("WHO Region (categorical)"));
        assert!(t.plan().is_none());
    }
}
