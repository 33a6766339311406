//! Benchmark suites and the success-rate report.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, Script, ScriptedBackend};
use crate::dataset::{CsvOptions, Dataset, DatasetError};
use crate::orchestrator::{run_query_with_context, Mode, Outcome, SessionConfig, SessionTranscript};
use crate::plan::{plan_step_count, UserQuery};
use crate::profiler::build_context;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub query: String,
    /// Script file, relative to the suite file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    /// Use the live backend instead of a script.
    #[serde(default)]
    pub live: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    /// CSV path, relative to the suite file.
    pub dataset: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(rename = "T", default = "default_budget")]
    pub refine_budget: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    pub entries: Vec<BenchEntry>,
}

fn default_budget() -> usize {
    crate::orchestrator::DEFAULT_REFINE_BUDGET
}

fn default_seed() -> u64 {
    42
}

fn default_k() -> usize {
    crate::profiler::DEFAULT_SAMPLE_COUNT
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid suite {path}: {message}")]
    Suite { path: PathBuf, message: String },
    #[error("dataset {path}: {source}")]
    Dataset {
        path: PathBuf,
        source: DatasetError,
    },
    #[error("entry {index}: {source}")]
    Backend { index: usize, source: BackendError },
}

impl BenchSuite {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut suite: BenchSuite = serde_json::from_str(&text).map_err(|e| BenchError::Suite {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        suite.dataset = base.join(&suite.dataset);
        for e in &mut suite.entries {
            if let Some(f) = &e.fixtures {
                e.fixtures = Some(base.join(f));
            }
        }
        for (i, e) in suite.entries.iter().enumerate() {
            if e.fixtures.is_none() && !e.live {
                return Err(BenchError::Suite {
                    path: path.to_path_buf(),
                    message: format!("entry {i} has neither fixtures nor live"),
                });
            }
        }
        Ok(suite)
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, BenchError> {
    let file = std::fs::File::open(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::load_csv(name, file, &CsvOptions::default()).map_err(|source| BenchError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every entry as an independent session, in parallel. Transcripts come
/// back in entry order. `live` builds the backend for entries marked live.
pub fn run_suite(
    suite: &BenchSuite,
    base: &SessionConfig,
    live: Option<&(dyn Fn() -> Result<Box<dyn CompletionBackend>, BackendError> + Sync)>,
) -> Result<Vec<SessionTranscript>, BenchError> {
    let dataset = load_dataset(&suite.dataset)?;
    let config = SessionConfig {
        refine_budget: suite.refine_budget,
        k: suite.k,
        seed: suite.seed,
        mode: suite.mode,
        ..base.clone()
    };
    let context = build_context(&dataset, config.k, config.seed, &config.profiler);
    suite
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let wrap = |source| BenchError::Backend { index, source };
            let backend: Box<dyn CompletionBackend> = match (&entry.fixtures, live) {
                (Some(path), _) if !entry.live => {
                    Box::new(ScriptedBackend::new(Script::load(path).map_err(wrap)?).map_err(wrap)?)
                }
                (_, Some(factory)) => factory().map_err(wrap)?,
                _ => {
                    return Err(wrap(BackendError::InvalidConfig(
                        "live entry but no live backend configured".into(),
                    )))
                }
            };
            let query = UserQuery::new(entry.query.clone()).map_err(|_| BenchError::Suite {
                path: suite.dataset.clone(),
                message: format!("entry {index} has an empty query"),
            })?;
            let mut t = run_query_with_context(&query, &dataset, context.clone(), backend.as_ref(), &config);
            t.dataset_source = Some(suite.dataset.display().to_string());
            Ok(t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query: String,
    pub outcome: String,
    pub refine_attempts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_steps: Option<usize>,
    /// Plan rationale, kept for outside review.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub queries: usize,
    #[serde(rename = "Valid Execution Rate (%)")]
    pub valid_execution_rate: f64,
    #[serde(rename = "First-Attempt Success (%)")]
    pub first_attempt_success: f64,
    /// Not applicable without refinement.
    #[serde(rename = "Recovery via Retry (%)")]
    pub recovery_via_retry: Option<f64>,
    #[serde(rename = "Average Steps per Plan")]
    pub avg_steps_per_plan: Option<f64>,
    pub rows: Vec<QueryRow>,
}

fn percent(count: usize, total: usize) -> f64 {
    (count as f64 * 1000.0 / total as f64).round() / 10.0
}

/// Table-style metrics over finished sessions.
///
/// Panics on an empty slice.
pub fn compute_metrics(transcripts: &[SessionTranscript]) -> BenchReport {
    assert!(!transcripts.is_empty(), "metrics need at least one transcript");
    let n = transcripts.len();
    let success = |t: &&SessionTranscript| t.outcome.is_success();
    let valid = transcripts.iter().filter(success).count();
    let first = transcripts
        .iter()
        .filter(success)
        .filter(|t| t.refine_attempts() == 0)
        .count();
    let steps: Vec<usize> = transcripts.iter().filter_map(|t| t.plan().map(plan_step_count)).collect();
    let mode = transcripts[0].mode;
    let rows = transcripts
        .iter()
        .map(|t| {
            let (outcome, code) = match &t.outcome {
                Outcome::Success { .. } => ("success", None),
                Outcome::Failure { report } => ("failure", Some(report.last_error.code.as_str().to_string())),
                Outcome::Infrastructure { .. } => ("infrastructure", None),
            };
            QueryRow {
                query: t.query.clone(),
                outcome: outcome.into(),
                refine_attempts: t.refine_attempts(),
                error_code: code,
                plan_steps: t.plan().map(plan_step_count),
                plan_description: t.plan().map(|p| p.description.clone()),
            }
        })
        .collect();
    BenchReport {
        mode,
        queries: n,
        valid_execution_rate: percent(valid, n),
        first_attempt_success: percent(first, n),
        recovery_via_retry: (mode == Mode::Strot).then(|| percent(valid - first, n)),
        avg_steps_per_plan: (!steps.is_empty())
            .then(|| steps.iter().sum::<usize>() as f64 / steps.len() as f64),
        rows,
    }
}

impl BenchReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table, one metric per row.
    pub fn render_table(&self) -> String {
        let na = |v: Option<f64>, digits: usize| match v {
            Some(x) => format!("{x:.digits$}"),
            None => "N/A".into(),
        };
        let rows = [
            ("Valid Execution Rate (%)", format!("{:.1}", self.valid_execution_rate)),
            ("First-Attempt Success (%)", format!("{:.1}", self.first_attempt_success)),
            ("Recovery via Retry (%)", na(self.recovery_via_retry, 1)),
            ("Average Steps per Plan", na(self.avg_steps_per_plan, 1)),
        ];
        let mut out = format!("{:<28}{}\n", "Metric", self.mode.as_str());
        for (name, value) in rows {
            out.push_str(&format!("{name:<28}{value}\n"));
        }
        out.push_str(&format!("({} queries)\n", self.queries));
        out
    }
}
