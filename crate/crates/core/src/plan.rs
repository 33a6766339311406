//! Planning stage: scaffolded prompt rendering and validated plan parsing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::DecodingPolicy;
use crate::extract::first_object;
use crate::profiler::{Bounds, ColumnContext, SchemaContext, SemanticType};
use crate::prompt::{Prompt, Stage};
use crate::suggest::nearest_names;
use crate::trace::{ErrorCode, ErrorTrace};

pub const SECTION_SCHEMA: &str = "Schema Metadata";
pub const SECTION_INSTRUCTION: &str = "User Instruction";
pub const SECTION_FORMAT: &str = "Output Format Constraint";
pub const USER_GOAL_PREFIX: &str = "User Goal:";

pub const PLAN_KEYS: [&str; 4] = ["steps", "fields_used", "transformation_type", "description"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("query is empty")]
pub struct InvalidQuery;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserQuery(String);

impl UserQuery {
    pub fn new(text: impl Into<String>) -> Result<Self, InvalidQuery> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(InvalidQuery);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformationType {
    Summary,
    Filter,
    Group,
    Rank,
    Trend,
    Correlate,
}

impl TransformationType {
    pub const ALL: [TransformationType; 6] = [
        TransformationType::Summary,
        TransformationType::Filter,
        TransformationType::Group,
        TransformationType::Rank,
        TransformationType::Trend,
        TransformationType::Correlate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformationType::Summary => "summary",
            TransformationType::Filter => "filter",
            TransformationType::Group => "group",
            TransformationType::Rank => "rank",
            TransformationType::Trend => "trend",
            TransformationType::Correlate => "correlate",
        }
    }
}

/// Free-text transformation names accepted from the model, normalized by
/// lower-casing and collapsing `-`, `_` and whitespace to single spaces.
#[derive(Debug, Clone)]
pub struct TransformationVocabulary {
    synonyms: BTreeMap<String, TransformationType>,
}

fn normalize_term(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

impl Default for TransformationVocabulary {
    fn default() -> Self {
        use TransformationType::*;
        let table: &[(&str, TransformationType)] = &[
            ("summary", Summary),
            ("summarize", Summary),
            ("summarise", Summary),
            ("describe", Summary),
            ("overview", Summary),
            ("filter", Filter),
            ("filtering", Filter),
            ("subset", Filter),
            ("selection", Filter),
            ("group", Group),
            ("grouping", Group),
            ("group by", Group),
            ("groupby", Group),
            ("aggregate", Group),
            ("aggregation", Group),
            ("rank", Rank),
            ("ranking", Rank),
            ("top k", Rank),
            ("topk", Rank),
            ("top n", Rank),
            ("sort", Rank),
            ("trend", Trend),
            ("time series", Trend),
            ("timeseries", Trend),
            ("temporal", Trend),
            ("correlate", Correlate),
            ("correlation", Correlate),
            ("relationship", Correlate),
        ];
        let mut vocab = Self {
            synonyms: BTreeMap::new(),
        };
        for (term, ty) in table {
            vocab.insert(term, *ty);
        }
        vocab
    }
}

impl TransformationVocabulary {
    pub fn insert(&mut self, term: &str, ty: TransformationType) {
        self.synonyms.insert(normalize_term(term), ty);
    }

    pub fn resolve(&self, text: &str) -> Option<TransformationType> {
        self.synonyms.get(&normalize_term(text)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub steps: Vec<String>,
    pub fields_used: Vec<String>,
    pub transformation_type: TransformationType,
    pub description: String,
    /// Parse-time notes such as ignored extra keys. Not part of the wire object.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl AnalysisPlan {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

pub fn plan_step_count(plan: &AnalysisPlan) -> usize {
    plan.steps.len()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no valid JSON object found: {0}")]
    MalformedObject(String),
    #[error("plan is missing required key '{0}'")]
    MissingKey(String),
    #[error("plan references unknown field '{name}'")]
    UnknownField { name: String, suggestions: Vec<String> },
    #[error("unknown transformation_type '{0}'")]
    UnknownTransformationType(String),
}

impl PlanError {
    pub fn code(&self) -> ErrorCode {
        match self {
            PlanError::MalformedObject(_) => ErrorCode::MalformedObject,
            PlanError::MissingKey(_) => ErrorCode::MissingKey,
            PlanError::UnknownField { .. } => ErrorCode::UnknownField,
            PlanError::UnknownTransformationType(_) => ErrorCode::UnknownTransformationType,
        }
    }

    pub fn to_trace(&self) -> ErrorTrace {
        let trace = ErrorTrace::new(self.code(), self.to_string());
        match self {
            PlanError::MalformedObject(_) => trace,
            PlanError::MissingKey(k) => trace.with_symbol(k.clone()),
            PlanError::UnknownField { name, suggestions } => trace
                .with_symbol(name.clone())
                .with_suggestions(suggestions.clone()),
            PlanError::UnknownTransformationType(t) => trace.with_symbol(t.clone()).with_suggestions(
                TransformationType::ALL
                    .iter()
                    .map(|t| t.as_str().to_string())
                    .collect(),
            ),
        }
    }
}

pub(crate) fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// One annotated key-value line per column. A zero null rate is left out.
pub fn render_column_line(col: &ColumnContext) -> String {
    let sig = &col.signature;
    let mut line = format!(
        "{}: {}; distinct={}",
        col.name,
        col.semantic_type.as_str(),
        sig.cardinality,
    );
    if sig.null_rate > 0.0 {
        line.push_str(&format!("; null={}", fmt_number(sig.null_rate)));
    }
    match &sig.bounds {
        Some(Bounds::Numeric { min, max }) => {
            line.push_str(&format!("; range={}..{}", fmt_number(*min), fmt_number(*max)))
        }
        Some(Bounds::Temporal { min, max }) => line.push_str(&format!("; range={min}..{max}")),
        None => {}
    }
    if col.semantic_type != SemanticType::Numerical {
        line.push_str(&format!("; entropy={}", fmt_number(sig.entropy)));
    }
    if let Some(skew) = sig.skew {
        line.push_str(&format!("; skew={}", fmt_number(skew)));
    }
    for w in &sig.warnings {
        line.push_str(&format!("; warning={w}"));
    }
    line.push_str(&format!("; e.g. {}", col.samples.join("|")));
    line
}

/// Flattened schema block. `only` restricts and orders nothing: columns keep
/// dataset order and are filtered by membership.
pub fn render_schema_metadata(context: &SchemaContext, only: Option<&[String]>) -> String {
    let mut out = format!("dataset: {} (null rate 0 unless shown)\n", context.dataset_name);
    for col in &context.columns {
        if only.is_some_and(|names| !names.iter().any(|n| n == &col.name)) {
            continue;
        }
        out.push_str(&render_column_line(col));
        out.push('\n');
    }
    out
}

pub fn plan_format_constraint() -> String {
    let types: Vec<&str> = TransformationType::ALL.iter().map(|t| t.as_str()).collect();
    format!(
        "Return only a valid JSON object with exactly the keys \"steps\" (ordered list of strings), \"fields_used\" (column names exactly as listed above), \"transformation_type\" (one of: {}) and \"description\" (one sentence). No prose or commentary.",
        types.join(", ")
    )
}

pub fn render_plan_prompt(
    context: &SchemaContext,
    query: &UserQuery,
    policy: &DecodingPolicy,
) -> Prompt {
    render_plan_prompt_with_feedback(context, query, policy, None)
}

/// Plan prompt that also carries the rejected previous answer and why it was
/// rejected. The feedback rides inside the instruction section so the plan
/// prompt keeps its three sections.
pub fn render_plan_prompt_with_feedback(
    context: &SchemaContext,
    query: &UserQuery,
    policy: &DecodingPolicy,
    feedback: Option<(&str, &str)>,
) -> Prompt {
    let mut instruction = format!("{USER_GOAL_PREFIX} {}", query.as_str());
    if let Some((previous, error)) = feedback {
        instruction.push_str(&format!(
            "\n\nYour previous plan was rejected:\n{}\nPrevious plan:\n{}",
            error.trim_end(),
            previous.trim()
        ));
    }
    Prompt::new(Stage::Plan, policy.temperature_for(Stage::Plan))
        .section(SECTION_SCHEMA, render_schema_metadata(context, None))
        .section(SECTION_INSTRUCTION, instruction)
        .section(SECTION_FORMAT, plan_format_constraint())
}

pub fn parse_plan(raw: &str, context: &SchemaContext) -> Result<AnalysisPlan, PlanError> {
    parse_plan_with(raw, context, &TransformationVocabulary::default())
}

fn string_list(value: &serde_json::Value, key: &str) -> Result<Vec<String>, PlanError> {
    let items = value
        .as_array()
        .ok_or_else(|| PlanError::MalformedObject(format!("'{key}' must be a list of strings")))?;
    let list: Vec<String> = items
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect::<Option<_>>()
        .ok_or_else(|| PlanError::MalformedObject(format!("'{key}' must be a list of strings")))?;
    if list.is_empty() {
        return Err(PlanError::MalformedObject(format!("'{key}' must not be empty")));
    }
    Ok(list)
}

pub fn parse_plan_with(
    raw: &str,
    context: &SchemaContext,
    vocabulary: &TransformationVocabulary,
) -> Result<AnalysisPlan, PlanError> {
    let object_text = first_object(raw)
        .ok_or_else(|| PlanError::MalformedObject("expected a JSON object".into()))?;
    let value: serde_json::Value = serde_json::from_str(object_text)
        .map_err(|e| PlanError::MalformedObject(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| PlanError::MalformedObject("expected a JSON object".into()))?;

    for key in PLAN_KEYS {
        if !object.contains_key(key) {
            return Err(PlanError::MissingKey(key.to_string()));
        }
    }
    let warnings: Vec<String> = object
        .keys()
        .filter(|k| !PLAN_KEYS.contains(&k.as_str()))
        .map(|k| format!("ignored extra key '{k}'"))
        .collect();

    let steps = string_list(&object["steps"], "steps")?;
    let fields_used = string_list(&object["fields_used"], "fields_used")?;
    let ty_text = object["transformation_type"].as_str().ok_or_else(|| {
        PlanError::MalformedObject("'transformation_type' must be a string".into())
    })?;
    let transformation_type = vocabulary
        .resolve(ty_text)
        .ok_or_else(|| PlanError::UnknownTransformationType(ty_text.to_string()))?;
    let description = object["description"]
        .as_str()
        .ok_or_else(|| PlanError::MalformedObject("'description' must be a string".into()))?
        .to_string();

    for field in &fields_used {
        if context.column(field).is_none() {
            return Err(PlanError::UnknownField {
                name: field.clone(),
                suggestions: nearest_names(field, context.column_names()),
            });
        }
    }

    Ok(AnalysisPlan {
        steps,
        fields_used,
        transformation_type,
        description,
        warnings,
    })
}
