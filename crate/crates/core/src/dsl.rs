//! The transformation program language the model writes instead of code.
//!
//! A program is a JSON object `{"pipeline": [...], "output": {...}}`. Parsing
//! validates step order, resolves every column against the schema as it flows
//! through the pipeline, and checks numeric typing, so an accepted program can
//! only fail at run time on data-dependent conditions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::first_object;
use crate::plan::{AnalysisPlan, TransformationType};
use crate::profiler::{SchemaContext, SemanticType};
use crate::suggest::nearest_names;
use crate::trace::{ErrorCode, ErrorTrace};

/// Frozen wire-format description embedded verbatim in synthesis prompts.
pub const DSL_SCHEMA_V1: &str = include_str!("dsl_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Literal {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Literal::Text(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    And { and: Vec<Predicate> },
    Or { or: Vec<Predicate> },
    Not { not: Box<Predicate> },
    Compare {
        column: String,
        cmp: CmpOp,
        value: Literal,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberLiteral {
    Integer(i64),
    Real(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Column { col: String },
    Literal { lit: NumberLiteral },
    Add { add: (Box<Expr>, Box<Expr>) },
    Sub { sub: (Box<Expr>, Box<Expr>) },
    Mul { mul: (Box<Expr>, Box<Expr>) },
    Div { div: (Box<Expr>, Box<Expr>) },
}

impl Expr {
    pub fn column(name: impl Into<String>) -> Self {
        Expr::Column { col: name.into() }
    }

    pub fn binary(op: ArithOp, left: Expr, right: Expr) -> Self {
        let pair = (Box::new(left), Box::new(right));
        match op {
            ArithOp::Add => Expr::Add { add: pair },
            ArithOp::Sub => Expr::Sub { sub: pair },
            ArithOp::Mul => Expr::Mul { mul: pair },
            ArithOp::Div => Expr::Div { div: pair },
        }
    }

    /// Operator and operands for binary nodes.
    pub fn as_binary(&self) -> Option<(ArithOp, &Expr, &Expr)> {
        match self {
            Expr::Add { add: (l, r) } => Some((ArithOp::Add, l, r)),
            Expr::Sub { sub: (l, r) } => Some((ArithOp::Sub, l, r)),
            Expr::Mul { mul: (l, r) } => Some((ArithOp::Mul, l, r)),
            Expr::Div { div: (l, r) } => Some((ArithOp::Div, l, r)),
            _ => None,
        }
    }

    fn columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column { col } => out.push(col),
            Expr::Literal { .. } => {}
            _ => {
                let (_, l, r) = self.as_binary().expect("binary node");
                l.columns(out);
                r.columns(out);
            }
        }
    }
}

impl Predicate {
    fn visit<'a>(&'a self, out: &mut Vec<(&'a str, &'a Literal)>) {
        match self {
            Predicate::And { and: ps } | Predicate::Or { or: ps } => {
                ps.iter().for_each(|p| p.visit(out))
            }
            Predicate::Not { not } => not.visit(out),
            Predicate::Compare { column, value, .. } => out.push((column, value)),
        }
    }

    fn has_empty_connective(&self) -> bool {
        match self {
            Predicate::And { and: ps } | Predicate::Or { or: ps } => {
                ps.is_empty() || ps.iter().any(Predicate::has_empty_connective)
            }
            Predicate::Not { not } => not.has_empty_connective(),
            Predicate::Compare { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Sum,
    Mean,
    Min,
    Max,
    Count,
}

impl AggFn {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Mean => "mean",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Count => "count",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregation {
    pub column: String,
    pub agg: AggFn,
    pub alias: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    Select {
        columns: Vec<String>,
    },
    Filter {
        predicate: Predicate,
    },
    Derive {
        name: String,
        expr: Expr,
    },
    GroupBy {
        keys: Vec<String>,
        aggregations: Vec<Aggregation>,
    },
    Sort {
        key: String,
        direction: Direction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tiebreak: Option<String>,
    },
    Limit {
        count: u64,
    },
}

impl Step {
    pub fn tag(&self) -> &'static str {
        match self {
            Step::Select { .. } => "select",
            Step::Filter { .. } => "filter",
            Step::Derive { .. } => "derive",
            Step::GroupBy { .. } => "group_by",
            Step::Sort { .. } => "sort",
            Step::Limit { .. } => "limit",
        }
    }

    /// Position in `select? filter* derive* group_by? sort? limit?` and whether
    /// the slot repeats.
    fn slot(&self) -> (u8, bool) {
        match self {
            Step::Select { .. } => (0, false),
            Step::Filter { .. } => (1, true),
            Step::Derive { .. } => (2, true),
            Step::GroupBy { .. } => (3, false),
            Step::Sort { .. } => (4, false),
            Step::Limit { .. } => (5, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub label: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum OutputSpec {
    ChartSeries {
        label_column: String,
        series: Vec<SeriesSpec>,
    },
    Table {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        columns: Option<Vec<String>>,
    },
    Correlation {
        column_a: String,
        column_b: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("no valid program object: {0}")]
    MalformedObject(String),
    #[error("step {step}: {reason}")]
    GrammarViolation { step: usize, reason: String },
    #[error("unknown column '{name}'")]
    UnknownColumn {
        name: String,
        suggestions: Vec<String>,
        step: Option<usize>,
    },
    #[error("column '{column}' is {found}, expected {expected}", found = found.as_str(), expected = expected.as_str())]
    TypeMismatch {
        column: String,
        expected: SemanticType,
        found: SemanticType,
        step: Option<usize>,
    },
}

impl ProgramError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ProgramError::MalformedObject(_) => ErrorCode::MalformedObject,
            ProgramError::GrammarViolation { .. } => ErrorCode::GrammarViolation,
            ProgramError::UnknownColumn { .. } => ErrorCode::UnknownColumn,
            ProgramError::TypeMismatch { .. } => ErrorCode::TypeMismatch,
        }
    }

    pub fn to_trace(&self) -> ErrorTrace {
        let mut trace = ErrorTrace::new(self.code(), self.to_string());
        match self {
            ProgramError::MalformedObject(_) => {}
            ProgramError::GrammarViolation { step, .. } => trace = trace.at_step(*step),
            ProgramError::UnknownColumn {
                name,
                suggestions,
                step,
            } => {
                trace = trace.with_symbol(name.clone()).with_suggestions(suggestions.clone());
                trace.step_index = *step;
            }
            ProgramError::TypeMismatch { column, step, .. } => {
                trace = trace.with_symbol(column.clone());
                trace.step_index = *step;
            }
        }
        trace
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("program does not implement the plan: {detail}")]
pub struct PlanMismatch {
    pub detail: String,
    pub columns: Vec<String>,
}

impl PlanMismatch {
    pub fn to_trace(&self) -> ErrorTrace {
        let mut trace = ErrorTrace::new(ErrorCode::PlanMismatch, self.to_string());
        if let Some(first) = self.columns.first() {
            trace = trace.with_symbol(first.clone());
        }
        trace
    }
}

/// A validated program. Only [`TransformProgram::new`] and [`parse_program`]
/// construct one, so the recorded input column kinds always match the schema it
/// was checked against.
#[derive(Debug, Clone, Serialize)]
pub struct TransformProgram {
    pipeline: Vec<Step>,
    output: OutputSpec,
    #[serde(skip)]
    input_kinds: BTreeMap<String, SemanticType>,
}

impl PartialEq for TransformProgram {
    fn eq(&self, other: &Self) -> bool {
        self.pipeline == other.pipeline && self.output == other.output
    }
}

#[derive(Deserialize)]
struct ProgramDoc {
    pipeline: Vec<Step>,
    output: OutputSpec,
}

type Schema = Vec<(String, SemanticType)>;

struct Resolver {
    schema: Schema,
    step: Option<usize>,
}

impl Resolver {
    fn kind(&self, name: &str) -> Result<SemanticType, ProgramError> {
        self.schema
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, k)| *k)
            .ok_or_else(|| ProgramError::UnknownColumn {
                name: name.to_string(),
                suggestions: nearest_names(name, self.schema.iter().map(|(n, _)| n.as_str())),
                step: self.step,
            })
    }

    fn numeric(&self, name: &str) -> Result<(), ProgramError> {
        let found = self.kind(name)?;
        if found != SemanticType::Numerical {
            return Err(ProgramError::TypeMismatch {
                column: name.to_string(),
                expected: SemanticType::Numerical,
                found,
                step: self.step,
            });
        }
        Ok(())
    }

    fn grammar(&self, reason: impl Into<String>) -> ProgramError {
        ProgramError::GrammarViolation {
            step: self.step.unwrap_or(0),
            reason: reason.into(),
        }
    }

    fn fresh_name(&self, name: &str, taken: &[&str]) -> Result<(), ProgramError> {
        if name.trim().is_empty() {
            return Err(self.grammar("new column names must be nonempty"));
        }
        if self.schema.iter().any(|(n, _)| n == name) || taken.contains(&name) {
            return Err(self.grammar(format!("column '{name}' already exists")));
        }
        Ok(())
    }
}

fn check_order(pipeline: &[Step]) -> Result<(), ProgramError> {
    if pipeline.is_empty() {
        return Err(ProgramError::GrammarViolation {
            step: 0,
            reason: "pipeline must contain at least one step".into(),
        });
    }
    let mut last: Option<(u8, &str)> = None;
    for (i, step) in pipeline.iter().enumerate() {
        let (slot, repeats) = step.slot();
        if let Some((prev, prev_tag)) = last {
            if slot < prev || (slot == prev && !repeats) {
                return Err(ProgramError::GrammarViolation {
                    step: i + 1,
                    reason: format!(
                        "'{}' cannot follow '{}'; required order is select? filter* derive* group_by? sort? limit?",
                        step.tag(),
                        prev_tag
                    ),
                });
            }
        }
        last = Some((slot, step.tag()));
    }
    Ok(())
}

impl TransformProgram {
    pub fn new(
        pipeline: Vec<Step>,
        output: OutputSpec,
        context: &SchemaContext,
    ) -> Result<Self, ProgramError> {
        check_order(&pipeline)?;
        let mut r = Resolver {
            schema: context
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.semantic_type))
                .collect(),
            step: None,
        };

        for (i, step) in pipeline.iter().enumerate() {
            r.step = Some(i + 1);
            match step {
                Step::Select { columns } => {
                    if columns.is_empty() {
                        return Err(r.grammar("select needs at least one column"));
                    }
                    let mut next = Schema::new();
                    for c in columns {
                        let kind = r.kind(c)?;
                        if next.iter().any(|(n, _)| n == c) {
                            return Err(r.grammar(format!("column '{c}' selected twice")));
                        }
                        next.push((c.clone(), kind));
                    }
                    r.schema = next;
                }
                Step::Filter { predicate } => {
                    if predicate.has_empty_connective() {
                        return Err(r.grammar("'and'/'or' need at least one operand"));
                    }
                    let mut cmps = Vec::new();
                    predicate.visit(&mut cmps);
                    for (column, literal) in cmps {
                        if literal.is_numeric() {
                            r.numeric(column)?;
                        } else {
                            r.kind(column)?;
                        }
                    }
                }
                Step::Derive { name, expr } => {
                    r.fresh_name(name, &[])?;
                    let mut cols = Vec::new();
                    expr.columns(&mut cols);
                    for c in cols {
                        r.numeric(c)?;
                    }
                    r.schema.push((name.clone(), SemanticType::Numerical));
                }
                Step::GroupBy { keys, aggregations } => {
                    if keys.is_empty() && aggregations.is_empty() {
                        return Err(r.grammar("group_by needs keys or aggregations"));
                    }
                    let mut next = Schema::new();
                    for k in keys {
                        let kind = r.kind(k)?;
                        if next.iter().any(|(n, _)| n == k) {
                            return Err(r.grammar(format!("key '{k}' listed twice")));
                        }
                        next.push((k.clone(), kind));
                    }
                    let mut aliases: Vec<&str> = Vec::new();
                    for a in aggregations {
                        if a.agg == AggFn::Count {
                            r.kind(&a.column)?;
                        } else {
                            r.numeric(&a.column)?;
                        }
                        if a.alias.trim().is_empty() {
                            return Err(r.grammar("aggregation alias must be nonempty"));
                        }
                        if keys.contains(&a.alias) || aliases.contains(&a.alias.as_str()) {
                            return Err(r.grammar(format!("alias '{}' collides with another output column", a.alias)));
                        }
                        aliases.push(&a.alias);
                    }
                    for a in aggregations {
                        next.push((a.alias.clone(), SemanticType::Numerical));
                    }
                    r.schema = next;
                }
                Step::Sort { key, tiebreak, .. } => {
                    r.kind(key)?;
                    if let Some(t) = tiebreak {
                        r.kind(t)?;
                    }
                }
                Step::Limit { count } => {
                    if *count == 0 {
                        return Err(r.grammar("limit count must be a positive integer"));
                    }
                }
            }
        }

        r.step = None;
        match &output {
            OutputSpec::ChartSeries {
                label_column,
                series,
            } => {
                r.kind(label_column)?;
                if series.is_empty() {
                    return Err(ProgramError::GrammarViolation {
                        step: pipeline.len(),
                        reason: "chart_series output needs at least one series".into(),
                    });
                }
                for s in series {
                    r.numeric(&s.column)?;
                }
            }
            OutputSpec::Table { columns } => {
                if let Some(cols) = columns {
                    if cols.is_empty() {
                        return Err(ProgramError::GrammarViolation {
                            step: pipeline.len(),
                            reason: "table output column list must be nonempty when given".into(),
                        });
                    }
                    for c in cols {
                        r.kind(c)?;
                    }
                }
            }
            OutputSpec::Correlation { column_a, column_b } => {
                r.numeric(column_a)?;
                r.numeric(column_b)?;
            }
        }

        Ok(Self {
            pipeline,
            output,
            input_kinds: context
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.semantic_type))
                .collect(),
        })
    }

    pub fn pipeline(&self) -> &[Step] {
        &self.pipeline
    }

    pub fn output(&self) -> &OutputSpec {
        &self.output
    }

    /// Semantic type of an input column as seen at validation time.
    pub fn input_kind(&self, column: &str) -> Option<SemanticType> {
        self.input_kinds.get(column).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    /// Input columns the program reads, in first-reference order. Names the
    /// program itself introduces (derive names, aggregation aliases) are excluded.
    pub fn input_columns(&self) -> Vec<String> {
        let mut introduced: Vec<&str> = Vec::new();
        let mut out: Vec<String> = Vec::new();
        let mut note = |name: &str, introduced: &Vec<&str>| {
            if !introduced.contains(&name) && !out.iter().any(|o| o == name) {
                out.push(name.to_string());
            }
        };
        for step in &self.pipeline {
            match step {
                Step::Select { columns } => columns.iter().for_each(|c| note(c, &introduced)),
                Step::Filter { predicate } => {
                    let mut cmps = Vec::new();
                    predicate.visit(&mut cmps);
                    cmps.iter().for_each(|(c, _)| note(c, &introduced));
                }
                Step::Derive { name, expr } => {
                    let mut cols = Vec::new();
                    expr.columns(&mut cols);
                    cols.iter().for_each(|c| note(c, &introduced));
                    introduced.push(name);
                }
                Step::GroupBy { keys, aggregations } => {
                    keys.iter().for_each(|c| note(c, &introduced));
                    for a in aggregations {
                        note(&a.column, &introduced);
                    }
                    for a in aggregations {
                        introduced.push(&a.alias);
                    }
                }
                Step::Sort { key, tiebreak, .. } => {
                    note(key, &introduced);
                    if let Some(t) = tiebreak {
                        note(t, &introduced);
                    }
                }
                Step::Limit { .. } => {}
            }
        }
        match &self.output {
            OutputSpec::ChartSeries {
                label_column,
                series,
            } => {
                note(label_column, &introduced);
                series.iter().for_each(|s| note(&s.column, &introduced));
            }
            OutputSpec::Table { columns } => {
                if let Some(cols) = columns {
                    cols.iter().for_each(|c| note(c, &introduced));
                }
            }
            OutputSpec::Correlation { column_a, column_b } => {
                note(column_a, &introduced);
                note(column_b, &introduced);
            }
        }
        out
    }

    fn has_step(&self, tag: &str) -> bool {
        self.pipeline.iter().any(|s| s.tag() == tag)
    }
}

impl fmt::Display for TransformProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

pub fn parse_program(raw: &str, context: &SchemaContext) -> Result<TransformProgram, ProgramError> {
    let object_text = first_object(raw)
        .ok_or_else(|| ProgramError::MalformedObject("expected a JSON object".into()))?;
    let doc: ProgramDoc = serde_json::from_str(object_text)
        .map_err(|e| ProgramError::MalformedObject(e.to_string()))?;
    TransformProgram::new(doc.pipeline, doc.output, context)
}

/// Consistency between a program and the plan it should implement.
///
/// | plan type  | program must contain          |
/// |------------|-------------------------------|
/// | group      | a group_by step               |
/// | rank       | a sort step                   |
/// | filter     | a filter step                 |
/// | trend      | a group_by or a sort step     |
/// | correlate  | a correlation output          |
/// | summary    | no constraint                 |
pub fn validate_against_plan(
    program: &TransformProgram,
    plan: &AnalysisPlan,
) -> Result<(), PlanMismatch> {
    let stray: Vec<String> = program
        .input_columns()
        .into_iter()
        .filter(|c| !plan.fields_used.contains(c))
        .collect();
    if !stray.is_empty() {
        return Err(PlanMismatch {
            detail: format!(
                "program uses columns not listed in the plan's fields_used: {}",
                stray.iter().map(|c| format!("'{c}'")).collect::<Vec<_>>().join(", ")
            ),
            columns: stray,
        });
    }
    let (ok, wanted) = match plan.transformation_type {
        TransformationType::Group => (program.has_step("group_by"), "a group_by step"),
        TransformationType::Rank => (program.has_step("sort"), "a sort step"),
        TransformationType::Filter => (program.has_step("filter"), "a filter step"),
        TransformationType::Trend => (
            program.has_step("group_by") || program.has_step("sort"),
            "a group_by or sort step",
        ),
        TransformationType::Correlate => (
            matches!(program.output, OutputSpec::Correlation { .. }),
            "a correlation output",
        ),
        TransformationType::Summary => (true, ""),
    };
    if !ok {
        return Err(PlanMismatch {
            detail: format!(
                "plan type '{}' requires {wanted}",
                plan.transformation_type.as_str()
            ),
            columns: Vec::new(),
        });
    }
    Ok(())
}
