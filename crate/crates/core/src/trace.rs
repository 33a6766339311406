//! Machine-renderable failure descriptions and the stable error-code registry.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Every code a trace can carry. Codes are part of the refine-prompt contract;
/// never rename one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    MalformedObject,
    MissingKey,
    UnknownField,
    UnknownTransformationType,
    GrammarViolation,
    UnknownColumn,
    TypeMismatch,
    PlanMismatch,
    DivisionByZero,
    EmptyResult,
    EmptyAggregate,
    OutputShapeMismatch,
    NonNumericOutput,
    InsufficientData,
    ZeroVariance,
    EmptyCompletion,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 16] = [
        ErrorCode::MalformedObject,
        ErrorCode::MissingKey,
        ErrorCode::UnknownField,
        ErrorCode::UnknownTransformationType,
        ErrorCode::GrammarViolation,
        ErrorCode::UnknownColumn,
        ErrorCode::TypeMismatch,
        ErrorCode::PlanMismatch,
        ErrorCode::DivisionByZero,
        ErrorCode::EmptyResult,
        ErrorCode::EmptyAggregate,
        ErrorCode::OutputShapeMismatch,
        ErrorCode::NonNumericOutput,
        ErrorCode::InsufficientData,
        ErrorCode::ZeroVariance,
        ErrorCode::EmptyCompletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::MalformedObject => "MALFORMED_OBJECT",
            ErrorCode::MissingKey => "MISSING_KEY",
            ErrorCode::UnknownField => "UNKNOWN_FIELD",
            ErrorCode::UnknownTransformationType => "UNKNOWN_TRANSFORMATION_TYPE",
            ErrorCode::GrammarViolation => "GRAMMAR_VIOLATION",
            ErrorCode::UnknownColumn => "UNKNOWN_COLUMN",
            ErrorCode::TypeMismatch => "TYPE_MISMATCH",
            ErrorCode::PlanMismatch => "PLAN_MISMATCH",
            ErrorCode::DivisionByZero => "DIVISION_BY_ZERO",
            ErrorCode::EmptyResult => "EMPTY_RESULT",
            ErrorCode::EmptyAggregate => "EMPTY_AGGREGATE",
            ErrorCode::OutputShapeMismatch => "OUTPUT_SHAPE_MISMATCH",
            ErrorCode::NonNumericOutput => "NON_NUMERIC_OUTPUT",
            ErrorCode::InsufficientData => "INSUFFICIENT_DATA",
            ErrorCode::ZeroVariance => "ZERO_VARIANCE",
            ErrorCode::EmptyCompletion => "EMPTY_COMPLETION",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Step indices are 1-based positions in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub code: ErrorCode,
    pub message: String,
    pub step_index: Option<usize>,
    pub offending_symbol: Option<String>,
    #[serde(default)]
    pub suggestions: Vec<String>,
}

impl ErrorTrace {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            step_index: None,
            offending_symbol: None,
            suggestions: Vec::new(),
        }
    }

    pub fn at_step(mut self, step: usize) -> Self {
        self.step_index = Some(step);
        self
    }

    pub fn with_symbol(mut self, symbol: impl Into<String>) -> Self {
        self.offending_symbol = Some(symbol.into());
        self
    }

    pub fn with_suggestions(mut self, suggestions: Vec<String>) -> Self {
        self.suggestions = suggestions;
        self
    }
}

impl fmt::Display for ErrorTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Single-screen block naming the point of failure. Byte-deterministic.
pub fn render_error(trace: &ErrorTrace) -> String {
    let mut out = format!("error[{}]: {}\n", trace.code, trace.message);
    if let Some(step) = trace.step_index {
        out.push_str(&format!("  step: {step}\n"));
    }
    if let Some(symbol) = &trace.offending_symbol {
        out.push_str(&format!("  symbol: '{symbol}'\n"));
    }
    if !trace.suggestions.is_empty() {
        let quoted: Vec<String> = trace.suggestions.iter().map(|s| format!("'{s}'")).collect();
        out.push_str(&format!("  did you mean: {}\n", quoted.join(", ")));
    }
    out
}
