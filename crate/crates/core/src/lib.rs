//! Schema-aware planning, DSL synthesis and feedback-driven refinement for
//! natural-language questions over tabular data.
//!
//! A session profiles a [`Dataset`] into a [`SchemaContext`], asks a
//! [`CompletionBackend`] for an [`AnalysisPlan`], then for a
//! [`TransformProgram`] in a small JSON pipeline language, and runs that
//! program with a deterministic executor. Failed programs are sent back with
//! a structured error trace until they run or the refine budget runs out.

pub mod backend;
pub mod bench;
pub mod dataset;
pub mod dsl;
pub mod executor;
pub mod extract;
pub mod orchestrator;
pub mod plan;
pub mod profiler;
pub mod prompt;
pub mod suggest;
pub mod trace;

pub use backend::{CompletionBackend, DecodingPolicy};
pub use dataset::{Cell, Column, CsvOptions, Dataset};
pub use dsl::{parse_program, TransformProgram};
pub use executor::{execute, pearson, ResultPayload};
pub use orchestrator::{run_query, Outcome, SessionConfig, SessionTranscript};
pub use plan::{parse_plan, AnalysisPlan, UserQuery};
pub use profiler::{build_context, SchemaContext};
pub use trace::{render_error, ErrorCode, ErrorTrace};
