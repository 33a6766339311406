//! Test support for the strot crates: a reference evaluator that mirrors the
//! executor's semantics row by row, random generators, and raw-input oracles.

pub mod compare;
pub mod fixtures;
pub mod gen;
pub mod oracle;
pub mod personas;
pub mod reference;

pub use compare::{close, compare};
pub use gen::{random_column, random_dataset, random_program};
pub use reference::{evaluate, RVal, RefResult};
