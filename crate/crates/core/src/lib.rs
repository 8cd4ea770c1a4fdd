//! Points-to analysis workbench for a small C-like language.
//!
//! Three analyses over one lowered IR: Andersen-style flow-insensitive
//! ([`andersen`]), flow-sensitive with function summaries ([`flow`]), and
//! flow- plus context-sensitive via value contexts ([`contexts`]). A bounded
//! concrete interpreter ([`oracle`]) provides ground truth, [`compare`]
//! buckets every dereference point by relative precision, and [`patterns`]
//! detects the code shapes that explain the differences and recommends the
//! cheapest sufficient analysis.

pub mod andersen;
pub mod ast;
pub mod compare;
pub mod contexts;
pub mod diag;
pub mod fixtures;
pub mod flow;
pub mod ir;
pub mod lexer;
pub mod lower;
pub mod memory;
pub mod oracle;
pub mod parser;
pub mod patterns;
pub mod pipeline;
pub mod report;
pub mod testgen;

use ast::Span;
use thiserror::Error as ThisError;

#[derive(Debug, Clone, ThisError)]
pub enum Error {
    #[error("{file}:{line}:{col}: syntax error: {msg}")]
    Syntax { file: String, line: u32, col: u32, msg: String },

    #[error("{file}:{line}:{col}: error: {msg}")]
    Semantic { file: String, line: u32, col: u32, msg: String },

    #[error("{analysis} exceeded its {what} budget of {limit}: {detail}")]
    BudgetExceeded { analysis: &'static str, what: &'static str, limit: u64, detail: String },

    /// An engine produced sets violating `CS ⊆ FS ⊆ FIS`; a soundness bug.
    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub fn syntax(file: &str, span: Span, msg: impl Into<String>) -> Self {
        Error::Syntax { file: file.to_string(), line: span.line, col: span.col, msg: msg.into() }
    }

    pub fn semantic(file: &str, span: Span, msg: impl Into<String>) -> Self {
        Error::Semantic { file: file.to_string(), line: span.line, col: span.col, msg: msg.into() }
    }

    /// Process exit status for the CLI: 1 usage/parse, 2 budget, 3 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Syntax { .. } | Error::Semantic { .. } | Error::Io(_) => 1,
            Error::BudgetExceeded { .. } => 2,
            Error::InvariantViolation(_) => 3,
        }
    }
}

pub use ast::{SourceFile, SourceProgram};
pub use ir::{enumerate_pois, MemLoc, PoISite, ProgramIR};
pub use lower::compile;
pub use memory::{default_init, leq, meet_maps, FlowValue, PointsToMap};
