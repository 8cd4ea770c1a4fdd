//! Analysis diagnostics: side outputs that never alter points-to results.

use crate::ast::Span;
use crate::ir::{MemLoc, ProgramIR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagKind {
    /// A dereferenced pointer may be null.
    NullDeref,
    /// A dereferenced pointer may be uninitialized.
    UnknownDeref,
    /// An indirect call whose callee set holds no function.
    UnresolvableIndirectCall,
    /// A PoI inside a function no analyzed context ever reaches.
    UnreachableFunction,
    /// Oracle path stopped at the recursion bound.
    PathTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub span: Span,
    pub kind: DiagKind,
    pub key: MemLoc,
}

impl Diagnostic {
    pub fn render(&self, ir: &ProgramIR) -> String {
        let what = match self.kind {
            DiagKind::NullDeref => "possible null dereference of",
            DiagKind::UnknownDeref => "possible dereference of uninitialized",
            DiagKind::UnresolvableIndirectCall => "unresolvable indirect call through",
            DiagKind::UnreachableFunction => "dereference in never-analyzed function via",
            DiagKind::PathTruncated => "path truncated at recursion bound near",
        };
        format!(
            "{}:{}:{}: {} `{}`",
            ir.file_name(self.span),
            self.span.line,
            self.span.col,
            what,
            ir.loc_name(self.key)
        )
    }
}
