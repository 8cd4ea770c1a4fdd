//! The bundled fixture corpus P1–P6, each isolating one precision story.
//!
//! - P1: uninitialized global pointer assigned once before its dereference.
//! - P2: local pointer initialized at declaration.
//! - P3: formal pointer receiving the same actual at every call site.
//! - P4: formal pointer receiving different actuals at different call sites.
//! - P5: P4 plus a conditional reassignment of the formal before a
//!   dereference in the other branch.
//! - P6: heap allocation named by its source line.

use crate::ast::SourceProgram;
use crate::ir::ProgramIR;
use crate::lower::compile;

pub const P1: &str = include_str!("../fixtures/P1.mc");
pub const P2: &str = include_str!("../fixtures/P2.mc");
pub const P3: &str = include_str!("../fixtures/P3.mc");
pub const P4: &str = include_str!("../fixtures/P4.mc");
pub const P5: &str = include_str!("../fixtures/P5.mc");
pub const P6: &str = include_str!("../fixtures/P6.mc");

/// Line of the `malloc` call in P6; names the abstract heap cell.
pub const P6_MALLOC_LINE: u32 = 2;

pub fn all() -> [(&'static str, &'static str); 6] {
    [("P1", P1), ("P2", P2), ("P3", P3), ("P4", P4), ("P5", P5), ("P6", P6)]
}

pub fn source(name: &str, text: &str) -> SourceProgram {
    SourceProgram::single(format!("{name}.mc"), text)
}

pub fn ir(name: &str) -> ProgramIR {
    let (_, text) = all().into_iter().find(|(n, _)| *n == name).expect("known fixture");
    compile(&source(name, text)).expect("fixtures compile")
}
