//! Source model and abstract syntax for the subset language.
//!
//! The language is a small C subset: `int` scalars and pointers (any level),
//! structs with scalar/pointer fields, fixed-size arrays (treated as
//! monolithic cells downstream), const pointers, function pointers, heap
//! allocation via `malloc`/`calloc`/`alloc`, `if`/`while`, calls, and
//! returns. No casts, no pointer arithmetic, no goto.

use std::fmt;

/// One input file: a name (used in spans and reports) plus its text.
#[derive(Debug, Clone)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

/// A whole program: one or more files and the name of the entry function.
#[derive(Debug, Clone)]
pub struct SourceProgram {
    pub files: Vec<SourceFile>,
    pub entry_name: String,
}

impl SourceProgram {
    pub fn new(files: Vec<SourceFile>) -> Self {
        SourceProgram { files, entry_name: "main".to_string() }
    }

    pub fn single(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceProgram::new(vec![SourceFile { name: name.into(), text: text.into() }])
    }

    pub fn with_entry(mut self, entry: impl Into<String>) -> Self {
        self.entry_name = entry.into();
        self
    }
}

/// Source position: file index into [`SourceProgram::files`], 1-based line
/// and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub file: u32,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(file: u32, line: u32, col: u32) -> Self {
        Span { file, line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Base of a declared type, before name resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TyName {
    Int,
    Void,
    Struct(String),
    /// `int (*fp)(...)` — pointer to function.
    FnPtr,
}

/// A declared type: base, pointer depth, optional array length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TyExpr {
    pub base: TyName,
    pub ptr: u8,
    pub array_len: Option<u32>,
}

impl TyExpr {
    pub fn int() -> Self {
        TyExpr { base: TyName::Int, ptr: 0, array_len: None }
    }

    pub fn int_ptr(depth: u8) -> Self {
        TyExpr { base: TyName::Int, ptr: depth, array_len: None }
    }

    pub fn is_pointer(&self) -> bool {
        self.ptr > 0 && self.array_len.is_none()
    }
}

/// Variable declaration (global, local, formal, or struct field).
#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub ty: TyExpr,
    pub is_const: bool,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct StructDecl {
    pub name: String,
    pub fields: Vec<(String, TyExpr)>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct FuncDecl {
    pub name: String,
    pub ret: TyExpr,
    pub params: Vec<VarDecl>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

/// Parsed program, prior to type checking and lowering.
#[derive(Debug, Clone, Default)]
pub struct Ast {
    pub structs: Vec<StructDecl>,
    pub globals: Vec<VarDecl>,
    pub funcs: Vec<FuncDecl>,
}

impl Ast {
    pub fn func(&self, name: &str) -> Option<&FuncDecl> {
        self.funcs.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone)]
pub enum Stmt {
    /// Local declaration; only allowed before the first non-declaration
    /// statement of a function body (C89 style).
    LocalDecl(VarDecl),
    Assign { lhs: LValue, rhs: Expr, span: Span },
    /// Standalone call statement `f(args);` or `fp(args);`.
    Call { callee: String, args: Vec<Expr>, span: Span },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt>, span: Span },
    While { cond: Expr, body: Vec<Stmt>, span: Span },
    Return { value: Option<Expr>, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::LocalDecl(d) => d.span,
            Stmt::Assign { span, .. }
            | Stmt::Call { span, .. }
            | Stmt::If { span, .. }
            | Stmt::While { span, .. }
            | Stmt::Return { span, .. } => *span,
        }
    }
}

/// Assignable places. `a[i]` denotes the monolithic array cell; `*(LIT)`
/// is a dereference of a hard-coded address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Name(String),
    Deref(Box<LValue>),
    Field(String, String),
    Index(String, Box<Expr>),
    AddrLit(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Place(LValue),
    AddrOf(LValue),
    /// `malloc(size)` / `calloc(size)` / `alloc(size)`; the span's line
    /// names the abstract heap cell.
    Alloc { size: Box<Expr>, span: Span },
    Call { callee: String, args: Vec<Expr>, span: Span },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}
