//! Lowered program representation.
//!
//! A [`ProgramIR`] is a program call graph (PCG) of functions, each holding a
//! control-flow graph whose nodes are canonical pointer assignments
//! (address-of `p=&a`, copy `p=q`, load `p=*q`, store `*p=q`), heap
//! allocations, calls, opaque branches, and no-ops. All aggregate accesses
//! are already disassembled: struct accesses name per-field locations and
//! array accesses name one monolithic cell per array.

use std::collections::BTreeSet;

use crate::ast::Span;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(FuncId);
id_type!(VarId);
id_type!(StructId);
id_type!(NodeId);
id_type!(PoiId);

pub const ENTRY: NodeId = NodeId(0);
pub const EXIT: NodeId = NodeId(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    Int,
    Struct(StructId),
    /// Pointer-to-function; `ptr` is 1 for a plain function pointer.
    FnPtr,
}

/// Resolved type of a variable or field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Type {
    pub base: Base,
    pub ptr: u8,
    pub is_array: bool,
}

impl Type {
    pub fn is_pointer(&self) -> bool {
        self.ptr > 0 && !self.is_array
    }
}

/// An abstract memory location.
///
/// Heap cells are named by the source line of their allocation call: all
/// allocations on one line collapse to a single summary location. `Null`
/// and `Unknown` are the default values of uninitialized globals and
/// locals respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemLoc {
    Var(VarId),
    /// Field of a struct variable: (owner, field index in the struct def).
    Field(VarId, u16),
    /// Monolithic cell standing for every element of an array.
    Array(VarId),
    Heap(u32),
    Func(FuncId),
    Null,
    Unknown,
}

impl MemLoc {
    /// Summary locations stand for many concrete cells and are never
    /// strongly updated.
    pub fn is_summary(&self) -> bool {
        matches!(self, MemLoc::Array(_) | MemLoc::Heap(_))
    }
}

/// Right-hand side of a store `*p = src`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreSrc {
    Key(MemLoc),
    Null,
    /// Scalar value; carries no points-to information.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Callee {
    Direct(FuncId),
    /// Call through a pointer key; targets resolved by the flow-insensitive
    /// analysis.
    Indirect(MemLoc),
}

/// Actual argument after lowering: always atomic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Actual {
    Key(MemLoc),
    AddrOf(MemLoc),
    Null,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Entry,
    Exit,
    /// `dst = &loc`; also encodes `dst = 0` as `loc = Null`.
    AddressOf { dst: MemLoc, loc: MemLoc },
    /// `dst = src`, both pointer keys.
    Copy { dst: MemLoc, src: MemLoc },
    /// `dst = *src`. `dst` is `None` when the loaded value is a scalar;
    /// the dereference of `src` still happens (and is a PoI).
    Load { dst: Option<MemLoc>, src: MemLoc },
    /// `*ptr = src`.
    Store { ptr: MemLoc, src: StoreSrc },
    /// `dst = malloc(..)` lowered with the allocation's source line.
    Alloc { dst: MemLoc, line: u32 },
    Call { callee: Callee, args: Vec<Actual>, ret_to: Option<MemLoc> },
    /// Opaque condition; successors are [taken, not-taken].
    Branch,
    Nop,
}

impl Node {
    /// The directly assigned key, if this node is a direct pointer
    /// assignment (store targets are indirect and not included).
    pub fn direct_target(&self) -> Option<MemLoc> {
        match self {
            Node::AddressOf { dst, .. } | Node::Copy { dst, .. } | Node::Alloc { dst, .. } => {
                Some(*dst)
            }
            Node::Load { dst, .. } => *dst,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionIR {
    pub id: FuncId,
    pub name: String,
    pub params: Vec<VarId>,
    /// `None` for `void`.
    pub ret: Option<Type>,
    /// Synthetic variable holding the return value of a pointer-returning
    /// function; `return e` lowers to an assignment into this slot.
    pub ret_slot: Option<VarId>,
    /// All non-formal locals, including synthesized temporaries.
    pub locals: Vec<VarId>,
    pub nodes: Vec<Node>,
    pub succs: Vec<Vec<NodeId>>,
    pub preds: Vec<Vec<NodeId>>,
    pub spans: Vec<Span>,
    /// Branch nodes that head a `while` loop (their first successor enters
    /// the body, the second leaves the loop).
    pub loop_headers: BTreeSet<NodeId>,
    /// Pointer keys owned by declared-but-uninitialized locals; seeded to
    /// `{Unknown}` when the function is entered.
    pub entry_seeds: Vec<MemLoc>,
}

impl FunctionIR {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Reverse post-order over the CFG from Entry, with ties broken by
    /// successor order; deterministic.
    pub fn rpo(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut seen = vec![false; self.nodes.len()];
        // Iterative post-order DFS.
        let mut stack: Vec<(NodeId, usize)> = vec![(ENTRY, 0)];
        seen[ENTRY.index()] = true;
        while let Some((n, i)) = stack.pop() {
            let succs = &self.succs[n.index()];
            if i < succs.len() {
                stack.push((n, i + 1));
                let s = succs[i];
                if !seen[s.index()] {
                    seen[s.index()] = true;
                    stack.push((s, 0));
                }
            } else {
                order.push(n);
            }
        }
        order.reverse();
        order
    }
}

#[derive(Debug, Clone)]
pub struct VarInfo {
    pub name: String,
    /// `None` for globals.
    pub owner: Option<FuncId>,
    pub ty: Type,
    pub is_const: bool,
    pub is_temp: bool,
    pub formal_of: Option<(FuncId, usize)>,
    pub has_initializer: bool,
    /// Local pointer declared `= 0`; starts at null rather than unknown.
    pub null_initialized: bool,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<(String, Type)>,
}

/// Initializer recorded for a global declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalInit {
    AddrOf(MemLoc),
    Null,
    Scalar,
}

#[derive(Debug, Clone)]
pub struct GlobalDecl {
    pub var: VarId,
    pub init: Option<GlobalInit>,
}

/// Immutable lowered program; safe to share across concurrent analysis runs.
#[derive(Debug, Clone)]
pub struct ProgramIR {
    pub files: Vec<String>,
    pub funcs: Vec<FunctionIR>,
    pub vars: Vec<VarInfo>,
    pub structs: Vec<StructDef>,
    pub globals: Vec<GlobalDecl>,
    pub entry: FuncId,
    /// Direct call edges (caller, call node, callee). Indirect-call edges
    /// are discovered by `andersen::resolve_function_pointers`.
    pub pcg_edges: BTreeSet<(FuncId, NodeId, FuncId)>,
}

impl ProgramIR {
    pub fn func(&self, id: FuncId) -> &FunctionIR {
        &self.funcs[id.index()]
    }

    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.index()]
    }

    pub fn func_by_name(&self, name: &str) -> Option<FuncId> {
        self.funcs.iter().position(|f| f.name == name).map(|i| FuncId(i as u32))
    }

    pub fn file_name(&self, span: Span) -> &str {
        self.files.get(span.file as usize).map(String::as_str).unwrap_or("<input>")
    }

    /// True when `loc` can be bound in a points-to map: it is a location of
    /// pointer type. `Null`, `Unknown`, functions, and heap cells are never
    /// keys (heap cells only ever hold scalars in this language).
    pub fn is_pointer_key(&self, loc: MemLoc) -> bool {
        match loc {
            MemLoc::Var(v) => self.var(v).ty.is_pointer(),
            MemLoc::Field(v, i) => self.field_type(v, i).is_some_and(|t| t.is_pointer()),
            MemLoc::Array(v) => {
                let t = self.var(v).ty;
                t.is_array && t.ptr > 0
            }
            MemLoc::Heap(_) | MemLoc::Func(_) | MemLoc::Null | MemLoc::Unknown => false,
        }
    }

    pub fn field_type(&self, owner: VarId, idx: u16) -> Option<Type> {
        match self.var(owner).ty.base {
            Base::Struct(sid) => self.structs[sid.index()].fields.get(idx as usize).map(|f| f.1),
            _ => None,
        }
    }

    /// Stable human/report name for a location. Globals are `g:x`, locals
    /// `l:func::x`, fields `f:S::f@owner`, arrays `arr:a`, heap cells
    /// `heap:line`, functions `fn:f`.
    pub fn loc_name(&self, loc: MemLoc) -> String {
        match loc {
            MemLoc::Var(v) => {
                let info = self.var(v);
                match info.owner {
                    None => format!("g:{}", info.name),
                    Some(f) => format!("l:{}::{}", self.func(f).name, info.name),
                }
            }
            MemLoc::Field(v, i) => {
                let info = self.var(v);
                let sname = match info.ty.base {
                    Base::Struct(sid) => self.structs[sid.index()].name.as_str(),
                    _ => "?",
                };
                let fname = match info.ty.base {
                    Base::Struct(sid) => self.structs[sid.index()]
                        .fields
                        .get(i as usize)
                        .map(|f| f.0.as_str())
                        .unwrap_or("?"),
                    _ => "?",
                };
                match info.owner {
                    None => format!("f:{sname}::{fname}@{}", info.name),
                    Some(f) => format!("f:{sname}::{fname}@{}::{}", self.func(f).name, info.name),
                }
            }
            MemLoc::Array(v) => {
                let info = self.var(v);
                match info.owner {
                    None => format!("arr:{}", info.name),
                    Some(f) => format!("arr:{}::{}", self.func(f).name, info.name),
                }
            }
            MemLoc::Heap(line) => format!("heap:{line}"),
            MemLoc::Func(f) => format!("fn:{}", self.func(f).name),
            MemLoc::Null => "null".to_string(),
            MemLoc::Unknown => "unknown".to_string(),
        }
    }

    /// Parses a name produced by [`ProgramIR::loc_name`] back into a
    /// location of this program.
    pub fn parse_loc(&self, name: &str) -> Option<MemLoc> {
        if name == "null" {
            return Some(MemLoc::Null);
        }
        if name == "unknown" {
            return Some(MemLoc::Unknown);
        }
        if let Some(line) = name.strip_prefix("heap:") {
            return line.parse().ok().map(MemLoc::Heap);
        }
        if let Some(f) = name.strip_prefix("fn:") {
            return self.func_by_name(f).map(MemLoc::Func);
        }
        if let Some(rest) = name.strip_prefix("g:") {
            return self.lookup_var(None, rest).map(MemLoc::Var);
        }
        if let Some(rest) = name.strip_prefix("l:") {
            let (func, var) = rest.split_once("::")?;
            let fid = self.func_by_name(func)?;
            return self.lookup_var(Some(fid), var).map(MemLoc::Var);
        }
        if let Some(rest) = name.strip_prefix("arr:") {
            let v = match rest.split_once("::") {
                Some((func, var)) => self.lookup_var(Some(self.func_by_name(func)?), var)?,
                None => self.lookup_var(None, rest)?,
            };
            return Some(MemLoc::Array(v));
        }
        if let Some(rest) = name.strip_prefix("f:") {
            let (sf, owner) = rest.split_once('@')?;
            let (_sname, fname) = sf.split_once("::")?;
            let v = match owner.split_once("::") {
                Some((func, var)) => self.lookup_var(Some(self.func_by_name(func)?), var)?,
                None => self.lookup_var(None, owner)?,
            };
            let sid = match self.var(v).ty.base {
                Base::Struct(sid) => sid,
                _ => return None,
            };
            let idx = self.structs[sid.index()].fields.iter().position(|f| f.0 == fname)?;
            return Some(MemLoc::Field(v, idx as u16));
        }
        None
    }

    fn lookup_var(&self, owner: Option<FuncId>, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|v| v.owner == owner && v.name == name)
            .map(|i| VarId(i as u32))
    }

    /// Every pointer key owned by `v` (a plain pointer, the pointer fields
    /// of a struct, or a pointer array's monolithic cell).
    pub fn keys_of_var(&self, v: VarId) -> Vec<MemLoc> {
        let info = self.var(v);
        let t = info.ty;
        if t.is_array {
            if t.ptr > 0 {
                return vec![MemLoc::Array(v)];
            }
            return Vec::new();
        }
        match t.base {
            Base::Struct(sid) => self.structs[sid.index()]
                .fields
                .iter()
                .enumerate()
                .filter(|(_, f)| f.1.is_pointer())
                .map(|(i, _)| MemLoc::Field(v, i as u16))
                .collect(),
            _ if t.is_pointer() => vec![MemLoc::Var(v)],
            _ => Vec::new(),
        }
    }

    /// Structural well-formedness: Entry/Exit shape, reachability, and node
    /// kinds restricted to the canonical forms.
    pub fn validate(&self) -> Result<(), String> {
        for f in &self.funcs {
            if !matches!(f.nodes[ENTRY.index()], Node::Entry) {
                return Err(format!("{}: node 0 is not Entry", f.name));
            }
            if !matches!(f.nodes[EXIT.index()], Node::Exit) {
                return Err(format!("{}: node 1 is not Exit", f.name));
            }
            if !f.preds[ENTRY.index()].is_empty() {
                return Err(format!("{}: Entry has predecessors", f.name));
            }
            if !f.succs[EXIT.index()].is_empty() {
                return Err(format!("{}: Exit has successors", f.name));
            }
            let reach = f.rpo();
            if reach.len() != f.nodes.len() {
                return Err(format!(
                    "{}: {} of {} nodes reachable from Entry",
                    f.name,
                    reach.len(),
                    f.nodes.len()
                ));
            }
            for (i, n) in f.nodes.iter().enumerate() {
                let ok = match n {
                    Node::Entry => i == ENTRY.index(),
                    Node::Exit => i == EXIT.index(),
                    _ => true,
                };
                if !ok {
                    return Err(format!("{}: stray Entry/Exit at node {i}", f.name));
                }
            }
        }
        for (caller, node, callee) in &self.pcg_edges {
            if caller.index() >= self.funcs.len() || callee.index() >= self.funcs.len() {
                return Err("PCG edge references missing function".to_string());
            }
            let f = self.func(*caller);
            if node.index() >= f.nodes.len() || !matches!(f.node(*node), Node::Call { .. }) {
                return Err(format!("{}: PCG edge references non-call node", f.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PoiKind {
    Load,
    Store,
    /// Dereference of a function pointer at a call site.
    CallTarget,
}

/// One dereference level at one program point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoISite {
    pub id: PoiId,
    pub func: FuncId,
    pub node: NodeId,
    pub key: MemLoc,
    /// 1-based dereference level within the originating statement.
    pub level: u32,
    pub kind: PoiKind,
    pub span: Span,
}

/// One PoI per dereference level per program point, ordered by
/// (file, line, column, level).
pub fn enumerate_pois(ir: &ProgramIR) -> Vec<PoISite> {
    let mut raw = Vec::new();
    for f in &ir.funcs {
        // Level = rank among dereferencing nodes that share a source span,
        // in emission (node id) order.
        let mut level_at: std::collections::BTreeMap<Span, u32> = std::collections::BTreeMap::new();
        for n in f.node_ids() {
            let (key, kind) = match f.node(n) {
                Node::Load { src, .. } => (*src, PoiKind::Load),
                Node::Store { ptr, .. } => (*ptr, PoiKind::Store),
                Node::Call { callee: Callee::Indirect(k), .. } => (*k, PoiKind::CallTarget),
                _ => continue,
            };
            let span = f.spans[n.index()];
            let level = level_at.entry(span).and_modify(|l| *l += 1).or_insert(1);
            raw.push(PoISite { id: PoiId(0), func: f.id, node: n, key, level: *level, kind, span });
        }
    }
    raw.sort_by_key(|p| (p.span, p.level));
    for (i, p) in raw.iter_mut().enumerate() {
        p.id = PoiId(i as u32);
    }
    raw
}
