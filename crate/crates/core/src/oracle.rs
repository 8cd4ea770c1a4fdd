//! Bounded concrete interpreter: the soundness ground truth.
//!
//! Enumerates every execution path, taking both arms of every branch and
//! each loop 0..=k times, and records the exact pointer value observed at
//! every PoI. Conditions are never evaluated — the oracle explores exactly
//! the paths the (path-insensitive) analyses over-approximate. Heap cells
//! are named `Heap#line` to match the abstraction, so observations are
//! directly comparable with analysis sets.
//!
//! A dereference of null/unknown is recorded as an event and the read or
//! write is skipped; the path continues. Recursion is capped at k
//! re-entries; paths hitting the cap are truncated with their observations
//! kept.
//!
//! [`ast_final_stores`] interprets the un-lowered AST with the same
//! semantics; agreement of final stores with the IR interpreter is the
//! check that lowering preserves meaning.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ast;
use crate::diag::{DiagKind, Diagnostic};
use crate::ir::*;
use crate::memory::default_init;
use crate::Error;

/// A concrete pointer cell value. Every pointer cell holds exactly one
/// location, null, or unknown at any instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum CVal {
    Loc(CAddr),
    Null,
    Unknown,
}

/// Concrete address: an abstract location plus the activation it lives in
/// (0 for globals and heap). Distinct recursive frames get distinct
/// serials; the abstraction simply drops them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CAddr {
    serial: u64,
    loc: MemLoc,
}

impl CAddr {
    fn global(loc: MemLoc) -> Self {
        CAddr { serial: 0, loc }
    }
}

/// Serial-erased value, used in final-store snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AbsVal {
    Loc(MemLoc),
    Null,
    Unknown,
}

fn abs(v: CVal) -> AbsVal {
    match v {
        CVal::Loc(a) => AbsVal::Loc(a.loc),
        CVal::Null => AbsVal::Null,
        CVal::Unknown => AbsVal::Unknown,
    }
}

fn observed_loc(v: CVal) -> MemLoc {
    match v {
        CVal::Loc(a) => a.loc,
        CVal::Null => MemLoc::Null,
        CVal::Unknown => MemLoc::Unknown,
    }
}

#[derive(Debug, Clone)]
struct Frame {
    serial: u64,
    func: FuncId,
    node: NodeId,
    locals: BTreeMap<MemLoc, CVal>,
    loops: BTreeMap<NodeId, u32>,
    /// Where the caller wants the return value.
    ret_to: Option<CAddr>,
}

#[derive(Debug, Clone)]
struct State {
    frames: Vec<Frame>,
    globals: BTreeMap<MemLoc, CVal>,
}

impl State {
    fn frame_of(&self, serial: u64) -> Option<&Frame> {
        self.frames.iter().rev().find(|f| f.serial == serial)
    }

    fn read(&self, addr: CAddr) -> CVal {
        if addr.serial == 0 {
            return self.globals.get(&addr.loc).copied().unwrap_or(CVal::Null);
        }
        match self.frame_of(addr.serial) {
            Some(f) => f.locals.get(&addr.loc).copied().unwrap_or(CVal::Unknown),
            // The frame is gone: a dangling pointer read.
            None => CVal::Unknown,
        }
    }

    fn write(&mut self, addr: CAddr, v: CVal) {
        if addr.serial == 0 {
            self.globals.insert(addr.loc, v);
            return;
        }
        if let Some(f) = self.frames.iter_mut().rev().find(|f| f.serial == addr.serial) {
            f.locals.insert(addr.loc, v);
        }
        // Writes through dangling pointers vanish.
    }
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    /// Locations observed per PoI, unioned over all explored paths.
    pub observations: BTreeMap<PoiId, BTreeSet<MemLoc>>,
    pub events: BTreeSet<Diagnostic>,
    /// Completed plus truncated paths.
    pub paths: u64,
    pub truncated: u64,
    /// Final global pointer store per completed path, serial-erased.
    pub final_stores: BTreeSet<Vec<(MemLoc, AbsVal)>>,
}

struct Interp<'a> {
    ir: &'a ProgramIR,
    poi_of: HashMap<(FuncId, NodeId), PoiId>,
    loop_bound: u32,
    max_paths: u64,
    next_serial: u64,
    out: OracleOutcome,
}

/// Runs the interpreter over the lowered IR. Indirect calls dispatch on
/// the concrete function-pointer value, so no call graph is needed.
pub fn interpret_all(
    ir: &ProgramIR,
    pois: &[PoISite],
    loop_bound: u32,
    max_paths: u64,
) -> Result<OracleOutcome, Error> {
    let mut interp = Interp {
        ir,
        poi_of: pois.iter().map(|p| ((p.func, p.node), p.id)).collect(),
        loop_bound,
        max_paths,
        next_serial: 1,
        out: OracleOutcome {
            observations: BTreeMap::new(),
            events: BTreeSet::new(),
            paths: 0,
            truncated: 0,
            final_stores: BTreeSet::new(),
        },
    };

    let mut init = State { frames: Vec::new(), globals: BTreeMap::new() };
    for (key, set) in default_init(ir).iter() {
        let loc = *set.iter().next().expect("non-empty binding");
        let v = match loc {
            MemLoc::Null => CVal::Null,
            l => CVal::Loc(CAddr::global(l)),
        };
        init.globals.insert(key, v);
    }
    interp.push_frame(&mut init, ir.entry, None);
    // Entry-function pointer formals start uninitialized.
    let entry_frame = init.frames.last_mut().expect("entry frame");
    for p in &ir.func(ir.entry).params {
        if ir.var(*p).ty.is_pointer() {
            entry_frame.locals.insert(MemLoc::Var(*p), CVal::Unknown);
        }
    }

    let mut worklist = vec![init];
    while let Some(state) = worklist.pop() {
        interp.step_to_end(state, &mut worklist)?;
    }
    Ok(interp.out)
}

impl<'a> Interp<'a> {
    fn push_frame(&mut self, state: &mut State, func: FuncId, ret_to: Option<CAddr>) {
        let serial = self.next_serial;
        self.next_serial += 1;
        state.frames.push(Frame {
            serial,
            func,
            node: ENTRY,
            locals: BTreeMap::new(),
            loops: BTreeMap::new(),
            ret_to,
        });
    }

    /// Resolves a key named directly by a node of the current frame.
    fn cell(&self, state: &State, key: MemLoc) -> CAddr {
        match crate::flow::owner_of_key(self.ir, key) {
            None => CAddr::global(key),
            Some(_) => {
                let f = state.frames.last().expect("active frame");
                CAddr { serial: f.serial, loc: key }
            }
        }
    }

    /// The address denoted by `&loc` in the current frame.
    fn addr_of(&self, state: &State, loc: MemLoc) -> CAddr {
        match crate::flow::owner_of_key(self.ir, loc) {
            None => CAddr::global(loc),
            Some(_) => {
                let f = state.frames.last().expect("active frame");
                CAddr { serial: f.serial, loc }
            }
        }
    }

    fn observe(&mut self, func: FuncId, node: NodeId, v: CVal) {
        if let Some(id) = self.poi_of.get(&(func, node)) {
            self.out.observations.entry(*id).or_default().insert(observed_loc(v));
        }
    }

    fn record_path(&mut self, state: &State, truncated: bool) -> Result<(), Error> {
        self.out.paths += 1;
        if truncated {
            self.out.truncated += 1;
        } else {
            let snapshot: Vec<(MemLoc, AbsVal)> =
                state.globals.iter().map(|(k, v)| (*k, abs(*v))).collect();
            self.out.final_stores.insert(snapshot);
        }
        if self.out.paths > self.max_paths {
            return Err(Error::BudgetExceeded {
                analysis: "concrete oracle",
                what: "path",
                limit: self.max_paths,
                detail: "path enumeration exceeded the budget".to_string(),
            });
        }
        Ok(())
    }

    /// Runs one state to the end of its path, pushing forked states.
    fn step_to_end(&mut self, mut state: State, worklist: &mut Vec<State>) -> Result<(), Error> {
        loop {
            let frame = match state.frames.last() {
                Some(f) => f,
                None => return self.record_path(&state, false),
            };
            let (func, node) = (frame.func, frame.node);
            let f = self.ir.func(func);
            let span = f.spans[node.index()];
            let advance = |state: &mut State| {
                let succ = self.ir.func(func).succs[node.index()][0];
                state.frames.last_mut().unwrap().node = succ;
            };
            match f.node(node) {
                Node::Entry | Node::Nop => advance(&mut state),
                Node::Exit => {
                    let popped = state.frames.pop().expect("frame");
                    if let Some(ret_to) = popped.ret_to {
                        let slot = self.ir.func(popped.func).ret_slot;
                        let v = slot
                            .map(|s| {
                                popped
                                    .locals
                                    .get(&MemLoc::Var(s))
                                    .copied()
                                    .unwrap_or(CVal::Unknown)
                            })
                            .unwrap_or(CVal::Unknown);
                        state.write(ret_to, v);
                    }
                    if state.frames.is_empty() {
                        return self.record_path(&state, false);
                    }
                }
                Node::AddressOf { dst, loc } => {
                    let v = match loc {
                        MemLoc::Null => CVal::Null,
                        l => CVal::Loc(self.addr_of(&state, *l)),
                    };
                    let cell = self.cell(&state, *dst);
                    state.write(cell, v);
                    advance(&mut state);
                }
                Node::Copy { dst, src } => {
                    let v = state.read(self.cell(&state, *src));
                    let cell = self.cell(&state, *dst);
                    state.write(cell, v);
                    advance(&mut state);
                }
                Node::Load { dst, src } => {
                    let pv = state.read(self.cell(&state, *src));
                    self.observe(func, node, pv);
                    match pv {
                        CVal::Loc(addr) => {
                            if let Some(dst) = dst {
                                let v = state.read(addr);
                                let cell = self.cell(&state, *dst);
                                state.write(cell, v);
                            }
                        }
                        CVal::Null => {
                            self.out.events.insert(Diagnostic {
                                span,
                                kind: DiagKind::NullDeref,
                                key: *src,
                            });
                        }
                        CVal::Unknown => {
                            self.out.events.insert(Diagnostic {
                                span,
                                kind: DiagKind::UnknownDeref,
                                key: *src,
                            });
                        }
                    }
                    advance(&mut state);
                }
                Node::Store { ptr, src } => {
                    let pv = state.read(self.cell(&state, *ptr));
                    self.observe(func, node, pv);
                    match pv {
                        CVal::Loc(target) => {
                            let v = match src {
                                StoreSrc::Key(k) => Some(state.read(self.cell(&state, *k))),
                                StoreSrc::Null => Some(CVal::Null),
                                StoreSrc::Scalar => None,
                            };
                            if let Some(v) = v {
                                if self.ir.is_pointer_key(target.loc) {
                                    state.write(target, v);
                                }
                            }
                        }
                        CVal::Null => {
                            self.out.events.insert(Diagnostic {
                                span,
                                kind: DiagKind::NullDeref,
                                key: *ptr,
                            });
                        }
                        CVal::Unknown => {
                            self.out.events.insert(Diagnostic {
                                span,
                                kind: DiagKind::UnknownDeref,
                                key: *ptr,
                            });
                        }
                    }
                    advance(&mut state);
                }
                Node::Alloc { dst, line } => {
                    let cell = self.cell(&state, *dst);
                    state.write(cell, CVal::Loc(CAddr::global(MemLoc::Heap(*line))));
                    advance(&mut state);
                }
                Node::Branch => {
                    let succs = &f.succs[node.index()];
                    if f.loop_headers.contains(&node) {
                        let count = *state.frames.last().unwrap().loops.get(&node).unwrap_or(&0);
                        // Exit edge first (resets the counter), body edge
                        // forked when the bound allows another iteration.
                        if count < self.loop_bound {
                            let mut body = state.clone();
                            let bf = body.frames.last_mut().unwrap();
                            bf.loops.insert(node, count + 1);
                            bf.node = succs[0];
                            worklist.push(body);
                        }
                        let sf = state.frames.last_mut().unwrap();
                        sf.loops.remove(&node);
                        sf.node = succs[1];
                    } else {
                        let mut other = state.clone();
                        other.frames.last_mut().unwrap().node = succs[1];
                        worklist.push(other);
                        state.frames.last_mut().unwrap().node = succs[0];
                    }
                }
                Node::Call { callee, args, ret_to } => {
                    let target = match callee {
                        Callee::Direct(fid) => Some(*fid),
                        Callee::Indirect(k) => {
                            let pv = state.read(self.cell(&state, *k));
                            self.observe(func, node, pv);
                            match pv {
                                CVal::Loc(CAddr { loc: MemLoc::Func(fid), .. }) => Some(fid),
                                CVal::Loc(_) => None,
                                CVal::Null => {
                                    self.out.events.insert(Diagnostic {
                                        span,
                                        kind: DiagKind::NullDeref,
                                        key: *k,
                                    });
                                    None
                                }
                                CVal::Unknown => {
                                    self.out.events.insert(Diagnostic {
                                        span,
                                        kind: DiagKind::UnknownDeref,
                                        key: *k,
                                    });
                                    None
                                }
                            }
                        }
                    };
                    let Some(target) = target else {
                        advance(&mut state);
                        continue;
                    };
                    let instances =
                        state.frames.iter().filter(|fr| fr.func == target).count() as u32;
                    if instances > self.loop_bound {
                        self.out.events.insert(Diagnostic {
                            span,
                            kind: DiagKind::PathTruncated,
                            key: MemLoc::Func(target),
                        });
                        return self.record_path(&state, true);
                    }
                    let bindings = self.bind_args(&state, target, args);
                    let ret_addr = ret_to.map(|t| self.cell(&state, t));
                    advance(&mut state); // caller resumes past the call
                    self.push_frame(&mut state, target, ret_addr);
                    let frame = state.frames.last_mut().unwrap();
                    frame.locals.extend(bindings);
                }
            }
        }
    }

    /// Mirrors the engines' actual-to-formal rule: unusable actuals leave
    /// the formal uninitialized.
    fn bind_args(&self, state: &State, callee: FuncId, args: &[Actual]) -> Vec<(MemLoc, CVal)> {
        let ir = self.ir;
        let cf = ir.func(callee);
        let mut out = Vec::new();
        for (i, formal) in cf.params.iter().enumerate() {
            let fty = ir.var(*formal).ty;
            if !fty.is_pointer() {
                continue;
            }
            let v = match args.get(i) {
                Some(Actual::Key(k)) if crate::andersen::key_type(ir, *k) == Some(fty) => {
                    state.read(self.cell(state, *k))
                }
                Some(Actual::AddrOf(loc)) => {
                    let ok = match loc {
                        MemLoc::Func(_) => fty.base == Base::FnPtr,
                        _ => {
                            fty.base != Base::FnPtr
                                && crate::andersen::key_type(ir, *loc).map(|t| t.ptr + 1)
                                    == Some(fty.ptr)
                        }
                    };
                    if ok {
                        CVal::Loc(self.addr_of(state, *loc))
                    } else {
                        CVal::Unknown
                    }
                }
                Some(Actual::Null) => CVal::Null,
                _ => CVal::Unknown,
            };
            out.push((MemLoc::Var(*formal), v));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// AST-level reference interpreter
// ---------------------------------------------------------------------------

/// Interprets the un-lowered AST with the same bounded-path semantics and
/// returns the set of final global pointer stores. Statements are evaluated
/// structurally (no temporaries), so agreement with
/// [`OracleOutcome::final_stores`] demonstrates that lowering preserves
/// semantics. Name resolution reuses the lowered program's tables; the
/// statement decomposition under test does not.
pub fn ast_final_stores(
    ast: &ast::Ast,
    ir: &ProgramIR,
    loop_bound: u32,
    max_paths: u64,
) -> Result<BTreeSet<Vec<(MemLoc, AbsVal)>>, Error> {
    let mut scopes: HashMap<(Option<FuncId>, &str), VarId> = HashMap::new();
    for (i, v) in ir.vars.iter().enumerate() {
        scopes.insert((v.owner, v.name.as_str()), VarId(i as u32));
    }
    let mut interp = AstInterp {
        ast,
        ir,
        scopes,
        loop_bound,
        max_paths,
        next_serial: 1,
        paths: 0,
        stores: BTreeSet::new(),
    };

    let mut globals = BTreeMap::new();
    for (key, set) in default_init(ir).iter() {
        let loc = *set.iter().next().expect("non-empty binding");
        let v = match loc {
            MemLoc::Null => CVal::Null,
            l => CVal::Loc(CAddr::global(l)),
        };
        globals.insert(key, v);
    }
    let mut state = State { frames: Vec::new(), globals };
    state.frames.push(Frame {
        serial: interp.fresh_serial(),
        func: ir.entry,
        node: ENTRY,
        locals: ir
            .func(ir.entry)
            .params
            .iter()
            .filter(|p| ir.var(**p).ty.is_pointer())
            .map(|p| (MemLoc::Var(*p), CVal::Unknown))
            .collect(),
        loops: BTreeMap::new(),
        ret_to: None,
    });
    let entry = ast.func(&ir.func(ir.entry).name).expect("entry function");
    for end in interp.run_block(&entry.body, state)? {
        let (st, _) = end;
        interp.finish_path(&st)?;
    }
    Ok(interp.stores)
}

struct AstInterp<'a> {
    ast: &'a ast::Ast,
    ir: &'a ProgramIR,
    scopes: HashMap<(Option<FuncId>, &'a str), VarId>,
    loop_bound: u32,
    max_paths: u64,
    next_serial: u64,
    paths: u64,
    stores: BTreeSet<Vec<(MemLoc, AbsVal)>>,
}

/// A state after a block, plus whether a `return` ended it.
type BlockEnd = (State, bool);

impl<'a> AstInterp<'a> {
    fn fresh_serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    fn finish_path(&mut self, state: &State) -> Result<(), Error> {
        self.paths += 1;
        if self.paths > self.max_paths {
            return Err(Error::BudgetExceeded {
                analysis: "reference interpreter",
                what: "path",
                limit: self.max_paths,
                detail: "path enumeration exceeded the budget".to_string(),
            });
        }
        self.stores
            .insert(state.globals.iter().map(|(k, v)| (*k, abs(*v))).collect());
        Ok(())
    }

    fn var(&self, state: &State, name: &str) -> Option<VarId> {
        let cur = state.frames.last().map(|f| f.func);
        cur.and_then(|f| self.scopes.get(&(Some(f), name)).copied())
            .or_else(|| self.scopes.get(&(None, name)).copied())
    }

    /// The cell addressed by an lvalue, following dereference chains.
    /// `None` means the access goes through null/unknown and is skipped.
    fn place(&mut self, state: &State, lv: &ast::LValue) -> Option<CAddr> {
        match lv {
            ast::LValue::Name(n) => {
                let v = self.var(state, n)?;
                Some(self.addr_of_var(state, v, MemLoc::Var(v)))
            }
            ast::LValue::Field(owner, field) => {
                let v = self.var(state, owner)?;
                let idx = match self.ir.var(v).ty.base {
                    Base::Struct(sid) => self.ir.structs[sid.index()]
                        .fields
                        .iter()
                        .position(|f| f.0 == *field)? as u16,
                    _ => return None,
                };
                Some(self.addr_of_var(state, v, MemLoc::Field(v, idx)))
            }
            ast::LValue::Index(name, _) => {
                let v = self.var(state, name)?;
                Some(self.addr_of_var(state, v, MemLoc::Array(v)))
            }
            ast::LValue::AddrLit(n) => {
                let ptr = self.ir.parse_loc(&format!("g:__addr_{n}"))?;
                match state.read(CAddr::global(ptr)) {
                    CVal::Loc(a) => Some(a),
                    _ => None,
                }
            }
            ast::LValue::Deref(inner) => {
                let addr = self.place(state, inner)?;
                match state.read(addr) {
                    CVal::Loc(a) => Some(a),
                    CVal::Null | CVal::Unknown => None,
                }
            }
        }
    }

    fn addr_of_var(&self, state: &State, v: VarId, loc: MemLoc) -> CAddr {
        match self.ir.var(v).owner {
            None => CAddr::global(loc),
            Some(_) => CAddr { serial: state.frames.last().expect("frame").serial, loc },
        }
    }

    /// Evaluates a pointer-valued expression; scalar expressions yield
    /// `None` (they are untracked).
    fn eval(
        &mut self,
        state: State,
        e: &ast::Expr,
    ) -> Result<Vec<(State, Option<CVal>)>, Error> {
        match e {
            ast::Expr::Int(0) => Ok(vec![(state, Some(CVal::Null))]),
            ast::Expr::Int(_) | ast::Expr::Unary(..) | ast::Expr::Binary(..) => {
                Ok(vec![(state, None)])
            }
            ast::Expr::AddrOf(lv) => {
                if let ast::LValue::Name(n) = lv {
                    if let Some(f) = self.ir.func_by_name(n) {
                        return Ok(vec![(
                            state,
                            Some(CVal::Loc(CAddr::global(MemLoc::Func(f)))),
                        )]);
                    }
                }
                let v = self.place(&state, lv).map(CVal::Loc);
                Ok(vec![(state, v.or(Some(CVal::Unknown)))])
            }
            ast::Expr::Place(lv) => {
                if let ast::LValue::Name(n) = lv {
                    if let Some(f) = self.ir.func_by_name(n) {
                        return Ok(vec![(
                            state,
                            Some(CVal::Loc(CAddr::global(MemLoc::Func(f)))),
                        )]);
                    }
                }
                let v = self.place(&state, lv).map(|a| state.read(a));
                Ok(vec![(state, v)])
            }
            ast::Expr::Alloc { span, .. } => Ok(vec![(
                state,
                Some(CVal::Loc(CAddr::global(MemLoc::Heap(span.line)))),
            )]),
            ast::Expr::Call { callee, args, .. } => {
                let mut out = Vec::new();
                for (st, ret) in self.call(state, callee, args)? {
                    out.push((st, ret));
                }
                Ok(out)
            }
        }
    }

    fn call(
        &mut self,
        mut state: State,
        callee: &str,
        args: &[ast::Expr],
    ) -> Result<Vec<(State, Option<CVal>)>, Error> {
        let target = match self.ir.func_by_name(callee) {
            Some(f) => Some(f),
            None => {
                // Function-pointer call.
                let v = self.var(&state, callee);
                match v.map(|v| state.read(self.addr_of_var(&state, v, MemLoc::Var(v)))) {
                    Some(CVal::Loc(CAddr { loc: MemLoc::Func(f), .. })) => Some(f),
                    _ => None,
                }
            }
        };
        let Some(target) = target else {
            return Ok(vec![(state, None)]);
        };
        let instances = state.frames.iter().filter(|fr| fr.func == target).count() as u32;
        if instances > self.loop_bound {
            // Truncated path: account for it and drop the continuation.
            self.paths += 1;
            return Ok(Vec::new());
        }
        let decl = self.ast.func(&self.ir.func(target).name).expect("declared function");
        let formals = &self.ir.func(target).params;
        let mut bindings: Vec<(MemLoc, CVal)> = Vec::new();
        for (i, formal) in formals.iter().enumerate() {
            let fty = self.ir.var(*formal).ty;
            if !fty.is_pointer() {
                continue;
            }
            let v = match args.get(i) {
                Some(a) => {
                    let mut evs = self.eval(state.clone(), a)?;
                    // Argument expressions are call-free, so evaluation
                    // cannot fork.
                    let (st, v) = evs.remove(0);
                    state = st;
                    match v {
                        Some(v) if self.arg_matches(a, fty) => v,
                        _ => CVal::Unknown,
                    }
                }
                None => CVal::Unknown,
            };
            bindings.push((MemLoc::Var(*formal), v));
        }
        let serial = self.fresh_serial();
        state.frames.push(Frame {
            serial,
            func: target,
            node: ENTRY,
            locals: bindings.into_iter().collect(),
            loops: BTreeMap::new(),
            ret_to: None,
        });
        let ends = self.run_block(&decl.body, state)?;
        let mut out = Vec::new();
        for (mut st, _) in ends {
            let popped = st.frames.pop().expect("callee frame");
            let ret = self
                .ir
                .func(target)
                .ret_slot
                .map(|s| popped.locals.get(&MemLoc::Var(s)).copied().unwrap_or(CVal::Unknown));
            out.push((st, ret));
        }
        Ok(out)
    }

    /// Mirrors the engines' type gate for actual-to-formal bindings.
    fn arg_matches(&mut self, a: &ast::Expr, fty: Type) -> bool {
        match a {
            ast::Expr::Int(0) => true,
            ast::Expr::Alloc { .. } => fty.base == Base::Int && fty.ptr == 1,
            _ => true, // direct calls are type-checked; indirect mismatch handled by eval
        }
    }

    fn run_block(&mut self, stmts: &[ast::Stmt], state: State) -> Result<Vec<BlockEnd>, Error> {
        let mut live: Vec<State> = vec![state];
        let mut done: Vec<BlockEnd> = Vec::new();
        for stmt in stmts {
            let mut next = Vec::new();
            for st in live {
                for (st2, returned) in self.run_stmt(stmt, st)? {
                    if returned {
                        done.push((st2, true));
                    } else {
                        next.push(st2);
                    }
                }
            }
            live = next;
        }
        done.extend(live.into_iter().map(|s| (s, false)));
        Ok(done)
    }

    fn run_stmt(&mut self, stmt: &ast::Stmt, state: State) -> Result<Vec<BlockEnd>, Error> {
        match stmt {
            ast::Stmt::LocalDecl(d) => match &d.init {
                Some(e) => self.assign(&ast::LValue::Name(d.name.clone()), e, state),
                None => Ok(vec![(state, false)]),
            },
            ast::Stmt::Assign { lhs, rhs, .. } => self.assign(lhs, rhs, state),
            ast::Stmt::Call { callee, args, .. } => {
                let outs = self.call(state, callee, args)?;
                Ok(outs.into_iter().map(|(s, _)| (s, false)).collect())
            }
            ast::Stmt::Return { value, .. } => {
                let mut out = Vec::new();
                match value {
                    Some(e) => {
                        for (mut st, v) in self.eval(state, e)? {
                            let fid = st.frames.last().expect("frame").func;
                            if let (Some(slot), Some(v)) = (self.ir.func(fid).ret_slot, v) {
                                let serial = st.frames.last().unwrap().serial;
                                st.write(CAddr { serial, loc: MemLoc::Var(slot) }, v);
                            }
                            out.push((st, true));
                        }
                    }
                    None => out.push((state, true)),
                }
                Ok(out)
            }
            ast::Stmt::If { then_body, else_body, .. } => {
                let mut out = self.run_block(then_body, state.clone())?;
                out.extend(self.run_block(else_body, state)?);
                Ok(out)
            }
            ast::Stmt::While { body, .. } => {
                let mut out: Vec<BlockEnd> = Vec::new();
                let mut live = vec![state];
                for i in 0..=self.loop_bound {
                    out.extend(live.iter().cloned().map(|s| (s, false)));
                    if i == self.loop_bound {
                        break;
                    }
                    let mut next = Vec::new();
                    for st in live {
                        for (st2, returned) in self.run_block(body, st)? {
                            if returned {
                                out.push((st2, true));
                            } else {
                                next.push(st2);
                            }
                        }
                    }
                    live = next;
                    if live.is_empty() {
                        break;
                    }
                }
                Ok(out)
            }
        }
    }

    fn assign(
        &mut self,
        lhs: &ast::LValue,
        rhs: &ast::Expr,
        state: State,
    ) -> Result<Vec<BlockEnd>, Error> {
        let mut out = Vec::new();
        for (st, v) in self.eval(state, rhs)? {
            let addr = self.place(&st, lhs);
            let mut st = st;
            if let (Some(addr), Some(v)) = (addr, v) {
                if self.ir.is_pointer_key(addr.loc) {
                    st.write(addr, v);
                }
            }
            out.push((st, false));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::SourceProgram;
    use crate::fixtures;
    use crate::lower::compile;
    use crate::parser::parse;

    fn oracle(name: &str, k: u32) -> (ProgramIR, OracleOutcome) {
        let ir = fixtures::ir(name);
        let pois = enumerate_pois(&ir);
        let out = interpret_all(&ir, &pois, k, 100_000).unwrap();
        (ir, out)
    }

    fn names(ir: &ProgramIR, set: &BTreeSet<MemLoc>) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
        v.sort();
        v
    }

    #[test]
    fn p2_straight_line_observes_a() {
        let (ir, out) = oracle("P2", 0);
        assert_eq!(out.observations.len(), 1);
        let set = out.observations.values().next().unwrap();
        assert_eq!(names(&ir, set), vec!["g:a"]);
        assert_eq!(out.paths, 1);
    }

    #[test]
    fn p1_observes_a_only_null_overwritten() {
        let (ir, out) = oracle("P1", 0);
        let set = out.observations.values().next().unwrap();
        assert_eq!(names(&ir, set), vec!["g:a"]);
    }

    #[test]
    fn p5_else_poi_observes_both_actuals() {
        let (ir, out) = oracle("P5", 0);
        let pois = enumerate_pois(&ir);
        let else_poi = pois.iter().find(|p| p.span.line == 11).unwrap();
        let set = &out.observations[&else_poi.id];
        assert_eq!(names(&ir, set), vec!["g:a", "g:b"]);
        // 2 call sites x 2 branch arms.
        assert_eq!(out.paths, 4);
    }

    #[test]
    fn deref_of_null_is_skipped_and_recorded() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nint *p;\nvoid main() {\n    *p = 1;\n    p = &a;\n    *p = 2;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        let out = interpret_all(&ir, &pois, 0, 1000).unwrap();
        assert!(out.events.iter().any(|e| e.kind == DiagKind::NullDeref));
        let first = &out.observations[&pois[0].id];
        assert_eq!(names(&ir, first), vec!["null"]);
    }

    #[test]
    fn loops_unroll_zero_to_k() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nint c;\nint *p;\nvoid main() {\n    while (c) {\n        p = &a;\n    }\n    *p = 1;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        let k0 = interpret_all(&ir, &pois, 0, 1000).unwrap();
        assert_eq!(names(&ir, &k0.observations[&pois[0].id]), vec!["null"]);
        let k2 = interpret_all(&ir, &pois, 2, 1000).unwrap();
        assert_eq!(names(&ir, &k2.observations[&pois[0].id]), vec!["g:a", "null"]);
        assert_eq!(k2.paths, 3); // 0, 1, or 2 iterations
    }

    #[test]
    fn recursion_truncates_at_bound() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nvoid rec(void) {\n    rec();\n}\nvoid main() {\n    rec();\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        let out = interpret_all(&ir, &pois, 1, 1000).unwrap();
        assert_eq!(out.paths, 1);
        assert_eq!(out.truncated, 1);
        assert!(out.events.iter().any(|e| e.kind == DiagKind::PathTruncated));
    }

    #[test]
    fn determinism_two_runs_identical() {
        for (name, _) in fixtures::all() {
            let (_, a) = oracle(name, 2);
            let (_, b) = oracle(name, 2);
            assert_eq!(a.observations, b.observations);
            assert_eq!(a.final_stores, b.final_stores);
        }
    }

    #[test]
    fn lowering_preserves_final_stores_on_fixtures() {
        for (name, text) in fixtures::all() {
            let source = fixtures::source(name, text);
            let ast = parse(&source).unwrap();
            let ir = compile(&source).unwrap();
            let pois = enumerate_pois(&ir);
            for k in 0..=2 {
                let ir_out = interpret_all(&ir, &pois, k, 100_000).unwrap();
                let ast_out = ast_final_stores(&ast, &ir, k, 100_000).unwrap();
                assert_eq!(ir_out.final_stores, ast_out, "fixture {name} at k={k}");
            }
        }
    }

    #[test]
    fn multilevel_store_agrees_between_ast_and_ir() {
        let text = "int a;\nint b;\nint c;\nvoid main() {\n    int *r = &b;\n    int *p = &a;\n    int **q = &p;\n    **q = c;\n    *q = r;\n    **q = 7;\n}\n";
        let source = SourceProgram::single("t.mc", text);
        let ast = parse(&source).unwrap();
        let ir = compile(&source).unwrap();
        let pois = enumerate_pois(&ir);
        let ir_out = interpret_all(&ir, &pois, 1, 1000).unwrap();
        let ast_out = ast_final_stores(&ast, &ir, 1, 1000).unwrap();
        assert_eq!(ir_out.final_stores, ast_out);
    }
}
