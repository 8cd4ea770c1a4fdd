//! Flow-sensitive, context-insensitive interprocedural analysis.
//!
//! The functional approach: per-node IN/OUT values computed to a fixpoint
//! with GEN/KILL transfer functions, and whole-function summaries applied
//! at call sites. A function's boundary is the meet of the projected IN
//! values of all its call sites; the engine iterates over the PCG in
//! reverse post-order until no node value, boundary, or summary changes.
//!
//! Strong updates require a singleton pointee that is not a summary
//! location (heap cell or monolithic array), and a dereference whose
//! operand set contains null or unknown keeps the old binding alive (the
//! skipped-write path remains possible); both are refinements of the plain
//! kill rule and are what keeps the concrete oracle contained.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{DiagKind, Diagnostic};
use crate::ir::*;
use crate::memory::{default_init, FlowValue, PointsToMap};
use crate::Error;

/// IN/OUT pair per CFG node; `Top` until the node is first reached.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFacts {
    pub in_val: FlowValue,
    pub out_val: FlowValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncFacts {
    pub facts: Vec<NodeFacts>,
}

impl FuncFacts {
    fn new(n: usize) -> Self {
        FuncFacts {
            facts: vec![NodeFacts { in_val: FlowValue::Top, out_val: FlowValue::Top }; n],
        }
    }

    pub fn in_map(&self, n: NodeId) -> Option<&PointsToMap> {
        self.facts[n.index()].in_val.as_map()
    }

    pub fn out_map(&self, n: NodeId) -> Option<&PointsToMap> {
        self.facts[n.index()].out_val.as_map()
    }

    /// Meets `other` into `self` node-wise; returns true when anything grew.
    pub(crate) fn meet_with(&mut self, other: &FuncFacts) -> bool {
        let mut changed = false;
        for (mine, theirs) in self.facts.iter_mut().zip(other.facts.iter()) {
            let in_val = FlowValue::meet(&mine.in_val, &theirs.in_val);
            let out_val = FlowValue::meet(&mine.out_val, &theirs.out_val);
            if in_val != mine.in_val || out_val != mine.out_val {
                changed = true;
                mine.in_val = in_val;
                mine.out_val = out_val;
            }
        }
        changed
    }
}

pub(crate) fn owner_of_key(ir: &ProgramIR, key: MemLoc) -> Option<FuncId> {
    match key {
        MemLoc::Var(v) | MemLoc::Field(v, _) | MemLoc::Array(v) => ir.var(v).owner,
        _ => None,
    }
}

/// Splits a dereferenced pointee set into valid targets, recording
/// diagnostics for null/unknown members. Returns (valid, all_valid).
fn deref_targets(
    set: &BTreeSet<MemLoc>,
    span: crate::ast::Span,
    key: MemLoc,
    diags: &mut BTreeSet<Diagnostic>,
) -> (Vec<MemLoc>, bool) {
    let mut valid = Vec::new();
    let mut all_valid = true;
    for loc in set {
        match loc {
            MemLoc::Null => {
                diags.insert(Diagnostic { span, kind: DiagKind::NullDeref, key });
                all_valid = false;
            }
            MemLoc::Unknown => {
                diags.insert(Diagnostic { span, kind: DiagKind::UnknownDeref, key });
                all_valid = false;
            }
            MemLoc::Func(_) => {
                all_valid = false;
            }
            _ => valid.push(*loc),
        }
    }
    (valid, all_valid)
}

/// Writes `set` to `dst`, strongly only when permitted and `dst` is not a
/// summary location.
fn assign(ir: &ProgramIR, out: &mut PointsToMap, dst: MemLoc, set: BTreeSet<MemLoc>, strong: bool) {
    if strong && !dst.is_summary() {
        out.set(dst, set);
    } else {
        debug_assert!(ir.is_pointer_key(dst));
        out.union_into(dst, &set);
    }
}

/// The per-node transfer function (`OUT = GEN ∪ (IN − KILL)`):
///
/// - address-of `p=&a`: kill p, gen `(p,{a})`
/// - copy `p=q`: kill p, gen `(p, IN(q))`
/// - load `p=*q`: kill p, gen `(p, ∪ IN(x) for x in IN(q))`
/// - store `*p=q`: kill the single valid non-summary pointee of p, if any;
///   gen `(x, IN(q))` for every valid pointee x
/// - alloc: as address-of with the heap cell of the allocation line
///
/// Entry seeds uninitialized locals to `{Unknown}`. Call nodes are the
/// engines' responsibility and pass through unchanged here.
pub fn transfer(
    ir: &ProgramIR,
    f: &FunctionIR,
    n: NodeId,
    in_map: &PointsToMap,
    diags: &mut BTreeSet<Diagnostic>,
) -> PointsToMap {
    let span = f.spans[n.index()];
    let mut out = in_map.clone();
    match f.node(n) {
        Node::Entry => {
            for key in &f.entry_seeds {
                assign(ir, &mut out, *key, [MemLoc::Unknown].into(), true);
            }
        }
        Node::AddressOf { dst, loc } => {
            assign(ir, &mut out, *dst, [*loc].into(), true);
        }
        Node::Copy { dst, src } => {
            let set = in_map.pointees(*src);
            assign(ir, &mut out, *dst, set, true);
        }
        Node::Load { dst, src } => {
            let srcs = in_map.pointees(*src);
            let (valid, all_valid) = deref_targets(&srcs, span, *src, diags);
            if let Some(dst) = dst {
                let mut gathered = BTreeSet::new();
                for x in valid {
                    if ir.is_pointer_key(x) {
                        gathered.extend(in_map.pointees(x));
                    }
                }
                if !all_valid {
                    // The read may be skipped (null/unknown operand), in
                    // which case dst keeps its old, possibly uninitialized
                    // value.
                    gathered.insert(MemLoc::Unknown);
                }
                assign(ir, &mut out, *dst, gathered, all_valid);
            }
        }
        Node::Store { ptr, src } => {
            let targets = in_map.pointees(*ptr);
            let (valid, all_valid) = deref_targets(&targets, span, *ptr, diags);
            let value = match src {
                StoreSrc::Key(k) => Some(in_map.pointees(*k)),
                StoreSrc::Null => Some([MemLoc::Null].into()),
                StoreSrc::Scalar => None,
            };
            if let Some(value) = value {
                let strong = targets.len() == 1 && all_valid;
                for x in valid {
                    if ir.is_pointer_key(x) {
                        assign(ir, &mut out, x, value.clone(), strong);
                    }
                }
            }
        }
        Node::Alloc { dst, line } => {
            assign(ir, &mut out, *dst, [MemLoc::Heap(*line)].into(), true);
        }
        Node::Call { .. } | Node::Exit | Node::Branch | Node::Nop => {}
    }
    out
}

/// Transfer abstraction of a whole function, applied at its call sites.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionSummary {
    /// Caller-visible keys strongly updated on every Entry→Exit path.
    pub kill: BTreeSet<MemLoc>,
    /// Exit bindings of every key the function (or its callees) may modify,
    /// restricted to keys visible to callers.
    pub gen: PointsToMap,
    /// Exit binding of the return slot, for pointer-returning functions.
    pub ret: Option<BTreeSet<MemLoc>>,
}

/// `OUT = gen ∪ (IN − kill)`. Actual-to-formal binding goes into the callee
/// boundary (not the caller's OUT) and the return value is bound by the
/// caller at the call node.
pub fn apply_summary(s: &FunctionSummary, in_val: &PointsToMap) -> PointsToMap {
    let mut out = in_val.clone();
    for k in &s.kill {
        out.remove(*k);
    }
    out.meet_with(&s.gen);
    out
}

/// Evaluates an actual argument to the pointee set bound to a pointer
/// formal of type `fty`; `None` means no binding (scalar or type mismatch).
pub(crate) fn eval_actual(
    ir: &ProgramIR,
    in_map: &PointsToMap,
    actual: &Actual,
    fty: Type,
) -> Option<BTreeSet<MemLoc>> {
    match actual {
        Actual::Key(k) => {
            if crate::andersen::key_type(ir, *k) == Some(fty) {
                Some(in_map.pointees(*k))
            } else {
                None
            }
        }
        Actual::AddrOf(loc) => {
            let ok = match loc {
                MemLoc::Func(_) => fty.base == Base::FnPtr,
                _ => {
                    fty.base != Base::FnPtr
                        && crate::andersen::key_type(ir, *loc).map(|t| t.ptr + 1) == Some(fty.ptr)
                }
            };
            if ok {
                Some([*loc].into())
            } else {
                None
            }
        }
        Actual::Null => Some([MemLoc::Null].into()),
        Actual::Scalar => None,
    }
}

/// The pointee set bound to a pointer formal at a call site. A formal with
/// no usable actual (arity or type mismatch, only possible through function
/// pointers) is effectively uninitialized and binds to `{Unknown}`.
pub(crate) fn formal_binding(
    ir: &ProgramIR,
    in_map: &PointsToMap,
    actual: Option<&Actual>,
    fty: Type,
) -> BTreeSet<MemLoc> {
    actual
        .and_then(|a| eval_actual(ir, in_map, a, fty))
        .unwrap_or_else(|| [MemLoc::Unknown].into())
}

/// Callee boundary contribution of one call site: the caller's IN with the
/// callee's formals rebound from the actuals.
pub(crate) fn project_boundary(
    ir: &ProgramIR,
    in_map: &PointsToMap,
    callee: FuncId,
    args: &[Actual],
) -> PointsToMap {
    let cf = ir.func(callee);
    let mut b = in_map.clone();
    for formal in &cf.params {
        b.remove(MemLoc::Var(*formal));
    }
    for (i, formal) in cf.params.iter().enumerate() {
        let fty = ir.var(*formal).ty;
        if !fty.is_pointer() {
            continue;
        }
        b.set(MemLoc::Var(*formal), formal_binding(ir, in_map, args.get(i), fty));
    }
    b
}

/// How the engines compute OUT at a call node given one callee.
pub(crate) trait CallHandler {
    fn call_out(
        &mut self,
        ir: &ProgramIR,
        caller: &FunctionIR,
        node: NodeId,
        in_map: &PointsToMap,
        diags: &mut BTreeSet<Diagnostic>,
    ) -> Result<PointsToMap, Error>;
}

/// Least fixpoint of IN/OUT over one function's CFG with the given boundary.
/// IN of a node is the union (meet) of its predecessors' OUT values.
///
/// Facts accumulate monotonically: each round meets the recomputed value
/// into the stored one. A purely monotone system (the flow-sensitive
/// engine) reaches the same least fixpoint either way; the value-context
/// engine's call-return merge is not monotone in the caller state
/// (a larger context withholds more caller bindings), so accumulation is
/// what guarantees termination there.
pub(crate) fn analyze_cfg<H: CallHandler>(
    ir: &ProgramIR,
    f: &FunctionIR,
    boundary: &PointsToMap,
    handler: &mut H,
    max_rounds: u32,
    analysis: &'static str,
) -> Result<(FuncFacts, PointsToMap), Error> {
    let mut facts = FuncFacts::new(f.nodes.len());
    let rpo = f.rpo();
    let mut scratch = BTreeSet::new();
    let mut rounds = 0u32;
    loop {
        let mut changed = false;
        for n in &rpo {
            let n = *n;
            let flowed = if n == ENTRY {
                FlowValue::Value(boundary.clone())
            } else {
                let mut acc = FlowValue::Top;
                for p in &f.preds[n.index()] {
                    acc = FlowValue::meet(&acc, &facts.facts[p.index()].out_val);
                }
                acc
            };
            let in_val = FlowValue::meet(&facts.facts[n.index()].in_val, &flowed);
            let in_map = match in_val.as_map() {
                Some(m) => m,
                None => continue, // not yet reached
            };
            let out_map = match f.node(n) {
                Node::Call { .. } => handler.call_out(ir, f, n, in_map, &mut scratch)?,
                _ => transfer(ir, f, n, in_map, &mut scratch),
            };
            let out_val =
                FlowValue::meet(&facts.facts[n.index()].out_val, &FlowValue::Value(out_map));
            if facts.facts[n.index()].in_val != in_val || facts.facts[n.index()].out_val != out_val
            {
                changed = true;
                facts.facts[n.index()] = NodeFacts { in_val, out_val };
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::BudgetExceeded {
                analysis,
                what: "iteration",
                limit: max_rounds as u64,
                detail: format!("CFG fixpoint in `{}` did not stabilize", f.name),
            });
        }
    }
    let exit = facts.in_map(EXIT).cloned().unwrap_or_default();
    Ok((facts, exit))
}

/// Functions reachable from the entry over the (closed) PCG, in reverse
/// post-order; deterministic.
pub fn pcg_rpo(ir: &ProgramIR, pcg: &BTreeSet<(FuncId, NodeId, FuncId)>) -> Vec<FuncId> {
    let mut callees: BTreeMap<FuncId, BTreeSet<FuncId>> = BTreeMap::new();
    for (caller, _, callee) in pcg {
        callees.entry(*caller).or_default().insert(*callee);
    }
    let mut order = Vec::new();
    let mut state: BTreeMap<FuncId, u8> = BTreeMap::new(); // 1 = visiting, 2 = done
    let mut stack = vec![(ir.entry, false)];
    while let Some((fid, expanded)) = stack.pop() {
        if expanded {
            state.insert(fid, 2);
            order.push(fid);
            continue;
        }
        if state.contains_key(&fid) {
            continue;
        }
        state.insert(fid, 1);
        stack.push((fid, true));
        if let Some(cs) = callees.get(&fid) {
            for c in cs.iter().rev() {
                if !state.contains_key(c) {
                    stack.push((*c, false));
                }
            }
        }
    }
    order.reverse();
    order
}

#[derive(Debug, Clone)]
pub struct FsResult {
    pub facts: BTreeMap<FuncId, FuncFacts>,
    pub summaries: BTreeMap<FuncId, FunctionSummary>,
    pub boundaries: BTreeMap<FuncId, PointsToMap>,
    pub diags: BTreeSet<Diagnostic>,
    pub passes: u32,
}

impl FsResult {
    /// The FS set at a PoI: the IN value of the dereferencing node for the
    /// dereferenced key. `None` when no analyzed context reaches the
    /// function (dead code).
    pub fn poi_set(&self, poi: &PoISite) -> Option<BTreeSet<MemLoc>> {
        let facts = self.facts.get(&poi.func)?;
        facts.in_map(poi.node).map(|m| m.pointees(poi.key))
    }
}

struct FsHandler<'a> {
    summaries: &'a BTreeMap<FuncId, FunctionSummary>,
    call_edges: &'a BTreeMap<(FuncId, NodeId), Vec<FuncId>>,
    proposals: BTreeMap<FuncId, PointsToMap>,
}

impl CallHandler for FsHandler<'_> {
    fn call_out(
        &mut self,
        ir: &ProgramIR,
        caller: &FunctionIR,
        node: NodeId,
        in_map: &PointsToMap,
        diags: &mut BTreeSet<Diagnostic>,
    ) -> Result<PointsToMap, Error> {
        let (args, ret_to) = match caller.node(node) {
            Node::Call { callee, args, ret_to } => {
                if let Callee::Indirect(k) = callee {
                    deref_targets(&in_map.pointees(*k), caller.spans[node.index()], *k, diags);
                }
                (args, *ret_to)
            }
            _ => unreachable!("call handler on non-call node"),
        };
        let callees = self
            .call_edges
            .get(&(caller.id, node))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        if callees.is_empty() {
            return Ok(in_map.clone());
        }
        let mut acc = FlowValue::Top;
        for callee in callees {
            let boundary = project_boundary(ir, in_map, *callee, args);
            self.proposals
                .entry(*callee)
                .and_modify(|b| {
                    b.meet_with(&boundary);
                })
                .or_insert(boundary);
            let out = match self.summaries.get(callee) {
                Some(s) => {
                    let mut out = apply_summary(s, in_map);
                    if let (Some(target), Some(ret)) = (ret_to, s.ret.as_ref()) {
                        let cf = ir.func(*callee);
                        let rty = cf.ret_slot.map(|s| ir.var(s).ty);
                        if crate::andersen::key_type(ir, target) == rty {
                            assign(ir, &mut out, target, ret.clone(), true);
                        }
                    }
                    out
                }
                // Summary not yet computed this pass; the outer loop
                // re-runs until it is.
                None => in_map.clone(),
            };
            acc = FlowValue::meet(&acc, &FlowValue::Value(out));
        }
        Ok(acc.as_map().cloned().unwrap_or_else(|| in_map.clone()))
    }
}

/// Runs the flow-sensitive analysis over the whole program. `pcg` must be
/// closed over function pointers (see `andersen::run`).
pub fn run(
    ir: &ProgramIR,
    pcg: &BTreeSet<(FuncId, NodeId, FuncId)>,
    max_rounds: u32,
) -> Result<FsResult, Error> {
    let mut call_edges: BTreeMap<(FuncId, NodeId), Vec<FuncId>> = BTreeMap::new();
    for (caller, node, callee) in pcg {
        call_edges.entry((*caller, *node)).or_default().push(*callee);
    }
    // Bottom-up over the PCG (callees before callers), so a caller's pass
    // sees its callees' summaries from the start; recursion iterates.
    let mut order = pcg_rpo(ir, pcg);
    order.reverse();

    let mut boundaries: BTreeMap<FuncId, PointsToMap> = BTreeMap::new();
    boundaries.insert(ir.entry, entry_boundary(ir));
    let mut summaries: BTreeMap<FuncId, FunctionSummary> = BTreeMap::new();
    let mut facts_by_func: BTreeMap<FuncId, FuncFacts> = BTreeMap::new();

    let mut passes = 0u32;
    loop {
        let mut changed = false;
        for fid in &order {
            let boundary = match boundaries.get(fid) {
                Some(b) => b.clone(),
                None => continue, // never called yet
            };
            let f = ir.func(*fid);
            let mut handler =
                FsHandler { summaries: &summaries, call_edges: &call_edges, proposals: BTreeMap::new() };
            let (facts, exit) =
                analyze_cfg(ir, f, &boundary, &mut handler, max_rounds, "flow-sensitive analysis")?;
            let proposals = std::mem::take(&mut handler.proposals);
            for (callee, prop) in proposals {
                match boundaries.get_mut(&callee) {
                    Some(b) => changed |= b.meet_with(&prop),
                    None => {
                        boundaries.insert(callee, prop);
                        changed = true;
                    }
                }
            }
            // Summaries accumulate monotonically: GEN and RET only grow,
            // KILL only shrinks. Boundaries grow, so transient summary
            // states computed from partial callee information can be
            // incomparable pass to pass; accumulation keeps the outer
            // iteration terminating.
            let computed = build_summary(ir, f, &facts, &exit, &summaries, &call_edges);
            let merged = match summaries.get(fid) {
                None => computed,
                Some(old) => FunctionSummary {
                    kill: old.kill.intersection(&computed.kill).copied().collect(),
                    gen: crate::memory::meet_maps(&old.gen, &computed.gen),
                    ret: match (old.ret.clone(), computed.ret) {
                        (Some(mut a), Some(b)) => {
                            a.extend(b);
                            Some(a)
                        }
                        (a, b) => a.or(b),
                    },
                },
            };
            if summaries.get(fid) != Some(&merged) {
                summaries.insert(*fid, merged);
                changed = true;
            }
            // Facts accumulate across passes, mirroring the context-
            // sensitive engine: recursive cycles are analyzed with interim
            // summaries, and the per-PoI containment of the two engines
            // relies on both keeping those interim values.
            match facts_by_func.get_mut(fid) {
                Some(old) => {
                    old.meet_with(&facts);
                }
                None => {
                    facts_by_func.insert(*fid, facts);
                }
            }
        }
        passes += 1;
        if !changed {
            break;
        }
        if passes > max_rounds {
            return Err(Error::BudgetExceeded {
                analysis: "flow-sensitive analysis",
                what: "iteration",
                limit: max_rounds as u64,
                detail: "interprocedural fixpoint did not stabilize".to_string(),
            });
        }
    }

    let diags = final_diagnostics(ir, &facts_by_func);
    Ok(FsResult { facts: facts_by_func, summaries, boundaries, diags, passes })
}

/// Entry boundary: global initializations, plus `{Unknown}` for the entry
/// function's formals (no call site exists to bind them).
pub fn entry_boundary(ir: &ProgramIR) -> PointsToMap {
    let mut b = default_init(ir);
    for p in &ir.func(ir.entry).params {
        if ir.var(*p).ty.is_pointer() {
            b.set(MemLoc::Var(*p), [MemLoc::Unknown].into());
        }
    }
    b
}

/// Re-runs transfers over converged facts for one function, collecting
/// dereference diagnostics (transient fixpoint states are ignored).
pub(crate) fn sweep_function_diags(
    ir: &ProgramIR,
    f: &FunctionIR,
    facts: &FuncFacts,
    diags: &mut BTreeSet<Diagnostic>,
) {
    for n in f.node_ids() {
        let in_map = match facts.in_map(n) {
            Some(m) => m,
            None => continue,
        };
        match f.node(n) {
            Node::Call { callee: Callee::Indirect(k), .. } => {
                deref_targets(&in_map.pointees(*k), f.spans[n.index()], *k, diags);
            }
            Node::Call { .. } => {}
            _ => {
                transfer(ir, f, n, in_map, diags);
            }
        }
    }
}

fn final_diagnostics(
    ir: &ProgramIR,
    facts_by_func: &BTreeMap<FuncId, FuncFacts>,
) -> BTreeSet<Diagnostic> {
    let mut diags = BTreeSet::new();
    for (fid, facts) in facts_by_func {
        sweep_function_diags(ir, ir.func(*fid), facts, &mut diags);
    }
    diags
}

/// Builds the (KILL, GEN) summary from a function's converged facts.
///
/// GEN holds the exit bindings of every key the function may modify:
/// directly assigned keys that outlive the call (not this frame's own
/// locals), every store target (stores may reach the caller's frame through
/// passed pointers, including its own recursion-aliased locals), and
/// whatever its callees may modify. KILL holds the caller-visible keys
/// strongly updated on every path, computed by a forward must-analysis.
fn build_summary(
    ir: &ProgramIR,
    f: &FunctionIR,
    facts: &FuncFacts,
    exit: &PointsToMap,
    summaries: &BTreeMap<FuncId, FunctionSummary>,
    call_edges: &BTreeMap<(FuncId, NodeId), Vec<FuncId>>,
) -> FunctionSummary {
    let mut may_mod: BTreeSet<MemLoc> = BTreeSet::new();
    for n in f.node_ids() {
        let in_map = match facts.in_map(n) {
            Some(m) => m,
            None => continue,
        };
        match f.node(n) {
            Node::Store { ptr, src: StoreSrc::Key(_) | StoreSrc::Null } => {
                for x in in_map.pointees(*ptr) {
                    if ir.is_pointer_key(x) {
                        may_mod.insert(x);
                    }
                }
            }
            Node::Call { ret_to, .. } => {
                if let Some(t) = ret_to {
                    if owner_of_key(ir, *t) != Some(f.id) {
                        may_mod.insert(*t);
                    }
                }
                for callee in call_edges.get(&(f.id, n)).map(Vec::as_slice).unwrap_or(&[]) {
                    if let Some(s) = summaries.get(callee) {
                        may_mod.extend(s.gen.keys());
                        may_mod.extend(s.kill.iter().copied());
                    }
                }
            }
            node => {
                if let Some(dst) = node.direct_target() {
                    if owner_of_key(ir, dst) != Some(f.id) {
                        may_mod.insert(dst);
                    }
                }
            }
        }
    }

    let mut gen = PointsToMap::new();
    for (k, set) in exit.iter() {
        if may_mod.contains(&k) {
            gen.set(k, set.clone());
        }
    }
    let ret = f.ret_slot.and_then(|s| exit.get(MemLoc::Var(s)).cloned());
    let kill = must_kills(ir, f, facts, summaries, call_edges);
    FunctionSummary { kill, gen, ret }
}

/// Forward must-analysis: the set of caller-visible keys strongly updated
/// on every path from Entry to each node. `None` is the optimistic
/// "everything" value for not-yet-reached nodes.
fn must_kills(
    ir: &ProgramIR,
    f: &FunctionIR,
    facts: &FuncFacts,
    summaries: &BTreeMap<FuncId, FunctionSummary>,
    call_edges: &BTreeMap<(FuncId, NodeId), Vec<FuncId>>,
) -> BTreeSet<MemLoc> {
    let rpo = f.rpo();
    let mut out: Vec<Option<BTreeSet<MemLoc>>> = vec![None; f.nodes.len()];
    loop {
        let mut changed = false;
        for n in &rpo {
            let n = *n;
            let in_k: Option<BTreeSet<MemLoc>> = if n == ENTRY {
                Some(BTreeSet::new())
            } else {
                let mut acc: Option<BTreeSet<MemLoc>> = None;
                let mut seen = false;
                for p in &f.preds[n.index()] {
                    match &out[p.index()] {
                        None => continue, // optimistic top
                        Some(k) => {
                            acc = Some(match acc {
                                None => k.clone(),
                                Some(a) => a.intersection(k).copied().collect(),
                            });
                            seen = true;
                        }
                    }
                }
                if !seen {
                    continue;
                }
                acc
            };
            let mut k = in_k.unwrap_or_default();
            k.extend(node_strong_kills(ir, f, n, facts, summaries, call_edges));
            if out[n.index()].as_ref() != Some(&k) {
                out[n.index()] = Some(k);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut kill = out[EXIT.index()].clone().unwrap_or_default();
    kill.retain(|k| owner_of_key(ir, *k) != Some(f.id));
    kill
}

fn node_strong_kills(
    ir: &ProgramIR,
    f: &FunctionIR,
    n: NodeId,
    facts: &FuncFacts,
    summaries: &BTreeMap<FuncId, FunctionSummary>,
    call_edges: &BTreeMap<(FuncId, NodeId), Vec<FuncId>>,
) -> BTreeSet<MemLoc> {
    let mut kills = BTreeSet::new();
    let in_map = match facts.in_map(n) {
        Some(m) => m,
        None => return kills,
    };
    match f.node(n) {
        Node::Store { ptr, src: StoreSrc::Key(_) | StoreSrc::Null } => {
            let targets = in_map.pointees(*ptr);
            if targets.len() == 1 {
                let x = *targets.iter().next().unwrap();
                if !x.is_summary() && ir.is_pointer_key(x) {
                    kills.insert(x);
                }
            }
        }
        Node::Call { ret_to, .. } => {
            let callees = call_edges.get(&(f.id, n)).map(Vec::as_slice).unwrap_or(&[]);
            let mut acc: Option<BTreeSet<MemLoc>> = None;
            let mut all_ret = !callees.is_empty();
            for callee in callees {
                match summaries.get(callee) {
                    Some(s) => {
                        acc = Some(match acc {
                            None => s.kill.clone(),
                            Some(a) => a.intersection(&s.kill).copied().collect(),
                        });
                        all_ret &= s.ret.is_some()
                            && ir.func(*callee).ret_slot.map(|r| ir.var(r).ty)
                                == ret_to.and_then(|t| crate::andersen::key_type(ir, t));
                    }
                    None => {
                        acc = Some(BTreeSet::new());
                        all_ret = false;
                    }
                }
            }
            kills.extend(acc.unwrap_or_default());
            if let (Some(t), true) = (ret_to, all_ret) {
                if !t.is_summary() {
                    kills.insert(*t);
                }
            }
        }
        node => {
            if let Some(dst) = node.direct_target() {
                if !dst.is_summary() {
                    kills.insert(dst);
                }
            }
        }
    }
    kills
}

/// At a converged fixpoint, recomputing every non-call node's transfer from
/// its stored IN must reproduce the stored OUT.
pub fn check_transfer_identity(ir: &ProgramIR, f: &FunctionIR, facts: &FuncFacts) -> bool {
    let mut scratch = BTreeSet::new();
    for n in f.node_ids() {
        if matches!(f.node(n), Node::Call { .. }) {
            continue;
        }
        let (in_map, out_map) = match (facts.in_map(n), facts.out_map(n)) {
            (Some(i), Some(o)) => (i, o),
            _ => continue,
        };
        if &transfer(ir, f, n, in_map, &mut scratch) != out_map {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::andersen;
    use crate::ast::SourceProgram;
    use crate::fixtures;
    use crate::lower::compile;

    fn analyzed(text: &str) -> (ProgramIR, FsResult) {
        let ir = compile(&SourceProgram::single("t.mc", text)).unwrap();
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        (ir, fs)
    }

    fn set_names(ir: &ProgramIR, set: &BTreeSet<MemLoc>) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
        v.sort();
        v
    }

    fn poi_at_line(ir: &ProgramIR, line: u32) -> PoISite {
        enumerate_pois(ir)
            .into_iter()
            .find(|p| p.span.line == line)
            .expect("PoI at line")
    }

    // Store *p=r with IN = {p->{q}, q->{a}, r->{b}}: q is the single
    // pointee, its old binding is killed and replaced by IN(r).
    #[test]
    fn store_single_pointee_kills() {
        let (ir, _) = analyzed(
            "int a;\nint b;\nvoid main() {\n    int *q = &a;\n    int *r = &b;\n    int **p = &q;\n    *p = r;\n}\n",
        );
        let f = ir.func(ir.func_by_name("main").unwrap());
        let store = f
            .node_ids()
            .find(|n| matches!(f.node(*n), Node::Store { .. }))
            .unwrap();
        let a = ir.parse_loc("g:a").unwrap();
        let b = ir.parse_loc("g:b").unwrap();
        let q = ir.parse_loc("l:main::q").unwrap();
        let r = ir.parse_loc("l:main::r").unwrap();
        let p = ir.parse_loc("l:main::p").unwrap();
        let mut in_map = PointsToMap::new();
        in_map.set(p, [q].into());
        in_map.set(q, [a].into());
        in_map.set(r, [b].into());
        let mut diags = BTreeSet::new();
        let out = transfer(&ir, f, store, &in_map, &mut diags);
        assert_eq!(out.pointees(q), [b].into_iter().collect::<BTreeSet<_>>());
        assert_eq!(out.pointees(p), [q].into_iter().collect::<BTreeSet<_>>());
        assert!(!out.pointees(q).contains(&a), "old binding of q must be killed");
        assert!(diags.is_empty());
    }

    #[test]
    fn store_multiple_pointees_is_weak() {
        let (ir, _) = analyzed(
            "int a;\nint b;\nint c;\nvoid main() {\n    int *pa = &a;\n    int *pb = &b;\n    int *q = &c;\n    int **p = &pa;\n    *p = q;\n}\n",
        );
        let f = ir.func(ir.func_by_name("main").unwrap());
        let store = f.node_ids().find(|n| matches!(f.node(*n), Node::Store { .. })).unwrap();
        let (a, b, c) = (
            ir.parse_loc("g:a").unwrap(),
            ir.parse_loc("g:b").unwrap(),
            ir.parse_loc("g:c").unwrap(),
        );
        let (pa, pb, q, p) = (
            ir.parse_loc("l:main::pa").unwrap(),
            ir.parse_loc("l:main::pb").unwrap(),
            ir.parse_loc("l:main::q").unwrap(),
            ir.parse_loc("l:main::p").unwrap(),
        );
        let mut in_map = PointsToMap::new();
        in_map.set(p, [pa, pb].into());
        in_map.set(pa, [a].into());
        in_map.set(pb, [b].into());
        in_map.set(q, [c].into());
        let mut diags = BTreeSet::new();
        let out = transfer(&ir, f, store, &in_map, &mut diags);
        assert_eq!(out.pointees(pa), [a, c].into_iter().collect::<BTreeSet<_>>());
        assert_eq!(out.pointees(pb), [b, c].into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn copy_from_unbound_kills_destination() {
        let (ir, _) = analyzed("int a;\nvoid main() {\n    int *p = &a;\n    int *q;\n    p = q;\n}\n");
        let f = ir.func(ir.func_by_name("main").unwrap());
        let copy = f
            .node_ids()
            .filter(|n| matches!(f.node(*n), Node::Copy { .. }))
            .last()
            .unwrap();
        let a = ir.parse_loc("g:a").unwrap();
        let p = ir.parse_loc("l:main::p").unwrap();
        let mut in_map = PointsToMap::new();
        in_map.set(p, [a].into());
        let mut diags = BTreeSet::new();
        let out = transfer(&ir, f, copy, &in_map, &mut diags);
        assert!(out.get(p).is_none());
    }

    #[test]
    fn summary_application_examples() {
        let identity = FunctionSummary::default();
        let mut in_map = PointsToMap::new();
        let g = MemLoc::Heap(1); // stand-ins; only map algebra matters here
        let a = MemLoc::Heap(2);
        let null = MemLoc::Null;
        in_map.set(g, [null].into());
        assert_eq!(apply_summary(&identity, &in_map), in_map);

        let mut total = FunctionSummary::default();
        total.kill.insert(g);
        total.gen.set(g, [a].into());
        assert_eq!(apply_summary(&total, &in_map).pointees(g), [a].into_iter().collect::<BTreeSet<_>>());

        let mut cond = FunctionSummary::default();
        cond.gen.set(g, [a].into());
        assert_eq!(
            apply_summary(&cond, &in_map).pointees(g),
            [a, null].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn p2_straight_line_facts() {
        let ir = fixtures::ir("P2");
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        let poi = poi_at_line(&ir, 5);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a"]);
    }

    #[test]
    fn p1_null_killed_at_assignment() {
        let ir = fixtures::ir("P1");
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        let poi = poi_at_line(&ir, 6);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a"]);
    }

    #[test]
    fn p3_boundary_merges_equal_actuals() {
        let ir = fixtures::ir("P3");
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        let f = ir.func_by_name("f").unwrap();
        let x = ir.parse_loc("l:f::x").unwrap();
        assert_eq!(set_names(&ir, &fs.boundaries[&f].pointees(x)), vec!["g:a"]);
        let poi = poi_at_line(&ir, 4);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a"]);
    }

    #[test]
    fn p4_boundary_merges_different_actuals() {
        let ir = fixtures::ir("P4");
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        let poi = poi_at_line(&ir, 5);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a", "g:b"]);
    }

    #[test]
    fn p5_reassignment_splits_branches() {
        let ir = fixtures::ir("P5");
        let fis = andersen::run(&ir, 1000).unwrap();
        let fs = run(&ir, &fis.pcg, 1000).unwrap();
        let then_poi = poi_at_line(&ir, 9);
        let else_poi = poi_at_line(&ir, 11);
        assert_eq!(set_names(&ir, &fs.poi_set(&then_poi).unwrap()), vec!["g:g"]);
        assert_eq!(set_names(&ir, &fs.poi_set(&else_poi).unwrap()), vec!["g:a", "g:b"]);
    }

    #[test]
    fn loop_head_reaches_two_iteration_fixpoint() {
        let (ir, fs) = analyzed(
            "int a;\nint c;\nint *p;\nvoid main() {\n    while (c) {\n        p = &a;\n    }\n    *p = 1;\n}\n",
        );
        let f = ir.func(ir.func_by_name("main").unwrap());
        let header = *f.loop_headers.iter().next().unwrap();
        let facts = &fs.facts[&f.id];
        let p = ir.parse_loc("g:p").unwrap();
        assert_eq!(
            set_names(&ir, &facts.in_map(header).unwrap().pointees(p)),
            vec!["g:a", "null"]
        );
    }

    #[test]
    fn transfer_identity_holds_at_fixpoint() {
        for (name, _) in fixtures::all() {
            let ir = fixtures::ir(name);
            let fis = andersen::run(&ir, 1000).unwrap();
            let fs = run(&ir, &fis.pcg, 1000).unwrap();
            for (fid, facts) in &fs.facts {
                assert!(
                    check_transfer_identity(&ir, ir.func(*fid), facts),
                    "Eq.(2) identity failed in {name}"
                );
            }
        }
    }

    #[test]
    fn caller_local_untouched_by_callee_survives() {
        let (ir, fs) = analyzed(
            "int a;\nint b;\nint g;\nvoid f(int *x) { *x = 1; }\nvoid main() {\n    int *keep = &b;\n    f(&a);\n    *keep = 2;\n}\n",
        );
        let poi = poi_at_line(&ir, 8);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:b"]);
    }

    #[test]
    fn callee_strong_global_update_kills_in_caller() {
        let (ir, fs) = analyzed(
            "int a;\nint b;\nint *gp;\nvoid setg(void) { gp = &a; }\nvoid main() {\n    gp = &b;\n    setg();\n    *gp = 1;\n}\n",
        );
        let poi = poi_at_line(&ir, 8);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a"]);
        let setg = ir.func_by_name("setg").unwrap();
        let gp = ir.parse_loc("g:gp").unwrap();
        assert!(fs.summaries[&setg].kill.contains(&gp));
    }

    #[test]
    fn conditional_callee_update_is_weak() {
        let (ir, fs) = analyzed(
            "int a;\nint b;\nint c;\nint *gp;\nvoid maybe(void) {\n    if (c) {\n        gp = &a;\n    }\n}\nvoid main() {\n    gp = &b;\n    maybe();\n    *gp = 1;\n}\n",
        );
        let poi = poi_at_line(&ir, 13);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a", "g:b"]);
        let maybe = ir.func_by_name("maybe").unwrap();
        assert!(fs.summaries[&maybe].kill.is_empty());
    }

    #[test]
    fn null_deref_diagnosed_and_analysis_continues() {
        let (ir, fs) = analyzed(
            "int a;\nint c;\nint *p;\nvoid main() {\n    if (c) {\n        p = &a;\n    }\n    *p = 1;\n}\n",
        );
        assert!(fs.diags.iter().any(|d| d.kind == DiagKind::NullDeref));
        let poi = poi_at_line(&ir, 8);
        assert_eq!(set_names(&ir, &fs.poi_set(&poi).unwrap()), vec!["g:a", "null"]);
    }

    #[test]
    fn dead_function_has_no_facts() {
        let (ir, fs) = analyzed("int a;\nvoid dead(int *x) { *x = 1; }\nvoid main() { }\n");
        let dead = ir.func_by_name("dead").unwrap();
        assert!(!fs.facts.contains_key(&dead));
    }
}
