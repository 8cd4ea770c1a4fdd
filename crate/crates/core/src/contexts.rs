//! Flow- and context-sensitive analysis via value contexts.
//!
//! A calling context is the dataflow value at the IN of a call site,
//! projected through the actual-to-formal binding plus every binding the
//! callee can observe: globals and everything transitively reachable from
//! formals and globals. Each function is solved separately per distinct
//! context value and the ⟨function, context, summary⟩ tuple is memoized;
//! recursive cycles reuse the current partial summary and the engine
//! iterates until no summary changes. Two contexts are distinct exactly
//! when their values differ.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::diag::Diagnostic;
use crate::flow::{
    analyze_cfg, entry_boundary, formal_binding, owner_of_key, sweep_function_diags, CallHandler,
    FuncFacts,
};
use crate::ir::*;
use crate::memory::{FlowValue, PointsToMap};
use crate::Error;

/// One analyzed ⟨function, context⟩ pair.
#[derive(Debug, Clone)]
pub struct ContextEntry {
    pub id: u32,
    /// The context: the callee boundary this entry was solved under.
    pub value: PointsToMap,
    pub facts: FuncFacts,
    pub exit: PointsToMap,
}

#[derive(Debug, Clone)]
pub struct CsResult {
    pub contexts: BTreeMap<FuncId, Vec<ContextEntry>>,
    pub diags: BTreeSet<Diagnostic>,
    pub rounds: u32,
}

impl CsResult {
    /// Per-context sets at a PoI; `None` when no analyzed context reaches
    /// the function.
    pub fn poi_sets(&self, poi: &PoISite) -> Option<Vec<(u32, BTreeSet<MemLoc>)>> {
        let entries = self.contexts.get(&poi.func)?;
        if entries.is_empty() {
            return None;
        }
        Some(
            entries
                .iter()
                .map(|e| {
                    let set = e
                        .facts
                        .in_map(poi.node)
                        .map(|m| m.pointees(poi.key))
                        .unwrap_or_default();
                    (e.id, set)
                })
                .collect(),
        )
    }

    pub fn merged_poi_set(&self, poi: &PoISite) -> Option<BTreeSet<MemLoc>> {
        self.poi_sets(poi).map(|sets| merge_poi_contexts(&sets))
    }

    pub fn context_count(&self, f: FuncId) -> usize {
        self.contexts.get(&f).map(Vec::len).unwrap_or(0)
    }
}

/// Union over contexts; used for reporting and the oracle-containment
/// checks, never for classification.
pub fn merge_poi_contexts(sets: &[(u32, BTreeSet<MemLoc>)]) -> BTreeSet<MemLoc> {
    let mut out = BTreeSet::new();
    for (_, s) in sets {
        out.extend(s.iter().copied());
    }
    out
}

/// Projects the value at a call's IN into the callee's context: formals
/// bound from actuals, all bound global-owned keys, and the bindings of
/// every key transitively reachable from those values. Caller bindings the
/// callee cannot observe are held at the call site and restored at return.
pub fn project_context(
    ir: &ProgramIR,
    in_map: &PointsToMap,
    callee: FuncId,
    args: &[Actual],
) -> PointsToMap {
    let cf = ir.func(callee);
    let mut ctx = PointsToMap::new();
    let mut work: Vec<MemLoc> = Vec::new();
    for (i, formal) in cf.params.iter().enumerate() {
        let fty = ir.var(*formal).ty;
        if !fty.is_pointer() {
            continue;
        }
        let set = formal_binding(ir, in_map, args.get(i), fty);
        work.extend(set.iter().copied());
        ctx.set(MemLoc::Var(*formal), set);
    }
    for (k, set) in in_map.iter() {
        if owner_of_key(ir, k).is_none() {
            ctx.set(k, set.clone());
            work.extend(set.iter().copied());
        }
    }
    while let Some(loc) = work.pop() {
        if ctx.contains_key(loc) {
            continue;
        }
        if let Some(set) = in_map.get(loc) {
            ctx.set(loc, set.clone());
            work.extend(set.iter().copied());
        }
    }
    ctx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotState {
    Idle,
    InProgress,
}

#[derive(Debug)]
struct Slot {
    func: FuncId,
    value: PointsToMap,
    state: SlotState,
    exit: Option<PointsToMap>,
    facts: Option<FuncFacts>,
    /// Keys this computation may store through a pointer (transitively):
    /// the callee-frame keys whose exit bindings must flow back to callers.
    escaping: BTreeSet<MemLoc>,
}

struct CsEngine<'a> {
    ir: &'a ProgramIR,
    call_edges: BTreeMap<(FuncId, NodeId), Vec<FuncId>>,
    slots: Vec<Slot>,
    interned: HashMap<(FuncId, PointsToMap), usize>,
    /// Escape accumulator per active `solve` invocation.
    escape_stack: Vec<BTreeSet<MemLoc>>,
    changed: bool,
    max_contexts: u32,
    max_rounds: u32,
}

impl<'a> CsEngine<'a> {
    fn intern(&mut self, func: FuncId, value: PointsToMap) -> Result<usize, Error> {
        if let Some(i) = self.interned.get(&(func, value.clone())) {
            return Ok(*i);
        }
        if self.slots.len() as u32 >= self.max_contexts {
            return Err(Error::BudgetExceeded {
                analysis: "context-sensitive analysis",
                what: "context",
                limit: self.max_contexts as u64,
                detail: format!(
                    "context count exploded while adding a context for `{}`",
                    self.ir.func(func).name
                ),
            });
        }
        let idx = self.slots.len();
        self.slots.push(Slot {
            func,
            value: value.clone(),
            state: SlotState::Idle,
            exit: None,
            facts: None,
            escaping: BTreeSet::new(),
        });
        self.interned.insert((func, value), idx);
        self.changed = true;
        Ok(idx)
    }

    fn solve(&mut self, idx: usize) -> Result<(), Error> {
        if self.slots[idx].state == SlotState::InProgress {
            return Ok(());
        }
        self.slots[idx].state = SlotState::InProgress;
        self.escape_stack.push(BTreeSet::new());
        let func = self.slots[idx].func;
        let boundary = self.slots[idx].value.clone();
        let max_rounds = self.max_rounds;
        let f = self.ir.func(func);
        let result = analyze_cfg(
            self.ir,
            f,
            &boundary,
            &mut Dispatch { engine: self },
            max_rounds,
            "context-sensitive analysis",
        );
        let mut escaping = self.escape_stack.pop().expect("escape accumulator");
        let (facts, exit) = match result {
            Ok(v) => v,
            Err(e) => {
                self.slots[idx].state = SlotState::Idle;
                return Err(e);
            }
        };
        for n in f.node_ids() {
            if let Node::Store { ptr, src: StoreSrc::Key(_) | StoreSrc::Null } = f.node(n) {
                if let Some(in_map) = facts.in_map(n) {
                    for x in in_map.pointees(*ptr) {
                        if self.ir.is_pointer_key(x) {
                            escaping.insert(x);
                        }
                    }
                }
            }
        }
        // Exits and facts accumulate across re-solves: recursive cycles are
        // computed with partial callee exits, so a later pass may produce
        // values not comparable to the last one; the meet keeps the table
        // growing monotonically and the outer iteration terminating.
        let slot = &mut self.slots[idx];
        match &mut slot.exit {
            Some(old) => {
                if old.meet_with(&exit) {
                    self.changed = true;
                }
            }
            None => {
                slot.exit = Some(exit);
                self.changed = true;
            }
        }
        match &mut slot.facts {
            Some(old) => {
                if old.meet_with(&facts) {
                    self.changed = true;
                }
            }
            None => {
                slot.facts = Some(facts);
                self.changed = true;
            }
        }
        if !escaping.is_subset(&slot.escaping) {
            slot.escaping.extend(escaping);
            self.changed = true;
        }
        slot.state = SlotState::Idle;
        Ok(())
    }

    /// OUT at a call site given the callee's exit under context `ctx`:
    /// the callee is authoritative for every key it received and for the
    /// new bindings it created; untouched caller bindings are restored.
    /// Callee-frame keys flow back only when stored through a pointer.
    fn merge_call_return(
        &self,
        in_map: &PointsToMap,
        ctx: &PointsToMap,
        callee: FuncId,
        slot_idx: usize,
        ret_to: Option<MemLoc>,
    ) -> PointsToMap {
        let ir = self.ir;
        let slot = &self.slots[slot_idx];
        let exit = slot.exit.clone().unwrap_or_default();
        let mut out = in_map.clone();
        for k in ctx.keys() {
            out.remove(k);
        }
        let cf = ir.func(callee);
        for (k, set) in exit.iter() {
            if cf.ret_slot.map(MemLoc::Var) == Some(k) {
                continue; // return slot handled below
            }
            if owner_of_key(ir, k) == Some(callee) && !slot.escaping.contains(&k) {
                continue; // callee-frame key never aliased: dies with the frame
            }
            if ctx.contains_key(k) || !out.contains_key(k) {
                out.set(k, set.clone());
            } else {
                out.union_into(k, set);
            }
        }
        if let (Some(target), Some(ret_slot)) = (ret_to, cf.ret_slot) {
            let rty = ir.var(ret_slot).ty;
            if crate::andersen::key_type(ir, target) == Some(rty) {
                let ret = exit.pointees(MemLoc::Var(ret_slot));
                if target.is_summary() {
                    out.union_into(target, &ret);
                } else {
                    out.set(target, ret);
                }
            }
        }
        out
    }
}

/// Routes call-node transfers of the slot currently being solved into the
/// engine: project the context, memoize or recursively solve the callee,
/// then merge its exit back into the caller's flow.
struct Dispatch<'e, 'a> {
    engine: &'e mut CsEngine<'a>,
}

impl CallHandler for Dispatch<'_, '_> {
    fn call_out(
        &mut self,
        ir: &ProgramIR,
        caller: &FunctionIR,
        node: NodeId,
        in_map: &PointsToMap,
        _diags: &mut BTreeSet<Diagnostic>,
    ) -> Result<PointsToMap, Error> {
        let (args, ret_to) = match caller.node(node) {
            Node::Call { args, ret_to, .. } => (args, *ret_to),
            _ => unreachable!("call handler on non-call node"),
        };
        let callees = self
            .engine
            .call_edges
            .get(&(caller.id, node))
            .cloned()
            .unwrap_or_default();
        if callees.is_empty() {
            return Ok(in_map.clone());
        }
        let mut acc = FlowValue::Top;
        for callee in callees {
            let ctx = project_context(ir, in_map, callee, args);
            let idx = self.engine.intern(callee, ctx.clone())?;
            if self.engine.slots[idx].state == SlotState::Idle && self.engine.slots[idx].exit.is_none() {
                self.engine.solve(idx)?;
            }
            let escaping: Vec<MemLoc> = self.engine.slots[idx].escaping.iter().copied().collect();
            if let Some(top) = self.engine.escape_stack.last_mut() {
                top.extend(escaping);
            }
            // A recursive cycle can reach this call before the callee has
            // any exit; pass the caller state through unchanged until it
            // does (treating the empty partial exit as authoritative would
            // delete bindings and the loss would self-justify at the
            // fixpoint).
            let out = if self.engine.slots[idx].exit.is_some() {
                self.engine.merge_call_return(in_map, &ctx, callee, idx, ret_to)
            } else {
                in_map.clone()
            };
            acc = FlowValue::meet(&acc, &FlowValue::Value(out));
        }
        Ok(acc.as_map().cloned().unwrap_or_else(|| in_map.clone()))
    }
}

/// Runs the context-sensitive analysis, starting from the entry function
/// with the global initializations as its context. `pcg` must be closed
/// over function pointers.
pub fn run_cs(
    ir: &ProgramIR,
    pcg: &BTreeSet<(FuncId, NodeId, FuncId)>,
    max_rounds: u32,
    max_contexts: u32,
) -> Result<CsResult, Error> {
    let mut call_edges: BTreeMap<(FuncId, NodeId), Vec<FuncId>> = BTreeMap::new();
    for (caller, node, callee) in pcg {
        call_edges.entry((*caller, *node)).or_default().push(*callee);
    }
    let mut engine = CsEngine {
        ir,
        call_edges,
        slots: Vec::new(),
        interned: HashMap::new(),
        escape_stack: Vec::new(),
        changed: false,
        max_contexts,
        max_rounds,
    };
    let entry_ctx = entry_boundary(ir);
    let root = engine.intern(ir.entry, entry_ctx)?;
    let mut rounds = 0u32;
    loop {
        engine.changed = false;
        let mut i = root;
        while i < engine.slots.len() {
            engine.solve(i)?;
            i += 1;
        }
        rounds += 1;
        if !engine.changed {
            break;
        }
        if rounds > max_rounds {
            return Err(Error::BudgetExceeded {
                analysis: "context-sensitive analysis",
                what: "iteration",
                limit: max_rounds as u64,
                detail: "context table did not stabilize".to_string(),
            });
        }
    }

    // Keep only contexts reachable from the entry context under the final
    // facts; cycles during iteration can leave stale intermediate entries.
    let mut live = vec![false; engine.slots.len()];
    let mut stack = vec![root];
    live[root] = true;
    while let Some(i) = stack.pop() {
        let func = engine.slots[i].func;
        let f = ir.func(func);
        let facts = match &engine.slots[i].facts {
            Some(f) => f.clone(),
            None => continue,
        };
        for n in f.node_ids() {
            let (args, _) = match f.node(n) {
                Node::Call { args, ret_to, .. } => (args, ret_to),
                _ => continue,
            };
            let in_map = match facts.in_map(n) {
                Some(m) => m,
                None => continue,
            };
            for callee in engine.call_edges.get(&(func, n)).cloned().unwrap_or_default() {
                let ctx = project_context(ir, in_map, callee, args);
                if let Some(j) = engine.interned.get(&(callee, ctx)) {
                    if !live[*j] {
                        live[*j] = true;
                        stack.push(*j);
                    }
                }
            }
        }
    }

    let mut contexts: BTreeMap<FuncId, Vec<ContextEntry>> = BTreeMap::new();
    let mut diags = BTreeSet::new();
    for (i, slot) in engine.slots.iter().enumerate() {
        if !live[i] {
            continue;
        }
        let facts = match &slot.facts {
            Some(f) => f.clone(),
            None => continue,
        };
        sweep_function_diags(ir, ir.func(slot.func), &facts, &mut diags);
        let entries = contexts.entry(slot.func).or_default();
        let id = entries.len() as u32;
        entries.push(ContextEntry {
            id,
            value: slot.value.clone(),
            facts,
            exit: slot.exit.clone().unwrap_or_default(),
        });
    }
    Ok(CsResult { contexts, diags, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::andersen;
    use crate::ast::SourceProgram;
    use crate::fixtures;
    use crate::lower::compile;

    fn analyzed(text: &str) -> (ProgramIR, CsResult) {
        let ir = compile(&SourceProgram::single("t.mc", text)).unwrap();
        let fis = andersen::run(&ir, 1000).unwrap();
        let cs = run_cs(&ir, &fis.pcg, 1000, 2000).unwrap();
        (ir, cs)
    }

    fn cs_of(name: &str) -> (ProgramIR, CsResult) {
        let ir = fixtures::ir(name);
        let fis = andersen::run(&ir, 1000).unwrap();
        let cs = run_cs(&ir, &fis.pcg, 1000, 2000).unwrap();
        (ir, cs)
    }

    fn poi_at_line(ir: &ProgramIR, line: u32) -> PoISite {
        enumerate_pois(ir).into_iter().find(|p| p.span.line == line).expect("PoI at line")
    }

    fn names(ir: &ProgramIR, set: &BTreeSet<MemLoc>) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
        v.sort();
        v
    }

    #[test]
    fn p3_has_one_context() {
        let (ir, cs) = cs_of("P3");
        let f = ir.func_by_name("f").unwrap();
        assert_eq!(cs.context_count(f), 1);
        let poi = poi_at_line(&ir, 4);
        let sets = cs.poi_sets(&poi).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(names(&ir, &sets[0].1), vec!["g:a"]);
    }

    #[test]
    fn p4_has_two_contexts_with_singleton_sets() {
        let (ir, cs) = cs_of("P4");
        let f = ir.func_by_name("f").unwrap();
        assert_eq!(cs.context_count(f), 2);
        let poi = poi_at_line(&ir, 5);
        let sets = cs.poi_sets(&poi).unwrap();
        let rendered: Vec<Vec<String>> = sets.iter().map(|(_, s)| names(&ir, s)).collect();
        assert_eq!(rendered, vec![vec!["g:a"], vec!["g:b"]]);
        assert_eq!(names(&ir, &merge_poi_contexts(&sets)), vec!["g:a", "g:b"]);
    }

    #[test]
    fn p5_else_branch_distinguishes_contexts() {
        let (ir, cs) = cs_of("P5");
        let else_poi = poi_at_line(&ir, 11);
        let sets = cs.poi_sets(&else_poi).unwrap();
        let rendered: Vec<Vec<String>> = sets.iter().map(|(_, s)| names(&ir, s)).collect();
        assert_eq!(rendered, vec![vec!["g:a"], vec!["g:b"]]);
        let then_poi = poi_at_line(&ir, 9);
        let sets = cs.poi_sets(&then_poi).unwrap();
        for (_, s) in &sets {
            assert_eq!(names(&ir, s), vec!["g:g"]);
        }
    }

    #[test]
    fn equal_context_values_are_memoized_not_duplicated() {
        // Same value from two call sites of different shape.
        let (ir, cs) = analyzed(
            "int a;\nvoid f(int *x) { *x = 1; }\nvoid main() {\n    int *p = &a;\n    f(&a);\n    f(p);\n}\n",
        );
        let f = ir.func_by_name("f").unwrap();
        assert_eq!(cs.context_count(f), 1);
    }

    #[test]
    fn dead_function_has_no_contexts() {
        let (ir, cs) = analyzed("int a;\nvoid dead(int *x) { *x = 1; }\nvoid main() { }\n");
        let dead = ir.func_by_name("dead").unwrap();
        assert_eq!(cs.context_count(dead), 0);
        let poi = poi_at_line(&ir, 2);
        assert!(cs.poi_sets(&poi).is_none());
    }

    #[test]
    fn caller_local_held_across_call() {
        let (ir, cs) = analyzed(
            "int a;\nint b;\nvoid f(int *x) { *x = 1; }\nvoid main() {\n    int *keep = &b;\n    f(&a);\n    *keep = 2;\n}\n",
        );
        let poi = poi_at_line(&ir, 7);
        let sets = cs.poi_sets(&poi).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(names(&ir, &sets[0].1), vec!["g:b"]);
    }

    #[test]
    fn callee_observes_state_through_passed_pointer() {
        // f writes through its formal into the caller's local.
        let (ir, cs) = analyzed(
            "int a;\nint b;\nvoid f(int **x) { *x = &b; }\nvoid main() {\n    int *p = &a;\n    f(&p);\n    *p = 1;\n}\n",
        );
        let poi = poi_at_line(&ir, 7);
        let sets = cs.poi_sets(&poi).unwrap();
        assert_eq!(names(&ir, &sets[0].1), vec!["g:b"]);
    }

    #[test]
    fn return_value_binds_strongly() {
        let (ir, cs) = analyzed(
            "int a;\nint b;\nint *mk(void) { return &a; }\nvoid main() {\n    int *p = &b;\n    p = mk();\n    *p = 1;\n}\n",
        );
        let poi = poi_at_line(&ir, 7);
        let sets = cs.poi_sets(&poi).unwrap();
        assert_eq!(names(&ir, &sets[0].1), vec!["g:a"]);
    }

    #[test]
    fn recursion_reaches_fixpoint() {
        let (ir, cs) = analyzed(
            "int a;\nint b;\nint c;\nint *gp;\nvoid rec(int n) {\n    if (c) {\n        gp = &a;\n        rec(n);\n    }\n    *gp = 1;\n}\nvoid main() {\n    gp = &b;\n    rec(0);\n}\n",
        );
        let poi = poi_at_line(&ir, 10);
        let sets = cs.poi_sets(&poi).unwrap();
        let merged = merge_poi_contexts(&sets);
        assert_eq!(names(&ir, &merged), vec!["g:a", "g:b"]);
    }

    #[test]
    fn rerun_is_bit_identical() {
        for name in ["P3", "P4", "P5"] {
            let ir = fixtures::ir(name);
            let fis = andersen::run(&ir, 1000).unwrap();
            let a = run_cs(&ir, &fis.pcg, 1000, 2000).unwrap();
            let b = run_cs(&ir, &fis.pcg, 1000, 2000).unwrap();
            for (f, entries) in &a.contexts {
                let other = &b.contexts[f];
                assert_eq!(entries.len(), other.len());
                for (x, y) in entries.iter().zip(other.iter()) {
                    assert_eq!(x.value, y.value);
                    assert_eq!(x.exit, y.exit);
                }
            }
        }
    }

    #[test]
    fn context_budget_is_enforced() {
        let ir = fixtures::ir("P4");
        let fis = andersen::run(&ir, 1000).unwrap();
        let err = run_cs(&ir, &fis.pcg, 1000, 2).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(err.to_string().contains('f'));
    }
}
