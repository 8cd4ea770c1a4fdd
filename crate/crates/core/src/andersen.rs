//! Flow- and context-insensitive inclusion-based points-to analysis.
//!
//! Every pointer assignment in the whole program contributes either a seed
//! (address-of, allocation), a copy edge, or a complex load/store
//! constraint; the solver iterates to the least fixed point. Function
//! pointers are resolved on the fly: each solve pass may add call-graph
//! edges, whose actual-to-formal bindings feed the next pass, until the
//! edge set stabilizes.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{DiagKind, Diagnostic};
use crate::ir::*;
use crate::memory::{default_init, PointsToMap};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComplexConstraint {
    /// `dst ⊇ ptd(x)` for every `x ∈ ptd(src)`.
    Load { dst: MemLoc, src: MemLoc },
    /// `ptd(x) ⊇ ptd(src)` for every `x ∈ ptd(ptr)`.
    Store { ptr: MemLoc, src: MemLoc },
    /// `ptd(x) ∋ loc` for every `x ∈ ptd(ptr)` (stores of null).
    StoreConst { ptr: MemLoc, loc: MemLoc },
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintGraph {
    pub ptr_nodes: BTreeSet<MemLoc>,
    pub ptd_sets: BTreeMap<MemLoc, BTreeSet<MemLoc>>,
    /// `(from, to)`: `ptd(from) ⊆ ptd(to)`.
    pub copy_edges: BTreeSet<(MemLoc, MemLoc)>,
    pub complex: BTreeSet<ComplexConstraint>,
}

impl ConstraintGraph {
    fn seed(&mut self, key: MemLoc, loc: MemLoc) {
        self.ptr_nodes.insert(key);
        self.ptd_sets.entry(key).or_default().insert(loc);
    }

    fn edge(&mut self, from: MemLoc, to: MemLoc) {
        self.ptr_nodes.insert(from);
        self.ptr_nodes.insert(to);
        self.copy_edges.insert((from, to));
    }

    fn weight(&self) -> usize {
        self.ptd_sets.values().map(|s| s.len()).sum()
    }
}

pub(crate) fn key_type(ir: &ProgramIR, loc: MemLoc) -> Option<Type> {
    match loc {
        MemLoc::Var(v) => Some(ir.var(v).ty),
        MemLoc::Field(v, i) => ir.field_type(v, i),
        MemLoc::Array(v) => {
            let t = ir.var(v).ty;
            Some(Type { base: t.base, ptr: t.ptr, is_array: false })
        }
        _ => None,
    }
}

/// Depth of the pointer produced by taking `loc`'s address.
fn addr_depth(ir: &ProgramIR, loc: MemLoc) -> Option<u8> {
    key_type(ir, loc).map(|t| t.ptr + 1)
}

/// Collects constraints for the whole program under the given call edges.
/// Seeds are the global initializations, `{Unknown}` for every
/// uninitialized local pointer, and `{Unknown}` for the entry function's
/// formals (no call site binds them).
pub fn collect_constraints(
    ir: &ProgramIR,
    pcg: &BTreeSet<(FuncId, NodeId, FuncId)>,
) -> ConstraintGraph {
    let mut g = ConstraintGraph::default();

    for (i, _) in ir.vars.iter().enumerate() {
        for key in ir.keys_of_var(VarId(i as u32)) {
            g.ptr_nodes.insert(key);
        }
    }
    for (key, set) in default_init(ir).iter() {
        for loc in set {
            g.seed(key, *loc);
        }
    }
    for f in &ir.funcs {
        for key in &f.entry_seeds {
            g.seed(*key, MemLoc::Unknown);
        }
        if f.id == ir.entry {
            for p in &f.params {
                if ir.var(*p).ty.is_pointer() {
                    g.seed(MemLoc::Var(*p), MemLoc::Unknown);
                }
            }
        }
    }

    let mut edges_at: BTreeMap<(FuncId, NodeId), Vec<FuncId>> = BTreeMap::new();
    for (caller, node, callee) in pcg {
        edges_at.entry((*caller, *node)).or_default().push(*callee);
    }

    for f in &ir.funcs {
        for n in f.node_ids() {
            match f.node(n) {
                Node::AddressOf { dst, loc } => g.seed(*dst, *loc),
                Node::Alloc { dst, line } => g.seed(*dst, MemLoc::Heap(*line)),
                Node::Copy { dst, src } => g.edge(*src, *dst),
                Node::Load { dst: Some(dst), src } => {
                    g.ptr_nodes.insert(*dst);
                    g.ptr_nodes.insert(*src);
                    g.complex.insert(ComplexConstraint::Load { dst: *dst, src: *src });
                }
                Node::Store { ptr, src: StoreSrc::Key(k) } => {
                    g.ptr_nodes.insert(*ptr);
                    g.ptr_nodes.insert(*k);
                    g.complex.insert(ComplexConstraint::Store { ptr: *ptr, src: *k });
                }
                Node::Store { ptr, src: StoreSrc::Null } => {
                    g.ptr_nodes.insert(*ptr);
                    g.complex
                        .insert(ComplexConstraint::StoreConst { ptr: *ptr, loc: MemLoc::Null });
                }
                Node::Call { args, ret_to, .. } => {
                    for callee in edges_at.get(&(f.id, n)).map(Vec::as_slice).unwrap_or(&[]) {
                        bind_call(ir, &mut g, *callee, args, *ret_to);
                    }
                }
                _ => {}
            }
        }
    }
    g
}

/// Actual-to-formal bindings and the return edge for one resolved callee.
/// A formal with no usable actual (arity or type mismatch, possible only
/// through function pointers) is effectively uninitialized and seeds
/// `{Unknown}`.
fn bind_call(
    ir: &ProgramIR,
    g: &mut ConstraintGraph,
    callee: FuncId,
    args: &[Actual],
    ret_to: Option<MemLoc>,
) {
    let cf = ir.func(callee);
    for (i, formal) in cf.params.iter().enumerate() {
        let fty = ir.var(*formal).ty;
        if !fty.is_pointer() {
            continue;
        }
        let fkey = MemLoc::Var(*formal);
        match args.get(i) {
            Some(Actual::Key(k)) if key_type(ir, *k).is_some_and(|t| t == fty) => {
                g.edge(*k, fkey);
            }
            Some(Actual::AddrOf(loc)) => {
                let ok = match loc {
                    MemLoc::Func(_) => fty.base == Base::FnPtr,
                    _ => fty.base != Base::FnPtr && addr_depth(ir, *loc) == Some(fty.ptr),
                };
                if ok {
                    g.seed(fkey, *loc);
                } else {
                    g.seed(fkey, MemLoc::Unknown);
                }
            }
            Some(Actual::Null) => {
                g.seed(fkey, MemLoc::Null);
            }
            _ => {
                g.seed(fkey, MemLoc::Unknown);
            }
        }
    }
    if let (Some(target), Some(slot)) = (ret_to, cf.ret_slot) {
        if key_type(ir, target) == Some(ir.var(slot).ty) {
            g.edge(MemLoc::Var(slot), target);
        }
    }
}

/// Iterates the constraint graph to its least fixed point by naive rounds.
/// `shuffle` reorders constraint processing within each round; the fixed
/// point is order-independent. Pointee sets only grow, which is asserted
/// every round.
pub fn solve_with_order(
    g: &mut ConstraintGraph,
    max_rounds: u32,
    shuffle: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<PointsToMap, Error> {
    use rand::seq::SliceRandom;

    let mut copies: Vec<(MemLoc, MemLoc)> = g.copy_edges.iter().copied().collect();
    let mut complex: Vec<ComplexConstraint> = g.complex.iter().copied().collect();
    if let Some(rng) = shuffle {
        copies.shuffle(rng);
        complex.shuffle(rng);
    }

    let mut rounds = 0u32;
    loop {
        let before = g.weight();
        let mut changed = false;
        for (from, to) in &copies {
            let add = g.ptd_sets.get(from).cloned().unwrap_or_default();
            if !add.is_empty() {
                let entry = g.ptd_sets.entry(*to).or_default();
                let n = entry.len();
                entry.extend(add);
                changed |= entry.len() != n;
            }
        }
        for c in &complex {
            match c {
                ComplexConstraint::Load { dst, src } => {
                    let srcs = g.ptd_sets.get(src).cloned().unwrap_or_default();
                    for x in srcs {
                        if g.ptr_nodes.contains(&x) {
                            let add = g.ptd_sets.get(&x).cloned().unwrap_or_default();
                            if !add.is_empty() {
                                let entry = g.ptd_sets.entry(*dst).or_default();
                                let n = entry.len();
                                entry.extend(add);
                                changed |= entry.len() != n;
                            }
                        } else {
                            // Loading through null/unknown may be skipped,
                            // leaving dst possibly uninitialized.
                            changed |= g.ptd_sets.entry(*dst).or_default().insert(MemLoc::Unknown);
                        }
                    }
                }
                ComplexConstraint::Store { ptr, src } => {
                    let targets = g.ptd_sets.get(ptr).cloned().unwrap_or_default();
                    let add = g.ptd_sets.get(src).cloned().unwrap_or_default();
                    if add.is_empty() {
                        continue;
                    }
                    for x in targets {
                        if g.ptr_nodes.contains(&x) {
                            let entry = g.ptd_sets.entry(x).or_default();
                            let n = entry.len();
                            entry.extend(add.iter().copied());
                            changed |= entry.len() != n;
                        }
                    }
                }
                ComplexConstraint::StoreConst { ptr, loc } => {
                    let targets = g.ptd_sets.get(ptr).cloned().unwrap_or_default();
                    for x in targets {
                        if g.ptr_nodes.contains(&x) {
                            changed |= g.ptd_sets.entry(x).or_default().insert(*loc);
                        }
                    }
                }
            }
        }
        assert!(g.weight() >= before, "pointee sets shrank during solving");
        if !changed {
            break;
        }
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::BudgetExceeded {
                analysis: "flow-insensitive analysis",
                what: "iteration",
                limit: max_rounds as u64,
                detail: format!("constraint solving did not stabilize within {max_rounds} rounds"),
            });
        }
    }

    let mut map = PointsToMap::new();
    for (k, set) in &g.ptd_sets {
        map.set(*k, set.clone());
    }
    Ok(map)
}

pub fn solve(g: &mut ConstraintGraph, max_rounds: u32) -> Result<PointsToMap, Error> {
    solve_with_order(g, max_rounds, None)
}

#[derive(Debug, Clone)]
pub struct FisResult {
    pub map: PointsToMap,
    /// Direct call edges plus every edge discovered through function
    /// pointers; the closed PCG the flow- and context-sensitive engines use.
    pub pcg: BTreeSet<(FuncId, NodeId, FuncId)>,
    pub diags: BTreeSet<Diagnostic>,
}

impl FisResult {
    pub fn poi_set(&self, poi: &PoISite) -> BTreeSet<MemLoc> {
        self.map.pointees(poi.key)
    }
}

/// Whole-program flow-insensitive analysis with on-the-fly resolution of
/// indirect calls: collect and solve until the PCG stops growing.
pub fn run(ir: &ProgramIR, max_rounds: u32) -> Result<FisResult, Error> {
    let mut pcg = ir.pcg_edges.clone();
    let mut passes = 0u32;
    loop {
        let mut g = collect_constraints(ir, &pcg);
        let map = solve(&mut g, max_rounds)?;
        let mut grew = false;
        for f in &ir.funcs {
            for n in f.node_ids() {
                if let Node::Call { callee: Callee::Indirect(k), .. } = f.node(n) {
                    for loc in map.pointees(*k) {
                        if let MemLoc::Func(target) = loc {
                            grew |= pcg.insert((f.id, n, target));
                        }
                    }
                }
            }
        }
        if !grew {
            let mut diags = BTreeSet::new();
            for f in &ir.funcs {
                for n in f.node_ids() {
                    if let Node::Call { callee: Callee::Indirect(k), .. } = f.node(n) {
                        let set = map.pointees(*k);
                        if !set.iter().any(|l| matches!(l, MemLoc::Func(_))) {
                            diags.insert(Diagnostic {
                                span: f.spans[n.index()],
                                kind: DiagKind::UnresolvableIndirectCall,
                                key: *k,
                            });
                        }
                    }
                }
            }
            return Ok(FisResult { map, pcg, diags });
        }
        passes += 1;
        if passes > max_rounds {
            return Err(Error::BudgetExceeded {
                analysis: "flow-insensitive analysis",
                what: "iteration",
                limit: max_rounds as u64,
                detail: "function-pointer resolution did not stabilize".to_string(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::SourceProgram;
    use crate::fixtures;
    use crate::lower::compile;
    use rand::SeedableRng;

    fn fis(text: &str) -> (ProgramIR, FisResult) {
        let ir = compile(&SourceProgram::single("t.mc", text)).unwrap();
        let r = run(&ir, 1000).unwrap();
        (ir, r)
    }

    fn names(ir: &ProgramIR, set: &BTreeSet<MemLoc>) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
        v.sort();
        v
    }

    #[test]
    fn p1_keeps_null_with_assigned_address() {
        let ir = fixtures::ir("P1");
        let r = run(&ir, 1000).unwrap();
        let p = ir.parse_loc("g:p").unwrap();
        assert_eq!(names(&ir, &r.map.pointees(p)), vec!["g:a", "null"]);
    }

    #[test]
    fn p4_formal_collects_both_actuals() {
        let ir = fixtures::ir("P4");
        let r = run(&ir, 1000).unwrap();
        let x = ir.parse_loc("l:f::x").unwrap();
        assert_eq!(names(&ir, &r.map.pointees(x)), vec!["g:a", "g:b"]);
    }

    #[test]
    fn two_level_chain_resolves_through_load() {
        let (ir, r) = fis(
            "int a;\nvoid main() {\n    int *p = &a;\n    int **q = &p;\n    int *r = *q;\n    *r = 1;\n}\n",
        );
        let rv = ir.parse_loc("l:main::r").unwrap();
        assert_eq!(names(&ir, &r.map.pointees(rv)), vec!["g:a"]);
    }

    #[test]
    fn program_without_pointers_has_empty_graph() {
        let ir =
            compile(&SourceProgram::single("t.mc", "int x;\nvoid main() { x = 1; }\n")).unwrap();
        let g = collect_constraints(&ir, &ir.pcg_edges);
        assert!(g.ptd_sets.is_empty() && g.copy_edges.is_empty() && g.complex.is_empty());
        let r = run(&ir, 1000).unwrap();
        assert!(r.map.is_empty());
    }

    #[test]
    fn store_constraint_reaches_all_pointees() {
        // *x = q with x -> {pa, pb}: both gain q's pointees, nothing killed.
        let (ir, r) = fis(
            "int a;\nint b;\nint c;\nint g;\nvoid main() {\n    int *q = &c;\n    int **x;\n    int *pa = &a;\n    int *pb = &b;\n    if (g) {\n        x = &pa;\n    } else {\n        x = &pb;\n    }\n    *x = q;\n}\n",
        );
        let pa = ir.parse_loc("l:main::pa").unwrap();
        let pb = ir.parse_loc("l:main::pb").unwrap();
        assert_eq!(names(&ir, &r.map.pointees(pa)), vec!["g:a", "g:c"]);
        assert_eq!(names(&ir, &r.map.pointees(pb)), vec!["g:b", "g:c"]);
    }

    #[test]
    fn function_pointer_single_target_resolved() {
        let (ir, r) = fis(
            "int a;\nint (*fp)(...);\nvoid f(void) { }\nvoid main() {\n    fp = &f;\n    fp();\n}\n",
        );
        let f = ir.func_by_name("f").unwrap();
        let main = ir.func_by_name("main").unwrap();
        assert!(r.pcg.iter().any(|(c, _, t)| *c == main && *t == f));
        assert!(r.diags.is_empty());
    }

    #[test]
    fn function_pointer_two_targets_resolved() {
        let (ir, r) = fis(
            "int c;\nint (*fp)(...);\nvoid f(void) { }\nvoid g(void) { }\nvoid main() {\n    if (c) {\n        fp = &f;\n    } else {\n        fp = g;\n    }\n    fp();\n}\n",
        );
        let f = ir.func_by_name("f").unwrap();
        let g = ir.func_by_name("g").unwrap();
        let targets: BTreeSet<_> = r
            .pcg
            .iter()
            .filter(|(c, _, _)| *c == ir.func_by_name("main").unwrap())
            .map(|(_, _, t)| *t)
            .collect();
        assert_eq!(targets, [f, g].into_iter().collect());
    }

    #[test]
    fn unassigned_function_pointer_is_diagnosed() {
        let (_ir, r) = fis("int (*fp)(...);\nvoid main() {\n    fp();\n}\n");
        assert_eq!(r.diags.len(), 1);
        assert!(matches!(
            r.diags.iter().next().unwrap().kind,
            DiagKind::UnresolvableIndirectCall
        ));
    }

    #[test]
    fn fixed_point_is_order_independent() {
        let text = "int a;\nint b;\nint c;\nvoid f(int *x) { *x = 1; }\nvoid main() {\n    int *p = &a;\n    int **q = &p;\n    int *r = *q;\n    *q = r;\n    f(p);\n    f(&b);\n    r = &c;\n}\n";
        let ir = compile(&SourceProgram::single("t.mc", text)).unwrap();
        let mut base = collect_constraints(&ir, &ir.pcg_edges);
        let reference = solve(&mut base, 1000).unwrap();
        for seed in 0..8u64 {
            let mut g = collect_constraints(&ir, &ir.pcg_edges);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let shuffled = solve_with_order(&mut g, 1000, Some(&mut rng)).unwrap();
            assert_eq!(shuffled, reference);
        }
    }

    #[test]
    fn malloc_pointee_is_heap_by_line() {
        let ir = fixtures::ir("P6");
        let r = run(&ir, 1000).unwrap();
        let p = ir.parse_loc("l:main::p").unwrap();
        assert_eq!(
            names(&ir, &r.map.pointees(p)),
            vec![format!("heap:{}", fixtures::P6_MALLOC_LINE)]
        );
    }
}
