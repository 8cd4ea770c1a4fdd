//! Syntactic pattern detection and analysis recommendation.
//!
//! Labels every PoI with the code pattern of its dereferenced pointer —
//! constant pointer, formal pointer, single-assigned, multi-assigned — and
//! recommends the cheapest analysis expected to lose no precision. The scan
//! is purely syntactic: it runs before (and without) any points-to
//! analysis, which is what makes it a cheap pre-analysis.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternLabel {
    /// Declared const with an address initializer.
    ConstPointer,
    /// The dereferenced pointer is a formal of the enclosing function.
    FormalPointer { uniform_actuals: bool, reassigned_in_callee: bool },
    /// Exactly one direct assignment program-wide, preceding the PoI on
    /// every path.
    SingleAssigned,
    /// Two or more assignments, each reaching the PoI along some path.
    MultiAssigned,
    Other,
}

impl PatternLabel {
    pub fn bucket(&self) -> &'static str {
        match self {
            PatternLabel::ConstPointer => "const-pointer",
            PatternLabel::FormalPointer { .. } => "formal-pointer",
            PatternLabel::SingleAssigned => "single-assigned",
            PatternLabel::MultiAssigned => "multi-assigned",
            PatternLabel::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Analysis {
    Fis,
    Fs,
    Cs,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Fis => "FIS",
            Analysis::Fs => "FS",
            Analysis::Cs => "CS",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recommendation {
    pub analysis: Analysis,
    pub reasons: Vec<String>,
}

/// Direct assignment sites of a key across the whole program, plus whether
/// a static (global declaration) initializer also defines it.
fn defs_of(ir: &ProgramIR, key: MemLoc) -> (Vec<(FuncId, NodeId)>, bool) {
    let mut defs = Vec::new();
    for f in &ir.funcs {
        for n in f.node_ids() {
            if f.node(n).direct_target() == Some(key) {
                defs.push((f.id, n));
            }
        }
    }
    let static_init = match key {
        MemLoc::Var(v) if ir.var(v).owner.is_none() => ir
            .globals
            .iter()
            .any(|g| g.var == v && matches!(g.init, Some(GlobalInit::AddrOf(_) | GlobalInit::Null))),
        _ => false,
    };
    (defs, static_init)
}

/// True when `target` is reachable from any of `starts` without passing
/// through a node in `avoid`.
fn reachable_avoiding(
    f: &FunctionIR,
    starts: &[NodeId],
    avoid: &BTreeSet<NodeId>,
    target: NodeId,
) -> bool {
    let mut seen = vec![false; f.nodes.len()];
    let mut stack: Vec<NodeId> = Vec::new();
    for s in starts {
        if *s == target {
            return true;
        }
        if !avoid.contains(s) && !seen[s.index()] {
            seen[s.index()] = true;
            stack.push(*s);
        }
    }
    while let Some(n) = stack.pop() {
        for s in &f.succs[n.index()] {
            if *s == target {
                return true;
            }
            if !avoid.contains(s) && !seen[s.index()] {
                seen[s.index()] = true;
                stack.push(*s);
            }
        }
    }
    false
}

/// The single def dominates the PoI: no Entry→PoI path avoids it.
fn dominates(f: &FunctionIR, def: NodeId, poi: NodeId) -> bool {
    if def == poi {
        return false;
    }
    !reachable_avoiding(f, &[ENTRY], &[def].into(), poi)
}

/// Actual expressions seen at each formal position of `callee`, across all
/// direct call sites.
fn actuals_per_position(ir: &ProgramIR, callee: FuncId) -> Vec<Vec<Actual>> {
    let arity = ir.func(callee).params.len();
    let mut columns = vec![Vec::new(); arity];
    for f in &ir.funcs {
        for n in f.node_ids() {
            if let Node::Call { callee: Callee::Direct(target), args, .. } = f.node(n) {
                if *target == callee {
                    for (i, col) in columns.iter_mut().enumerate() {
                        if let Some(a) = args.get(i) {
                            col.push(*a);
                        }
                    }
                }
            }
        }
    }
    columns
}

/// Labels one PoI; precedence const > formal > single > multi > other.
pub fn label_poi(ir: &ProgramIR, site: &PoISite) -> PatternLabel {
    let key = site.key;
    if let MemLoc::Var(v) = key {
        let info = ir.var(v);
        if info.is_const && info.has_initializer {
            return PatternLabel::ConstPointer;
        }
        if let Some((owner, idx)) = info.formal_of {
            debug_assert_eq!(owner, site.func);
            let column = &actuals_per_position(ir, owner)[idx];
            let uniform = column.windows(2).all(|w| w[0] == w[1]);
            let f = ir.func(owner);
            let reassigned = f.node_ids().any(|n| f.node(n).direct_target() == Some(key));
            return PatternLabel::FormalPointer {
                uniform_actuals: uniform,
                reassigned_in_callee: reassigned,
            };
        }
    }

    let (defs, static_init) = defs_of(ir, key);
    let total = defs.len() + usize::from(static_init);
    let f = ir.func(site.func);
    if total == 1 {
        let precedes = if static_init {
            true
        } else {
            let (def_f, def_n) = defs[0];
            def_f == site.func && dominates(f, def_n, site.node)
        };
        if precedes {
            return PatternLabel::SingleAssigned;
        }
        return PatternLabel::Other;
    }
    if total >= 2 {
        let local_defs: BTreeSet<NodeId> =
            defs.iter().filter(|(df, _)| *df == site.func).map(|(_, n)| *n).collect();
        let all_reach = defs.iter().all(|(def_f, def_n)| {
            if *def_f != site.func {
                // Cross-function definition: reachable in some interleaving.
                return true;
            }
            let mut avoid = local_defs.clone();
            avoid.remove(def_n);
            reachable_avoiding(f, &f.succs[def_n.index()], &avoid, site.node)
        }) && (!static_init || {
            // The static initializer reaches only if some path avoids every
            // in-function redefinition.
            reachable_avoiding(f, &[ENTRY], &local_defs, site.node)
        });
        if all_reach {
            return PatternLabel::MultiAssigned;
        }
    }
    PatternLabel::Other
}

pub fn label_all(ir: &ProgramIR, pois: &[PoISite]) -> Vec<PatternLabel> {
    pois.iter().map(|p| label_poi(ir, p)).collect()
}

/// Recommends the cheapest analysis expected to lose no precision:
/// context sensitivity pays off only when some formal pointer receives
/// two or more distinct actuals; flow sensitivity only when some
/// dereferenced pointer has a default (null/unknown) binding or a
/// reassignment that statement order can kill.
pub fn recommend(ir: &ProgramIR, pois: &[PoISite], labels: &[PatternLabel]) -> Recommendation {
    let mut cs_reasons: BTreeMap<MemLoc, String> = BTreeMap::new();
    for (site, label) in pois.iter().zip(labels.iter()) {
        if let PatternLabel::FormalPointer { uniform_actuals: false, .. } = label {
            if let MemLoc::Var(v) = site.key {
                let (owner, idx) = ir.var(v).formal_of.expect("formal");
                let distinct: BTreeSet<_> =
                    actuals_per_position(ir, owner)[idx].iter().copied().collect();
                cs_reasons.entry(site.key).or_insert_with(|| {
                    format!(
                        "formal {} receives {} distinct actuals",
                        ir.var(v).name,
                        distinct.len()
                    )
                });
            }
        }
    }
    if !cs_reasons.is_empty() {
        return Recommendation { analysis: Analysis::Cs, reasons: cs_reasons.into_values().collect() };
    }

    let mut fs_reasons: BTreeMap<(MemLoc, u8), String> = BTreeMap::new();
    for (site, label) in pois.iter().zip(labels.iter()) {
        let key = site.key;
        let (defs, _static_init) = defs_of(ir, key);
        let name = ir.loc_name(key);
        // A default null/unknown binding killed by a later assignment.
        let default_bound = match key {
            MemLoc::Var(v) => {
                let info = ir.var(v);
                if info.owner.is_none() {
                    !info.has_initializer
                } else {
                    info.formal_of.is_none() && !info.is_temp && !info.has_initializer
                }
            }
            MemLoc::Field(v, _) | MemLoc::Array(v) => {
                let info = ir.var(v);
                info.owner.is_none() || !info.has_initializer
            }
            _ => false,
        };
        let own_init_defs = match key {
            MemLoc::Var(v) => usize::from(ir.var(v).null_initialized),
            _ => 0,
        };
        if default_bound && defs.len() >= 1 + own_init_defs {
            fs_reasons.entry((key, 0)).or_insert_with(|| {
                format!("pointer {name} starts null/unknown and is assigned before use")
            });
        }
        // A definition positioned after a use point.
        let f = ir.func(site.func);
        let after = defs.iter().any(|(df, dn)| {
            *df == site.func
                && reachable_avoiding(f, &f.succs[site.node.index()], &BTreeSet::new(), *dn)
        });
        if after && defs.len() >= 2 {
            fs_reasons
                .entry((key, 1))
                .or_insert_with(|| format!("pointer {name} is assigned before and after a use point"));
        }
        if let PatternLabel::FormalPointer { reassigned_in_callee: true, .. } = label {
            fs_reasons
                .entry((key, 2))
                .or_insert_with(|| format!("formal {name} is reassigned in its function"));
        }
    }
    if !fs_reasons.is_empty() {
        return Recommendation { analysis: Analysis::Fs, reasons: fs_reasons.into_values().collect() };
    }
    Recommendation {
        analysis: Analysis::Fis,
        reasons: vec!["no pattern requiring flow or context sensitivity was found".to_string()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::SourceProgram;
    use crate::fixtures;
    use crate::lower::compile;

    fn labels_of(name: &str) -> (ProgramIR, Vec<PoISite>, Vec<PatternLabel>) {
        let ir = fixtures::ir(name);
        let pois = enumerate_pois(&ir);
        let labels = label_all(&ir, &pois);
        (ir, pois, labels)
    }

    #[test]
    fn const_pointer_label() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nconst int *cp = &a;\nvoid main() {\n    *cp = 1;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        assert_eq!(label_poi(&ir, &pois[0]), PatternLabel::ConstPointer);
    }

    #[test]
    fn literal_address_deref_is_const_pointer() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "void main() {\n    *(4660) = 1;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        assert_eq!(pois.len(), 1);
        assert_eq!(label_poi(&ir, &pois[0]), PatternLabel::ConstPointer);
    }

    #[test]
    fn p3_formal_uniform_not_reassigned() {
        let (_ir, _pois, labels) = labels_of("P3");
        assert_eq!(
            labels[0],
            PatternLabel::FormalPointer { uniform_actuals: true, reassigned_in_callee: false }
        );
    }

    #[test]
    fn p4_formal_not_uniform() {
        let (_ir, _pois, labels) = labels_of("P4");
        assert_eq!(
            labels[0],
            PatternLabel::FormalPointer { uniform_actuals: false, reassigned_in_callee: false }
        );
    }

    #[test]
    fn p5_formal_reassigned() {
        let (_ir, _pois, labels) = labels_of("P5");
        for l in labels {
            assert_eq!(
                l,
                PatternLabel::FormalPointer { uniform_actuals: false, reassigned_in_callee: true }
            );
        }
    }

    #[test]
    fn p2_single_assigned() {
        let (_ir, _pois, labels) = labels_of("P2");
        assert_eq!(labels[0], PatternLabel::SingleAssigned);
    }

    #[test]
    fn multi_assigned_when_both_defs_reach() {
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nint b;\nint c;\nvoid main() {\n    int *p;\n    if (c) {\n        p = &a;\n    } else {\n        p = &b;\n    }\n    *p = 1;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        assert_eq!(label_poi(&ir, &pois[0]), PatternLabel::MultiAssigned);
    }

    #[test]
    fn killed_definition_falls_to_other() {
        // Two defs in sequence: the first never reaches the PoI.
        let ir = compile(&SourceProgram::single(
            "t.mc",
            "int a;\nint b;\nvoid main() {\n    int *p;\n    p = &a;\n    p = &b;\n    *p = 1;\n}\n",
        ))
        .unwrap();
        let pois = enumerate_pois(&ir);
        assert_eq!(label_poi(&ir, &pois[0]), PatternLabel::Other);
    }

    #[test]
    fn recommend_fis_for_p3() {
        let (ir, pois, labels) = labels_of("P3");
        assert_eq!(recommend(&ir, &pois, &labels).analysis, Analysis::Fis);
    }

    #[test]
    fn recommend_cs_for_p4_with_reason() {
        let (ir, pois, labels) = labels_of("P4");
        let rec = recommend(&ir, &pois, &labels);
        assert_eq!(rec.analysis, Analysis::Cs);
        assert_eq!(rec.reasons, vec!["formal x receives 2 distinct actuals"]);
    }

    #[test]
    fn recommend_fs_for_p1() {
        let (ir, pois, labels) = labels_of("P1");
        let rec = recommend(&ir, &pois, &labels);
        assert_eq!(rec.analysis, Analysis::Fs);
        assert!(rec.reasons[0].contains("g:p"));
    }

    #[test]
    fn recommend_fis_for_p2_and_p6() {
        for name in ["P2", "P6"] {
            let (ir, pois, labels) = labels_of(name);
            assert_eq!(recommend(&ir, &pois, &labels).analysis, Analysis::Fis, "{name}");
        }
    }

    #[test]
    fn labels_are_deterministic_and_total() {
        for (name, _) in fixtures::all() {
            let (ir, pois, labels) = labels_of(name);
            assert_eq!(labels.len(), pois.len());
            assert_eq!(labels, label_all(&ir, &pois));
        }
    }
}
