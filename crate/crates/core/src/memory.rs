//! Points-to maps and the dataflow value lattice.
//!
//! A [`PointsToMap`] is a finite map from pointer keys to non-empty sets of
//! [`MemLoc`]; absence of a key means "no information". The lattice order is
//! pointwise set inclusion, the meet used at control-flow joins is pointwise
//! union, and [`FlowValue::Top`] is the meet identity.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{GlobalInit, MemLoc, ProgramIR};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PointsToMap {
    bindings: BTreeMap<MemLoc, BTreeSet<MemLoc>>,
}

impl PointsToMap {
    pub fn new() -> Self {
        PointsToMap::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn get(&self, key: MemLoc) -> Option<&BTreeSet<MemLoc>> {
        self.bindings.get(&key)
    }

    /// The pointee set of `key`, empty when unbound.
    pub fn pointees(&self, key: MemLoc) -> BTreeSet<MemLoc> {
        self.bindings.get(&key).cloned().unwrap_or_default()
    }

    pub fn contains_key(&self, key: MemLoc) -> bool {
        self.bindings.contains_key(&key)
    }

    /// Strong bind: replaces any previous set; an empty set unbinds.
    pub fn set(&mut self, key: MemLoc, set: BTreeSet<MemLoc>) {
        if set.is_empty() {
            self.bindings.remove(&key);
        } else {
            self.bindings.insert(key, set);
        }
    }

    pub fn insert_one(&mut self, key: MemLoc, loc: MemLoc) -> bool {
        self.bindings.entry(key).or_default().insert(loc)
    }

    /// Weak bind: unions `set` into the existing binding. Returns true when
    /// anything was added.
    pub fn union_into(&mut self, key: MemLoc, set: &BTreeSet<MemLoc>) -> bool {
        if set.is_empty() {
            return false;
        }
        let entry = self.bindings.entry(key).or_default();
        let before = entry.len();
        entry.extend(set.iter().copied());
        entry.len() != before
    }

    pub fn remove(&mut self, key: MemLoc) {
        self.bindings.remove(&key);
    }

    pub fn keys(&self) -> impl Iterator<Item = MemLoc> + '_ {
        self.bindings.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MemLoc, &BTreeSet<MemLoc>)> {
        self.bindings.iter().map(|(k, v)| (*k, v))
    }

    /// Key-wise union with `other`; returns true when `self` grew.
    pub fn meet_with(&mut self, other: &PointsToMap) -> bool {
        let mut changed = false;
        for (k, set) in other.iter() {
            changed |= self.union_into(k, set);
        }
        changed
    }

    /// Total number of bound pointees; grows monotonically under meet.
    pub fn weight(&self) -> usize {
        self.bindings.values().map(|s| s.len()).sum()
    }

    /// Canonical JSON object: keys are stable location names, values are
    /// name-sorted pointee arrays.
    pub fn to_canonical_json(&self, ir: &ProgramIR) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        let mut named: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (k, set) in self.iter() {
            let mut vals: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
            vals.sort();
            named.insert(ir.loc_name(k), vals);
        }
        for (k, v) in named {
            obj.insert(k, serde_json::Value::from(v));
        }
        serde_json::Value::Object(obj)
    }

    pub fn from_canonical_json(value: &serde_json::Value, ir: &ProgramIR) -> Option<PointsToMap> {
        let obj = value.as_object()?;
        let mut map = PointsToMap::new();
        for (name, vals) in obj {
            let key = ir.parse_loc(name)?;
            let mut set = BTreeSet::new();
            for v in vals.as_array()? {
                set.insert(ir.parse_loc(v.as_str()?)?);
            }
            map.set(key, set);
        }
        Some(map)
    }
}

/// `a` is at least as precise as `b`: every binding of `a` is contained in
/// the corresponding binding of `b` (missing key = empty set).
pub fn leq(a: &PointsToMap, b: &PointsToMap) -> bool {
    a.iter().all(|(k, set)| match b.get(k) {
        Some(other) => set.is_subset(other),
        None => false, // set is non-empty by invariant
    })
}

/// Key-wise union; the meet of the dataflow lattice.
pub fn meet_maps(a: &PointsToMap, b: &PointsToMap) -> PointsToMap {
    let mut out = a.clone();
    out.meet_with(b);
    out
}

/// A dataflow value: either the meet identity `Top` or a points-to map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowValue {
    Top,
    Value(PointsToMap),
}

impl FlowValue {
    pub fn is_top(&self) -> bool {
        matches!(self, FlowValue::Top)
    }

    pub fn as_map(&self) -> Option<&PointsToMap> {
        match self {
            FlowValue::Top => None,
            FlowValue::Value(m) => Some(m),
        }
    }

    pub fn meet(a: &FlowValue, b: &FlowValue) -> FlowValue {
        match (a, b) {
            (FlowValue::Top, v) | (v, FlowValue::Top) => v.clone(),
            (FlowValue::Value(x), FlowValue::Value(y)) => FlowValue::Value(meet_maps(x, y)),
        }
    }
}

/// The global-initialization map: every uninitialized global pointer key is
/// bound to `{Null}`, initialized globals to their initializer's location.
/// Locals are absent; they are seeded `{Unknown}` at function entry.
pub fn default_init(ir: &ProgramIR) -> PointsToMap {
    let mut map = PointsToMap::new();
    for g in &ir.globals {
        for key in ir.keys_of_var(g.var) {
            match g.init {
                Some(GlobalInit::AddrOf(loc)) => {
                    map.insert_one(key, loc);
                }
                Some(GlobalInit::Null) | None => {
                    map.insert_one(key, MemLoc::Null);
                }
                Some(GlobalInit::Scalar) => {}
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::SourceProgram;
    use crate::ir::VarId;
    use crate::lower::compile;

    fn v(n: u32) -> MemLoc {
        MemLoc::Var(VarId(n))
    }

    fn map(entries: &[(MemLoc, &[MemLoc])]) -> PointsToMap {
        let mut m = PointsToMap::new();
        for (k, vals) in entries {
            m.set(*k, vals.iter().copied().collect());
        }
        m
    }

    #[test]
    fn meet_top_is_identity() {
        let m = map(&[(v(0), &[v(1)])]);
        assert_eq!(FlowValue::meet(&FlowValue::Top, &FlowValue::Value(m.clone())), FlowValue::Value(m));
    }

    #[test]
    fn meet_unions_keywise() {
        let a = map(&[(v(0), &[v(1)])]);
        let b = map(&[(v(0), &[v(2)]), (v(3), &[v(4)])]);
        let expect = map(&[(v(0), &[v(1), v(2)]), (v(3), &[v(4)])]);
        assert_eq!(meet_maps(&a, &b), expect);
    }

    #[test]
    fn meet_is_idempotent() {
        let a = map(&[(v(0), &[v(1), v(2)])]);
        assert_eq!(meet_maps(&a, &a), a);
    }

    #[test]
    fn leq_subset_examples() {
        let small = map(&[(v(0), &[v(1)])]);
        let big = map(&[(v(0), &[v(1), MemLoc::Null])]);
        assert!(leq(&small, &big));
        assert!(!leq(&big, &small));
        assert!(leq(&small, &small));
    }

    #[test]
    fn empty_sets_never_stored() {
        let mut m = PointsToMap::new();
        m.set(v(0), BTreeSet::new());
        assert!(!m.contains_key(v(0)));
        m.set(v(0), [v(1)].into_iter().collect());
        m.set(v(0), BTreeSet::new());
        assert!(!m.contains_key(v(0)));
    }

    #[test]
    fn default_init_p1_globals_are_null() {
        let ir = compile(&SourceProgram::single(
            "p1.mc",
            "int a;\nint *p;\nvoid main() {\n    p = &a;\n    *p = 1;\n}\n",
        ))
        .unwrap();
        let init = default_init(&ir);
        let p = ir.parse_loc("g:p").unwrap();
        assert_eq!(init.pointees(p), [MemLoc::Null].into_iter().collect());
        assert_eq!(init.len(), 1);
    }

    #[test]
    fn default_init_without_global_pointers_is_empty() {
        let ir = compile(&SourceProgram::single(
            "p2.mc",
            "int a;\nvoid main() {\n    int *p = &a;\n    *p = 1;\n}\n",
        ))
        .unwrap();
        assert!(default_init(&ir).is_empty());
    }

    #[test]
    fn default_init_const_pointer_binds_to_target() {
        let ir = compile(&SourceProgram::single(
            "c.mc",
            "int a;\nconst int *cp = &a;\nvoid main() { }\n",
        ))
        .unwrap();
        let init = default_init(&ir);
        let cp = ir.parse_loc("g:cp").unwrap();
        let a = ir.parse_loc("g:a").unwrap();
        assert_eq!(init.pointees(cp), [a].into_iter().collect());
    }

    #[test]
    fn canonical_json_roundtrip_on_program_locs() {
        let ir = compile(&SourceProgram::single(
            "r.mc",
            "int a;\nint *p;\nint **q;\nstruct S { int x; int *f; };\nstruct S s;\nint *arr[3];\nvoid main() {\n    p = &a;\n    q = &p;\n    s.f = p;\n    arr[0] = p;\n    *p = 1;\n}\n",
        ))
        .unwrap();
        let mut m = PointsToMap::new();
        let p = ir.parse_loc("g:p").unwrap();
        let q = ir.parse_loc("g:q").unwrap();
        let f = ir.parse_loc("f:S::f@s").unwrap();
        let arr = ir.parse_loc("arr:arr").unwrap();
        let a = ir.parse_loc("g:a").unwrap();
        m.set(p, [a, MemLoc::Null].into_iter().collect());
        m.set(q, [p].into_iter().collect());
        m.set(f, [a, MemLoc::Unknown].into_iter().collect());
        m.set(arr, [a].into_iter().collect());
        let json = m.to_canonical_json(&ir);
        let back = PointsToMap::from_canonical_json(&json, &ir).unwrap();
        assert_eq!(back, m);
        // Canonical form is stable: serializing twice is byte-identical.
        assert_eq!(serde_json::to_string(&json).unwrap(), serde_json::to_string(&m.to_canonical_json(&ir)).unwrap());
    }
}
