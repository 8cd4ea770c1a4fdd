//! Precision comparison across the three analyses.
//!
//! For every PoI, gathers the flow-insensitive set, the flow-sensitive set,
//! and the per-context sets, checks the ordering invariant
//! `∀i: CS_i ⊆ FS ⊆ FIS` (a violation is an engine soundness bug and fails
//! loudly), and buckets the PoI into one of four mutually exclusive,
//! exhaustive pointee-relation classes.

use std::collections::{BTreeMap, BTreeSet};

use crate::andersen::FisResult;
use crate::contexts::CsResult;
use crate::flow::FsResult;
use crate::ir::{MemLoc, PoISite, ProgramIR};
use crate::patterns::PatternLabel;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PrecisionClass {
    /// FIS = FS = CS in every context.
    EqAll,
    /// Some context beats FS, and FS beats FIS.
    FisLtFsLtCs,
    /// FIS = FS, and some context beats FS.
    FisEqFsLtCs,
    /// Every context equals FS, and FS beats FIS.
    FisLtFsEqCs,
}

impl PrecisionClass {
    pub const ALL: [PrecisionClass; 4] = [
        PrecisionClass::EqAll,
        PrecisionClass::FisLtFsLtCs,
        PrecisionClass::FisEqFsLtCs,
        PrecisionClass::FisLtFsEqCs,
    ];

    /// Table-style header name.
    pub fn name(&self) -> &'static str {
        match self {
            PrecisionClass::EqAll => "FIS=FS,FS=CS",
            PrecisionClass::FisLtFsLtCs => "FIS<FS,FS<CS",
            PrecisionClass::FisEqFsLtCs => "FIS=FS,FS<CS",
            PrecisionClass::FisLtFsEqCs => "FIS<FS,FS=CS",
        }
    }
}

/// Outcome for one PoI: a precision class, or unreachable when no analyzed
/// context ever enters the function (the flow-insensitive analysis still
/// has a set there; the comparison is undefined).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoiOutcome {
    Class(PrecisionClass),
    Unreachable,
}

#[derive(Debug, Clone)]
pub struct PoIRecord {
    pub site: PoISite,
    pub fis_set: BTreeSet<MemLoc>,
    pub fs_set: BTreeSet<MemLoc>,
    pub cs_sets: Vec<(u32, BTreeSet<MemLoc>)>,
    pub outcome: PoiOutcome,
    pub pattern: PatternLabel,
    /// The flow-sensitive set names exactly one location.
    pub single_location: bool,
}

/// Buckets one PoI. Precondition: `∀i: cs_i ⊆ fs ⊆ fis`; violations are
/// engine bugs and surface as [`Error::InvariantViolation`].
pub fn classify(
    fis: &BTreeSet<MemLoc>,
    fs: &BTreeSet<MemLoc>,
    cs_sets: &[(u32, BTreeSet<MemLoc>)],
) -> Result<PrecisionClass, Error> {
    if !fs.is_subset(fis) {
        return Err(Error::InvariantViolation(
            "flow-sensitive set is not contained in the flow-insensitive set".to_string(),
        ));
    }
    for (i, cs) in cs_sets {
        if !cs.is_subset(fs) {
            return Err(Error::InvariantViolation(format!(
                "context {i} set is not contained in the flow-sensitive set"
            )));
        }
    }
    let fs_lt_fis = fs != fis;
    let some_cs_lt_fs = cs_sets.iter().any(|(_, cs)| cs != fs);
    Ok(match (some_cs_lt_fs, fs_lt_fis) {
        (false, false) => PrecisionClass::EqAll,
        (true, true) => PrecisionClass::FisLtFsLtCs,
        (true, false) => PrecisionClass::FisEqFsLtCs,
        (false, true) => PrecisionClass::FisLtFsEqCs,
    })
}

/// Assembles the per-PoI records from the three engine results and the
/// pattern labels.
pub fn build_records(
    ir: &ProgramIR,
    pois: &[PoISite],
    fis: &FisResult,
    fs: &FsResult,
    cs: &CsResult,
    labels: &[PatternLabel],
) -> Result<Vec<PoIRecord>, Error> {
    let mut out = Vec::with_capacity(pois.len());
    for (site, pattern) in pois.iter().zip(labels.iter()) {
        let fis_set = fis.poi_set(site);
        let fs_set = fs.poi_set(site);
        let cs_sets = cs.poi_sets(site);
        let record = match (fs_set, cs_sets) {
            (Some(fs_set), Some(cs_sets)) => {
                let outcome = classify(&fis_set, &fs_set, &cs_sets).map_err(|e| {
                    Error::InvariantViolation(format!(
                        "{e} at {}:{}:{} (pointer {})",
                        ir.file_name(site.span),
                        site.span.line,
                        site.span.col,
                        ir.loc_name(site.key)
                    ))
                })?;
                let single_location = fs_set.len() == 1;
                PoIRecord {
                    site: site.clone(),
                    fis_set,
                    fs_set,
                    cs_sets,
                    outcome: PoiOutcome::Class(outcome),
                    pattern: *pattern,
                    single_location,
                }
            }
            _ => PoIRecord {
                site: site.clone(),
                fis_set,
                fs_set: BTreeSet::new(),
                cs_sets: Vec::new(),
                outcome: PoiOutcome::Unreachable,
                pattern: *pattern,
                single_location: false,
            },
        };
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ClassStat {
    pub count: u64,
    pub percent: f64,
}

/// Corpus statistics: totals, per-class counts with percentages (one
/// decimal, round half up, over classified PoIs), the single-location
/// dereference count, and the pattern distribution within the
/// all-equal class.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub total_pois: u64,
    pub classified: u64,
    pub unreachable: u64,
    pub single_location_derefs: u64,
    pub classes: Vec<(PrecisionClass, ClassStat)>,
    pub pattern_dist_eq_all: Vec<(&'static str, ClassStat)>,
}

/// Percentage to one decimal place, rounding half up.
pub fn percent(count: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = count as f64 * 100.0 / total as f64;
    (p * 10.0 + 0.5).floor() / 10.0
}

pub fn corpus_stats(records: &[PoIRecord]) -> StatsReport {
    let total_pois = records.len() as u64;
    let mut class_counts: BTreeMap<PrecisionClass, u64> = BTreeMap::new();
    let mut unreachable = 0u64;
    let mut single = 0u64;
    let mut eq_all_patterns: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut eq_all_total = 0u64;
    for r in records {
        match r.outcome {
            PoiOutcome::Class(c) => {
                *class_counts.entry(c).or_default() += 1;
                if r.single_location {
                    single += 1;
                }
                if c == PrecisionClass::EqAll {
                    eq_all_total += 1;
                    *eq_all_patterns.entry(r.pattern.bucket()).or_default() += 1;
                }
            }
            PoiOutcome::Unreachable => unreachable += 1,
        }
    }
    let classified = total_pois - unreachable;
    let classes = PrecisionClass::ALL
        .iter()
        .map(|c| {
            let count = class_counts.get(c).copied().unwrap_or(0);
            (*c, ClassStat { count, percent: percent(count, classified) })
        })
        .collect();
    let pattern_dist_eq_all = ["const-pointer", "formal-pointer", "single-assigned", "multi-assigned", "other"]
        .iter()
        .map(|b| {
            let count = eq_all_patterns.get(b).copied().unwrap_or(0);
            (*b, ClassStat { count, percent: percent(count, eq_all_total) })
        })
        .collect();
    StatsReport {
        total_pois,
        classified,
        unreachable,
        single_location_derefs: single,
        classes,
        pattern_dist_eq_all,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(locs: &[u32]) -> BTreeSet<MemLoc> {
        locs.iter().map(|n| MemLoc::Heap(*n)).collect()
    }

    #[test]
    fn classify_examples() {
        // fis={a}, fs={a}, cs=[{a}]
        assert_eq!(
            classify(&set(&[1]), &set(&[1]), &[(0, set(&[1]))]).unwrap(),
            PrecisionClass::EqAll
        );
        // fis={Null,a}, fs={a}, cs=[{a}]
        let mut fis = set(&[1]);
        fis.insert(MemLoc::Null);
        assert_eq!(
            classify(&fis, &set(&[1]), &[(0, set(&[1]))]).unwrap(),
            PrecisionClass::FisLtFsEqCs
        );
        // fis={a,b,g}, fs={a,b}, cs=[{a},{b}]
        assert_eq!(
            classify(&set(&[1, 2, 3]), &set(&[1, 2]), &[(0, set(&[1])), (1, set(&[2]))]).unwrap(),
            PrecisionClass::FisLtFsLtCs
        );
        // fis={a,b}, fs={a,b}, cs=[{a},{b}]  (fixture P4 shape)
        assert_eq!(
            classify(&set(&[1, 2]), &set(&[1, 2]), &[(0, set(&[1])), (1, set(&[2]))]).unwrap(),
            PrecisionClass::FisEqFsLtCs
        );
    }

    #[test]
    fn ordering_violation_is_loud() {
        let err = classify(&set(&[1]), &set(&[1, 2]), &[]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        let err = classify(&set(&[1, 2]), &set(&[1, 2]), &[(0, set(&[3]))]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn percent_rounds_half_up_to_one_decimal() {
        assert_eq!(percent(52, 52), 100.0);
        assert_eq!(percent(424, 426), 99.5);
        assert_eq!(percent(1, 3), 33.3);
        assert_eq!(percent(1, 16), 6.3); // 6.25 rounds up
        assert_eq!(percent(0, 0), 0.0);
    }

    #[test]
    fn empty_record_list_gives_zero_report() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.total_pois, 0);
        assert!(stats.classes.iter().all(|(_, s)| s.count == 0 && s.percent == 0.0));
    }

    #[test]
    fn all_eq_gives_100_percent() {
        // 52 records all EqAll -> "52 (100)".
        let site = PoISite {
            id: crate::ir::PoiId(0),
            func: crate::ir::FuncId(0),
            node: crate::ir::NodeId(2),
            key: MemLoc::Heap(9),
            level: 1,
            kind: crate::ir::PoiKind::Store,
            span: crate::ast::Span::new(0, 1, 1),
        };
        let records: Vec<PoIRecord> = (0..52)
            .map(|_| PoIRecord {
                site: site.clone(),
                fis_set: set(&[1]),
                fs_set: set(&[1]),
                cs_sets: vec![(0, set(&[1]))],
                outcome: PoiOutcome::Class(PrecisionClass::EqAll),
                pattern: PatternLabel::SingleAssigned,
                single_location: true,
            })
            .collect();
        let stats = corpus_stats(&records);
        assert_eq!(stats.classes[0].1.count, 52);
        assert_eq!(stats.classes[0].1.percent, 100.0);
        assert_eq!(stats.single_location_derefs, 52);
    }

    /// Random (fis ⊇ fs ⊇ cs_i) triples over a tiny universe.
    fn ordered_triple()
    -> impl Strategy<Value = (BTreeSet<MemLoc>, BTreeSet<MemLoc>, Vec<(u32, BTreeSet<MemLoc>)>)>
    {
        let universe: Vec<MemLoc> = (0..6).map(MemLoc::Heap).collect();
        (proptest::collection::btree_set(proptest::sample::select(universe), 0..6), 0u64..u64::MAX)
            .prop_flat_map(|(fis, _)| {
                let fis_vec: Vec<MemLoc> = fis.iter().copied().collect();
                let fs = proptest::sample::subsequence(fis_vec, 0..=fis.len())
                    .prop_map(|v| v.into_iter().collect::<BTreeSet<MemLoc>>());
                (Just(fis), fs)
            })
            .prop_flat_map(|(fis, fs)| {
                let fs_vec: Vec<MemLoc> = fs.iter().copied().collect();
                let n = fs_vec.len();
                let cs = proptest::collection::vec(
                    proptest::sample::subsequence(fs_vec, 0..=n)
                        .prop_map(|v| v.into_iter().collect::<BTreeSet<MemLoc>>()),
                    1..4,
                )
                .prop_map(|sets| {
                    sets.into_iter().enumerate().map(|(i, s)| (i as u32, s)).collect::<Vec<_>>()
                });
                (Just(fis), Just(fs), cs)
            })
    }

    proptest! {
        /// Under the ordering precondition, exactly one class predicate
        /// holds for every input.
        #[test]
        fn classes_are_exhaustive_and_exclusive((fis, fs, cs) in ordered_triple()) {
            let class = classify(&fis, &fs, &cs).unwrap();
            let eq_all = cs.iter().all(|(_, c)| *c == fs) && fs == fis;
            let lt_lt = cs.iter().any(|(_, c)| c.is_subset(&fs) && *c != fs)
                && fs.is_subset(&fis) && fs != fis;
            let eq_lt = cs.iter().any(|(_, c)| *c != fs) && fis == fs;
            let lt_eq = cs.iter().all(|(_, c)| *c == fs) && fs != fis;
            let truth = [eq_all, lt_lt, eq_lt, lt_eq];
            prop_assert_eq!(truth.iter().filter(|t| **t).count(), 1);
            let expect = match truth.iter().position(|t| *t).unwrap() {
                0 => PrecisionClass::EqAll,
                1 => PrecisionClass::FisLtFsLtCs,
                2 => PrecisionClass::FisEqFsLtCs,
                _ => PrecisionClass::FisLtFsEqCs,
            };
            prop_assert_eq!(class, expect);
        }

        /// Percentages over the four classes sum to 100 within rounding
        /// slack whenever anything was classified.
        #[test]
        fn percentages_sum_to_100(counts in proptest::collection::vec(0u64..50, 4)) {
            let total: u64 = counts.iter().sum();
            prop_assume!(total > 0);
            let sum: f64 = counts.iter().map(|c| percent(*c, total)).sum();
            prop_assert!((sum - 100.0).abs() <= 0.2 + 1e-9, "sum = {sum}");
        }
    }
}
