//! Machine- and human-readable reports.
//!
//! Every JSON document carries `schema_version: 1` and uses canonical
//! ordering throughout (sorted keys, name-sorted sets, PoIs in source
//! order), so reports are byte-identical across runs. Text tables mirror
//! the relative-precision table layout (total PoIs; FIS=FS,FS=CS;
//! FIS=FS,FS<CS; FIS<FS,FS=CS) and the per-pattern distribution chart.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::andersen::FisResult;
use crate::compare::{ClassStat, PoiOutcome, PrecisionClass};
use crate::contexts::CsResult;
use crate::diag::Diagnostic;
use crate::flow::{FsResult, FunctionSummary};
use crate::ir::{MemLoc, PoiKind, PoISite, ProgramIR};
use crate::oracle::OracleOutcome;
use crate::patterns::{PatternLabel, Recommendation};
use crate::pipeline::CompareOutcome;

pub const SCHEMA_VERSION: u32 = 1;

fn sorted_names(ir: &ProgramIR, set: &BTreeSet<MemLoc>) -> Vec<String> {
    let mut v: Vec<String> = set.iter().map(|l| ir.loc_name(*l)).collect();
    v.sort();
    v
}

fn render_diags(ir: &ProgramIR, diags: &BTreeSet<Diagnostic>) -> Vec<String> {
    diags.iter().map(|d| d.render(ir)).collect()
}

/// Percent formatted like the paper's tables: no trailing `.0`.
pub fn pct_str(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as u64)
    } else {
        format!("{p:.1}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoiMeta {
    pub id: u32,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub level: u32,
    pub kind: &'static str,
    pub pointer: String,
}

impl PoiMeta {
    pub fn new(ir: &ProgramIR, site: &PoISite) -> Self {
        PoiMeta {
            id: site.id.0,
            file: ir.file_name(site.span).to_string(),
            line: site.span.line,
            column: site.span.col,
            level: site.level,
            kind: match site.kind {
                PoiKind::Load => "load",
                PoiKind::Store => "store",
                PoiKind::CallTarget => "call-target",
            },
            pointer: ir.loc_name(site.key),
        }
    }

    fn header(&self) -> String {
        format!("{}:{}:{} [level {}] {}", self.file, self.line, self.column, self.level, self.pointer)
    }
}

// --- analyze --mode fis -----------------------------------------------------

#[derive(Debug, Serialize)]
pub struct FisReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    /// The whole-program map in canonical form.
    pub points_to: serde_json::Value,
    pub pois: Vec<SetPoi>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SetPoi {
    #[serde(flatten)]
    pub meta: PoiMeta,
    pub set: Vec<String>,
}

pub fn fis_report(ir: &ProgramIR, pois: &[PoISite], fis: &FisResult) -> FisReport {
    FisReport {
        schema_version: SCHEMA_VERSION,
        mode: "fis",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        points_to: fis.map.to_canonical_json(ir),
        pois: pois
            .iter()
            .map(|p| SetPoi { meta: PoiMeta::new(ir, p), set: sorted_names(ir, &fis.poi_set(p)) })
            .collect(),
        diagnostics: render_diags(ir, &fis.diags),
    }
}

pub fn fis_text(r: &FisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "flow-insensitive points-to ({} file(s), entry {})", r.files.len(), r.entry);
    if let serde_json::Value::Object(map) = &r.points_to {
        for (k, v) in map {
            let vals: Vec<&str> =
                v.as_array().map(|a| a.iter().filter_map(|x| x.as_str()).collect()).unwrap_or_default();
            let _ = writeln!(out, "  {k} -> {{{}}}", vals.join(", "));
        }
    }
    append_diags(&mut out, &r.diagnostics);
    out
}

// --- analyze --mode fs ------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct FsReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    pub pois: Vec<FsPoi>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summaries: Option<BTreeMap<String, SummaryJson>>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FsPoi {
    #[serde(flatten)]
    pub meta: PoiMeta,
    /// Absent (null) when no analyzed path reaches the function.
    pub fs_set: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
pub struct SummaryJson {
    pub kill: Vec<String>,
    pub gen: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ret: Option<Vec<String>>,
}

fn summary_json(ir: &ProgramIR, s: &FunctionSummary) -> SummaryJson {
    SummaryJson {
        kill: sorted_names(ir, &s.kill),
        gen: s.gen.to_canonical_json(ir),
        ret: s.ret.as_ref().map(|r| sorted_names(ir, r)),
    }
}

pub fn fs_report(
    ir: &ProgramIR,
    pois: &[PoISite],
    fs: &FsResult,
    dump_summaries: bool,
) -> FsReport {
    FsReport {
        schema_version: SCHEMA_VERSION,
        mode: "fs",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        pois: pois
            .iter()
            .map(|p| FsPoi {
                meta: PoiMeta::new(ir, p),
                fs_set: fs.poi_set(p).map(|s| sorted_names(ir, &s)),
            })
            .collect(),
        summaries: dump_summaries.then(|| {
            fs.summaries
                .iter()
                .map(|(f, s)| (ir.func(*f).name.clone(), summary_json(ir, s)))
                .collect()
        }),
        diagnostics: render_diags(ir, &fs.diags),
    }
}

pub fn fs_text(r: &FsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "flow-sensitive points-to at each PoI (entry {})", r.entry);
    for p in &r.pois {
        match &p.fs_set {
            Some(s) => {
                let _ = writeln!(out, "  {}: {{{}}}", p.meta.header(), s.join(", "));
            }
            None => {
                let _ = writeln!(out, "  {}: unreachable", p.meta.header());
            }
        }
    }
    if let Some(summaries) = &r.summaries {
        let _ = writeln!(out, "function summaries:");
        for (f, s) in summaries {
            let _ = writeln!(
                out,
                "  {f}: kill {{{}}} gen {}",
                s.kill.join(", "),
                serde_json::to_string(&s.gen).unwrap_or_default()
            );
        }
    }
    append_diags(&mut out, &r.diagnostics);
    out
}

// --- analyze --mode cs ------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct CsReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    pub pois: Vec<CsPoi>,
    /// Context count per function, always present.
    pub context_counts: BTreeMap<String, u32>,
    /// Full context values, under `--dump-contexts`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_table: Option<BTreeMap<String, Vec<ContextJson>>>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CsPoi {
    #[serde(flatten)]
    pub meta: PoiMeta,
    pub cs_sets: Option<Vec<CtxSet>>,
}

#[derive(Debug, Serialize)]
pub struct CtxSet {
    pub context: u32,
    pub set: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ContextJson {
    pub id: u32,
    pub value: serde_json::Value,
}

pub fn cs_report(ir: &ProgramIR, pois: &[PoISite], cs: &CsResult, dump_contexts: bool) -> CsReport {
    let context_counts = cs
        .contexts
        .iter()
        .map(|(f, entries)| (ir.func(*f).name.clone(), entries.len() as u32))
        .collect();
    CsReport {
        schema_version: SCHEMA_VERSION,
        mode: "cs",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        pois: pois
            .iter()
            .map(|p| CsPoi {
                meta: PoiMeta::new(ir, p),
                cs_sets: cs.poi_sets(p).map(|sets| {
                    sets.into_iter()
                        .map(|(id, s)| CtxSet { context: id, set: sorted_names(ir, &s) })
                        .collect()
                }),
            })
            .collect(),
        context_counts,
        context_table: dump_contexts.then(|| {
            cs.contexts
                .iter()
                .map(|(f, entries)| {
                    (
                        ir.func(*f).name.clone(),
                        entries
                            .iter()
                            .map(|e| ContextJson { id: e.id, value: e.value.to_canonical_json(ir) })
                            .collect(),
                    )
                })
                .collect()
        }),
        diagnostics: render_diags(ir, &cs.diags),
    }
}

pub fn cs_text(r: &CsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "context-sensitive points-to at each PoI (entry {})", r.entry);
    for p in &r.pois {
        match &p.cs_sets {
            Some(sets) => {
                let parts: Vec<String> = sets
                    .iter()
                    .map(|c| format!("ctx{}: {{{}}}", c.context, c.set.join(", ")))
                    .collect();
                let _ = writeln!(out, "  {}: {}", p.meta.header(), parts.join("  "));
            }
            None => {
                let _ = writeln!(out, "  {}: unreachable", p.meta.header());
            }
        }
    }
    let _ = writeln!(out, "contexts per function:");
    for (f, n) in &r.context_counts {
        let _ = writeln!(out, "  {f}: {n}");
    }
    if let Some(table) = &r.context_table {
        for (f, entries) in table {
            for e in entries {
                let _ = writeln!(
                    out,
                    "  {f} ctx{}: {}",
                    e.id,
                    serde_json::to_string(&e.value).unwrap_or_default()
                );
            }
        }
    }
    append_diags(&mut out, &r.diagnostics);
    out
}

// --- compare -----------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub program: String,
    pub entry: String,
    pub files: Vec<String>,
    pub total_pois: u64,
    pub classified: u64,
    pub unreachable: u64,
    pub single_location_derefs: u64,
    /// Counts and percentages per pointee-relation class.
    pub classes: BTreeMap<String, ClassStat>,
    /// Pattern distribution within the all-equal class.
    pub pattern_distribution_eq_all: BTreeMap<String, ClassStat>,
    pub pois: Vec<ComparePoi>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingJson>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ComparePoi {
    #[serde(flatten)]
    pub meta: PoiMeta,
    pub fis: Vec<String>,
    pub fs: Option<Vec<String>>,
    pub cs: Option<Vec<CtxSet>>,
    /// One of `FIS=FS=CS`, `FIS<FS<CS`, `FIS=FS<CS`, `FIS<FS=CS`, or
    /// `unreachable`.
    pub class: String,
    pub pattern: String,
    pub single_location: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingJson {
    pub fis_seconds: f64,
    pub fs_seconds: f64,
    pub cs_seconds: f64,
}

pub fn class_label(c: PrecisionClass) -> &'static str {
    match c {
        PrecisionClass::EqAll => "FIS=FS=CS",
        PrecisionClass::FisLtFsLtCs => "FIS<FS<CS",
        PrecisionClass::FisEqFsLtCs => "FIS=FS<CS",
        PrecisionClass::FisLtFsEqCs => "FIS<FS=CS",
    }
}

fn pattern_label_str(l: &PatternLabel) -> String {
    match l {
        PatternLabel::FormalPointer { uniform_actuals, reassigned_in_callee } => format!(
            "formal-pointer(uniform_actuals={uniform_actuals}, reassigned={reassigned_in_callee})"
        ),
        other => other.bucket().to_string(),
    }
}

/// Program display name: stem of the first input file.
pub fn program_name(ir: &ProgramIR) -> String {
    ir.files
        .first()
        .map(|f| {
            std::path::Path::new(f)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| f.clone())
        })
        .unwrap_or_else(|| "<input>".to_string())
}

pub fn compare_report(ir: &ProgramIR, out: &CompareOutcome, with_timing: bool) -> CompareReport {
    let stats = &out.stats;
    let classes = stats
        .classes
        .iter()
        .map(|(c, s)| (class_label(*c).to_string(), *s))
        .collect();
    let pattern_distribution_eq_all = stats
        .pattern_dist_eq_all
        .iter()
        .map(|(b, s)| (b.to_string(), *s))
        .collect();
    let pois = out
        .records
        .iter()
        .map(|r| {
            let (class, fs, cs) = match r.outcome {
                PoiOutcome::Class(c) => (
                    class_label(c).to_string(),
                    Some(sorted_names(ir, &r.fs_set)),
                    Some(
                        r.cs_sets
                            .iter()
                            .map(|(id, s)| CtxSet { context: *id, set: sorted_names(ir, s) })
                            .collect(),
                    ),
                ),
                PoiOutcome::Unreachable => ("unreachable".to_string(), None, None),
            };
            ComparePoi {
                meta: PoiMeta::new(ir, &r.site),
                fis: sorted_names(ir, &r.fis_set),
                fs,
                cs,
                class,
                pattern: pattern_label_str(&r.pattern),
                single_location: r.single_location,
            }
        })
        .collect();
    CompareReport {
        schema_version: SCHEMA_VERSION,
        mode: "compare",
        program: program_name(ir),
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        total_pois: stats.total_pois,
        classified: stats.classified,
        unreachable: stats.unreachable,
        single_location_derefs: stats.single_location_derefs,
        classes,
        pattern_distribution_eq_all,
        pois,
        timing: with_timing.then(|| TimingJson {
            fis_seconds: out.timing.fis_seconds,
            fs_seconds: out.timing.fs_seconds,
            cs_seconds: out.timing.cs_seconds,
        }),
        diagnostics: render_diags(ir, &out.diags),
    }
}

fn stat_cell(s: &ClassStat) -> String {
    format!("{} ({})", s.count, pct_str(s.percent))
}

/// The relative-precision table plus the pattern-distribution block.
pub fn compare_text(r: &CompareReport) -> String {
    let mut out = String::new();
    let cols = ["FIS=FS,FS=CS", "FIS=FS,FS<CS", "FIS<FS,FS=CS"];
    let by_label = |label: &str| -> ClassStat {
        let key = match label {
            "FIS=FS,FS=CS" => "FIS=FS=CS",
            "FIS=FS,FS<CS" => "FIS=FS<CS",
            "FIS<FS,FS=CS" => "FIS<FS=CS",
            _ => "FIS<FS<CS",
        };
        r.classes.get(key).copied().unwrap_or(ClassStat { count: 0, percent: 0.0 })
    };
    let mut widths = vec![r.program.len().max("Program".len()), "Total PoIs".len()];
    let cells: Vec<String> = cols.iter().map(|c| stat_cell(&by_label(c))).collect();
    for (c, cell) in cols.iter().zip(cells.iter()) {
        widths.push(c.len().max(cell.len()));
    }
    let _ = writeln!(
        out,
        "{:w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
        "Program",
        "Total PoIs",
        cols[0],
        cols[1],
        cols[2],
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
        w3 = widths[3],
        w4 = widths[4],
    );
    let _ = writeln!(
        out,
        "{:w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
        r.program,
        r.total_pois,
        cells[0],
        cells[1],
        cells[2],
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
        w3 = widths[3],
        w4 = widths[4],
    );
    let lt_lt = by_label("FIS<FS,FS<CS");
    if lt_lt.count > 0 {
        let _ = writeln!(out, "FIS<FS,FS<CS: {}", stat_cell(&lt_lt));
    }
    if r.unreachable > 0 {
        let _ = writeln!(out, "unreachable PoIs (excluded from classes): {}", r.unreachable);
    }
    let _ = writeln!(out, "derefs resolving to a single location: {}", r.single_location_derefs);
    let _ = writeln!(out, "pattern distribution among FIS=FS=CS PoIs (%):");
    for (b, s) in &r.pattern_distribution_eq_all {
        let _ = writeln!(out, "  {:16} {}", b, stat_cell(s));
    }
    let _ = writeln!(out, "per-PoI classes:");
    for p in &r.pois {
        let _ = writeln!(out, "  {}: {} [{}]", p.meta.header(), p.class, p.pattern);
    }
    if let Some(t) = &r.timing {
        let _ = writeln!(
            out,
            "timing: FIS {:.6}s  FS {:.6}s  CS {:.6}s",
            t.fis_seconds, t.fs_seconds, t.cs_seconds
        );
    }
    append_diags(&mut out, &r.diagnostics);
    out
}

// --- patterns ------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct PatternsReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    pub pois: Vec<PatternPoi>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize)]
pub struct PatternPoi {
    #[serde(flatten)]
    pub meta: PoiMeta,
    pub pattern: String,
}

pub fn patterns_report(ir: &ProgramIR, pois: &[PoISite], labels: &[PatternLabel]) -> PatternsReport {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.bucket().to_string()).or_default() += 1;
    }
    PatternsReport {
        schema_version: SCHEMA_VERSION,
        mode: "patterns",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        pois: pois
            .iter()
            .zip(labels.iter())
            .map(|(p, l)| PatternPoi { meta: PoiMeta::new(ir, p), pattern: pattern_label_str(l) })
            .collect(),
        counts,
    }
}

pub fn patterns_text(r: &PatternsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "syntactic pattern labels ({} PoIs):", r.pois.len());
    for p in &r.pois {
        let _ = writeln!(out, "  {}: {}", p.meta.header(), p.pattern);
    }
    let _ = writeln!(out, "counts:");
    for (b, n) in &r.counts {
        let _ = writeln!(out, "  {b:16} {n}");
    }
    out
}

// --- recommend -------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct RecommendReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    pub analysis: &'static str,
    pub reasons: Vec<String>,
}

pub fn recommend_report(ir: &ProgramIR, rec: &Recommendation) -> RecommendReport {
    RecommendReport {
        schema_version: SCHEMA_VERSION,
        mode: "recommend",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        analysis: rec.analysis.name(),
        reasons: rec.reasons.clone(),
    }
}

pub fn recommend_text(r: &RecommendReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "recommended analysis: {}", r.analysis);
    for reason in &r.reasons {
        let _ = writeln!(out, "  - {reason}");
    }
    out
}

// --- oracle ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub entry: String,
    pub files: Vec<String>,
    pub loop_bound: u32,
    pub paths: u64,
    pub truncated: u64,
    pub pois: Vec<SetPoi>,
    pub events: Vec<String>,
}

pub fn oracle_report(
    ir: &ProgramIR,
    pois: &[PoISite],
    loop_bound: u32,
    out: &OracleOutcome,
) -> OracleReport {
    OracleReport {
        schema_version: SCHEMA_VERSION,
        mode: "oracle",
        entry: ir.func(ir.entry).name.clone(),
        files: ir.files.clone(),
        loop_bound,
        paths: out.paths,
        truncated: out.truncated,
        pois: pois
            .iter()
            .map(|p| SetPoi {
                meta: PoiMeta::new(ir, p),
                set: out
                    .observations
                    .get(&p.id)
                    .map(|s| sorted_names(ir, s))
                    .unwrap_or_default(),
            })
            .collect(),
        events: render_diags(ir, &out.events),
    }
}

pub fn oracle_text(r: &OracleReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "concrete observations over {} path(s) at loop bound {} ({} truncated):",
        r.paths, r.loop_bound, r.truncated
    );
    for p in &r.pois {
        let _ = writeln!(out, "  {}: {{{}}}", p.meta.header(), p.set.join(", "));
    }
    if !r.events.is_empty() {
        let _ = writeln!(out, "events:");
        for e in &r.events {
            let _ = writeln!(out, "  {e}");
        }
    }
    out
}

fn append_diags(out: &mut String, diags: &[String]) {
    if !diags.is_empty() {
        let _ = writeln!(out, "diagnostics:");
        for d in diags {
            let _ = writeln!(out, "  {d}");
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pipeline::{Budgets, Workbench};

    #[test]
    fn compare_json_is_deterministic() {
        let wb = Workbench::load(fixtures::source("P5", fixtures::P5)).unwrap();
        let budgets = Budgets::default();
        let a = to_json_string(&compare_report(&wb.ir, &wb.run_compare(&budgets).unwrap(), false));
        let b = to_json_string(&compare_report(&wb.ir, &wb.run_compare(&budgets).unwrap(), false));
        assert_eq!(a, b);
    }

    #[test]
    fn compare_percentages_recompute_from_poi_detail() {
        let wb = Workbench::load(fixtures::source("P5", fixtures::P5)).unwrap();
        let out = wb.run_compare(&Budgets::default()).unwrap();
        let report = compare_report(&wb.ir, &out, false);
        for (label, stat) in &report.classes {
            let count = report.pois.iter().filter(|p| &p.class == label).count() as u64;
            assert_eq!(stat.count, count, "class {label}");
            assert_eq!(stat.percent, crate::compare::percent(count, report.classified));
        }
    }

    #[test]
    fn pct_str_matches_table_style() {
        assert_eq!(pct_str(100.0), "100");
        assert_eq!(pct_str(99.5), "99.5");
        assert_eq!(pct_str(0.0), "0");
    }

    #[test]
    fn p6_fis_report_shows_heap_line() {
        let wb = Workbench::load(fixtures::source("P6", fixtures::P6)).unwrap();
        let fis = wb.run_fis(&Budgets::default()).unwrap();
        let report = fis_report(&wb.ir, &wb.pois, &fis);
        let map = report.points_to.as_object().unwrap();
        let p = map.get("l:main::p").unwrap().as_array().unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].as_str().unwrap(), format!("heap:{}", fixtures::P6_MALLOC_LINE));
    }
}
