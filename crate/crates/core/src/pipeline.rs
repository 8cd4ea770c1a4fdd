//! Ties the engines together: one loaded program, analyses on demand.

use std::time::Instant;

use crate::andersen::{self, FisResult};
use crate::ast::{Ast, SourceFile, SourceProgram};
use crate::compare::{build_records, corpus_stats, PoIRecord, StatsReport};
use crate::contexts::{run_cs, CsResult};
use crate::diag::Diagnostic;
use crate::flow::{self, FsResult};
use crate::ir::{enumerate_pois, PoISite, ProgramIR};
use crate::lower;
use crate::oracle::{self, OracleOutcome};
use crate::parser::parse;
use crate::patterns::{label_all, recommend, PatternLabel, Recommendation};
use crate::Error;

#[derive(Debug, Clone, Copy)]
pub struct Budgets {
    /// Fixpoint iteration cap shared by all engines.
    pub max_iterations: u32,
    /// Total ⟨function, context⟩ pairs the context-sensitive engine may
    /// create.
    pub max_contexts: u32,
    /// Oracle path-enumeration cap.
    pub max_paths: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_iterations: 10_000, max_contexts: 4_096, max_paths: 200_000 }
    }
}

/// A parsed and lowered program plus its enumerated PoIs; the input every
/// analysis runs against.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub source: SourceProgram,
    pub ast: Ast,
    pub ir: ProgramIR,
    pub pois: Vec<PoISite>,
}

impl Workbench {
    pub fn load(source: SourceProgram) -> Result<Self, Error> {
        let ast = parse(&source)?;
        let ir = lower::lower(&source, &ast)?;
        let pois = enumerate_pois(&ir);
        Ok(Workbench { source, ast, ir, pois })
    }

    pub fn from_texts(
        files: Vec<(String, String)>,
        entry: impl Into<String>,
    ) -> Result<Self, Error> {
        let files = files
            .into_iter()
            .map(|(name, text)| SourceFile { name, text })
            .collect();
        Workbench::load(SourceProgram::new(files).with_entry(entry))
    }

    pub fn from_paths(paths: &[std::path::PathBuf], entry: &str) -> Result<Self, Error> {
        let mut files = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            files.push(SourceFile { name: p.display().to_string(), text });
        }
        Workbench::load(SourceProgram::new(files).with_entry(entry))
    }

    pub fn run_fis(&self, budgets: &Budgets) -> Result<FisResult, Error> {
        andersen::run(&self.ir, budgets.max_iterations)
    }

    pub fn run_fs(&self, budgets: &Budgets) -> Result<(FisResult, FsResult), Error> {
        let fis = self.run_fis(budgets)?;
        let fs = flow::run(&self.ir, &fis.pcg, budgets.max_iterations)?;
        Ok((fis, fs))
    }

    pub fn run_cs(&self, budgets: &Budgets) -> Result<(FisResult, CsResult), Error> {
        let fis = self.run_fis(budgets)?;
        let cs = run_cs(&self.ir, &fis.pcg, budgets.max_iterations, budgets.max_contexts)?;
        Ok((fis, cs))
    }

    pub fn run_oracle(&self, loop_bound: u32, budgets: &Budgets) -> Result<OracleOutcome, Error> {
        oracle::interpret_all(&self.ir, &self.pois, loop_bound, budgets.max_paths)
    }

    pub fn labels(&self) -> Vec<PatternLabel> {
        label_all(&self.ir, &self.pois)
    }

    pub fn recommend(&self) -> (Vec<PatternLabel>, Recommendation) {
        let labels = self.labels();
        let rec = recommend(&self.ir, &self.pois, &labels);
        (labels, rec)
    }

    /// Runs all three engines sequentially on the shared IR, classifies
    /// every PoI, and computes corpus statistics. Wall times are always
    /// measured; whether they are reported is the caller's choice.
    pub fn run_compare(&self, budgets: &Budgets) -> Result<CompareOutcome, Error> {
        let t0 = Instant::now();
        let fis = self.run_fis(budgets)?;
        let fis_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let fs = flow::run(&self.ir, &fis.pcg, budgets.max_iterations)?;
        let fs_seconds = t1.elapsed().as_secs_f64();

        let t2 = Instant::now();
        let cs = run_cs(&self.ir, &fis.pcg, budgets.max_iterations, budgets.max_contexts)?;
        let cs_seconds = t2.elapsed().as_secs_f64();

        let labels = self.labels();
        let records = build_records(&self.ir, &self.pois, &fis, &fs, &cs, &labels)?;
        let stats = corpus_stats(&records);
        let mut diags = fis.diags.clone();
        diags.extend(fs.diags.iter().copied());
        diags.extend(cs.diags.iter().copied());
        Ok(CompareOutcome {
            fis,
            fs,
            cs,
            labels,
            records,
            stats,
            diags,
            timing: Timing { fis_seconds, fs_seconds, cs_seconds },
        })
    }
}

/// Per-engine wall-clock seconds on the same warm IR.
#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub fis_seconds: f64,
    pub fs_seconds: f64,
    pub cs_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub fis: FisResult,
    pub fs: FsResult,
    pub cs: CsResult,
    pub labels: Vec<PatternLabel>,
    pub records: Vec<PoIRecord>,
    pub stats: StatsReport,
    pub diags: std::collections::BTreeSet<Diagnostic>,
    pub timing: Timing,
}
