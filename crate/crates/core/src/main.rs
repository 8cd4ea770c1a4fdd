//! Command-line entry point.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ptbench_core::pipeline::{Budgets, Workbench};
use ptbench_core::report::{self, to_json_string};
use ptbench_core::{patterns, Error};

#[derive(Parser)]
#[command(
    name = "ptbench",
    version,
    about = "Points-to analysis workbench: run flow-insensitive, flow-sensitive, and context-sensitive analyses over a C-like subset, compare their precision per dereference, and recommend the cheapest sufficient analysis"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one analysis and report per-PoI points-to sets.
    Analyze {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
    /// Run all three analyses, classify every PoI by relative precision,
    /// and report corpus statistics.
    Compare {
        /// Include wall-clock timing in the JSON report (timing varies run
        /// to run; the default report is byte-reproducible).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Label every PoI with its syntactic code pattern.
    Patterns {
        #[command(flatten)]
        common: Common,
    },
    /// Recommend the cheapest analysis expected to lose no precision.
    Recommend {
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate bounded concrete executions and report observed pointees.
    Oracle {
        /// Take each loop (and recursion) at most K times.
        #[arg(long, default_value_t = 1)]
        loop_bound: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Run the recommender, then only the recommended analysis.
    Auto {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fis,
    Fs,
    Cs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct Common {
    /// Input files in the subset language (.mc).
    #[arg(required = true)]
    files: Vec<PathBuf>,

    /// Entry function.
    #[arg(long, default_value = "main")]
    entry: String,

    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Fixpoint iteration budget for every engine.
    #[arg(long, default_value_t = 10_000)]
    max_iterations: u32,

    /// Total context budget for the context-sensitive engine.
    #[arg(long, default_value_t = 4_096)]
    max_contexts: u32,

    /// Path budget for the oracle.
    #[arg(long, default_value_t = 200_000)]
    max_paths: u64,

    /// Include per-function KILL/GEN summaries in the fs report.
    #[arg(long)]
    dump_summaries: bool,

    /// Include every context's value in the cs report.
    #[arg(long)]
    dump_contexts: bool,

    /// Reserved: merge contexts by pointer-key set instead of full value
    /// equality. Not implemented.
    #[arg(long)]
    merge_contexts_by_keyset: bool,
}

impl Common {
    fn budgets(&self) -> Budgets {
        Budgets {
            max_iterations: self.max_iterations,
            max_contexts: self.max_contexts,
            max_paths: self.max_paths,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit(common: &Common, json: String, text: String) -> Result<(), Error> {
    let body = match common.format {
        Format::Json => json,
        Format::Table => text,
    };
    match &common.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

fn print_diags_to_stderr(diags: &[String]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = match &cli.cmd {
        Cmd::Analyze { common, .. }
        | Cmd::Compare { common, .. }
        | Cmd::Patterns { common }
        | Cmd::Recommend { common }
        | Cmd::Oracle { common, .. }
        | Cmd::Auto { common } => common,
    };
    if common.merge_contexts_by_keyset {
        return Err(Error::Io(
            "--merge-contexts-by-keyset is reserved for a future context-merging mode".to_string(),
        ));
    }
    let wb = Workbench::from_paths(&common.files, &common.entry)?;
    let budgets = common.budgets();

    match &cli.cmd {
        Cmd::Analyze { mode, common } => {
            run_analysis(&wb, *mode, common, &budgets)?;
        }
        Cmd::Compare { timing, common } => {
            let out = wb.run_compare(&budgets)?;
            eprintln!(
                "timing: FIS {:.6}s  FS {:.6}s  CS {:.6}s",
                out.timing.fis_seconds, out.timing.fs_seconds, out.timing.cs_seconds
            );
            let report = report::compare_report(&wb.ir, &out, *timing);
            print_diags_to_stderr(&report.diagnostics);
            emit(common, to_json_string(&report), report::compare_text(&report))?;
        }
        Cmd::Patterns { common } => {
            let labels = wb.labels();
            let report = report::patterns_report(&wb.ir, &wb.pois, &labels);
            emit(common, to_json_string(&report), report::patterns_text(&report))?;
        }
        Cmd::Recommend { common } => {
            let (_, rec) = wb.recommend();
            let report = report::recommend_report(&wb.ir, &rec);
            emit(common, to_json_string(&report), report::recommend_text(&report))?;
        }
        Cmd::Oracle { loop_bound, common } => {
            let out = wb.run_oracle(*loop_bound, &budgets)?;
            let report = report::oracle_report(&wb.ir, &wb.pois, *loop_bound, &out);
            print_diags_to_stderr(&report.events);
            emit(common, to_json_string(&report), report::oracle_text(&report))?;
        }
        Cmd::Auto { common } => {
            let (_, rec) = wb.recommend();
            eprintln!("recommended analysis: {}", rec.analysis.name());
            for r in &rec.reasons {
                eprintln!("  - {r}");
            }
            let mode = match rec.analysis {
                patterns::Analysis::Fis => Mode::Fis,
                patterns::Analysis::Fs => Mode::Fs,
                patterns::Analysis::Cs => Mode::Cs,
            };
            run_analysis(&wb, mode, common, &budgets)?;
        }
    }
    Ok(())
}

fn run_analysis(wb: &Workbench, mode: Mode, common: &Common, budgets: &Budgets) -> Result<(), Error> {
    match mode {
        Mode::Fis => {
            let fis = wb.run_fis(budgets)?;
            let report = report::fis_report(&wb.ir, &wb.pois, &fis);
            print_diags_to_stderr(&report.diagnostics);
            emit(common, to_json_string(&report), report::fis_text(&report))
        }
        Mode::Fs => {
            let (_, fs) = wb.run_fs(budgets)?;
            let report = report::fs_report(&wb.ir, &wb.pois, &fs, common.dump_summaries);
            print_diags_to_stderr(&report.diagnostics);
            emit(common, to_json_string(&report), report::fs_text(&report))
        }
        Mode::Cs => {
            let (_, cs) = wb.run_cs(budgets)?;
            let report = report::cs_report(&wb.ir, &wb.pois, &cs, common.dump_contexts);
            print_diags_to_stderr(&report.diagnostics);
            emit(common, to_json_string(&report), report::cs_text(&report))
        }
    }
}
