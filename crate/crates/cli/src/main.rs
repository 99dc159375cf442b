//! Batch runner for the thinobs verification suites.
//!
//! Exit codes: 0 when every check passes, 1 on a failed check or suite error,
//! 2 on a usage or configuration error.

mod config;
mod error;
mod report;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use config::ExperimentConfig;
use error::Result;
use report::{emit_plot_data, emit_summary, SuiteReport};
use suites::RunOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Solve,
    Spectrum,
    Hodograph,
    Grushin,
    Barrier,
    VerifyAll,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Solve => "solve",
            Suite::Spectrum => "spectrum",
            Suite::Hodograph => "hodograph",
            Suite::Grushin => "grushin",
            Suite::Barrier => "barrier",
            Suite::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "thinobs", version, about = "Run thin obstacle verification suites")]
struct Args {
    /// Suite to run.
    #[arg(value_enum)]
    suite: Suite,
    /// JSON experiment config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "THINOBS_OUT")]
    out: Option<PathBuf>,
    /// Seed for sampled checks (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Solver threads; results do not depend on this.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=256))]
    threads: u64,
}

#[derive(Serialize)]
struct Params<'a> {
    #[serde(flatten)]
    config: &'a ExperimentConfig,
}

fn run_suite(suite: Suite, cfg: &ExperimentConfig, run: RunOptions) -> Result<SuiteReport> {
    match suite {
        Suite::Solve => suites::solve(cfg, run),
        Suite::Spectrum => suites::spectrum(cfg),
        Suite::Hodograph => suites::hodograph(cfg, run),
        Suite::Grushin => suites::grushin(cfg),
        Suite::Barrier => suites::barrier(cfg),
        Suite::VerifyAll => unreachable!("expanded by the caller"),
    }
}

fn emit(dir: &Path, name: &str, cfg: &ExperimentConfig, rep: &SuiteReport) -> Result<()> {
    emit_plot_data(dir, name, rep)?;
    emit_summary(dir, name, &Params { config: cfg }, rep)?;
    for c in &rep.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        println!("{mark} {name}.{}: {:.6e} (threshold {:.3e})", c.name, c.value, c.threshold);
    }
    Ok(())
}

fn run(args: Args) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("thinobs-out"));
    cfg.out = None;
    let opts = RunOptions {
        threads: args.threads as usize,
    };
    let list: Vec<Suite> = if args.suite == Suite::VerifyAll {
        vec![Suite::Spectrum, Suite::Solve, Suite::Hodograph, Suite::Grushin, Suite::Barrier]
    } else {
        vec![args.suite]
    };
    let mut total = SuiteReport::default();
    for suite in list {
        let mut rep = run_suite(suite, &cfg, opts)?;
        emit(&out, suite.name(), &cfg, &rep)?;
        for c in &mut rep.checks {
            c.name = format!("{}.{}", suite.name(), c.name);
        }
        rep.tables.clear();
        total.merge(rep);
    }
    if args.suite == Suite::VerifyAll {
        emit_summary(&out, "verify-all", &Params { config: &cfg }, &total)?;
    }
    let passed = total.passed();
    let failed = total.checks.iter().filter(|c| !c.pass).count();
    println!(
        "{}: {} checks, {failed} failed, output in {}",
        args.suite.name(),
        total.checks.len(),
        out.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
