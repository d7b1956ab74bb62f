//! Command-line laboratory for large-time expansions of parabolic flows.
//!
//! `run` integrates a configured Cauchy problem, builds the requested
//! asymptotic profiles, and writes verdicts on their decay rates; `selftest`
//! exercises every load-bearing invariant at reduced resolution; `list`
//! prints the benchmark registry; `report` re-renders a finished run.

mod config;
mod pipeline;
mod registry;
mod report;
mod selftest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(name = "asympde", version, about = "large-time asymptotic expansion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a benchmark id or a config file.
    Run {
        /// Benchmark id (see `list`) or path to a key-value config file.
        target: String,
        /// Directory under which the artifact directory is created.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the reduced-resolution invariant suite.
    Selftest {
        /// Deliberately corrupt a named quantity to prove the suite can fail.
        #[arg(long)]
        inject_fault: Option<String>,
        /// Per-axis resolution of the kernel checks (low values demonstrate
        /// the coarse-grid warning path).
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// List the registered benchmarks.
    List {
        /// Only show ids containing this substring.
        filter: Option<String>,
    },
    /// Summarize a finished run from its artifact directory.
    Report { dir: PathBuf },
}

fn resolve_target(target: &str) -> Result<Config> {
    if let Some(config) = registry::resolve(target) {
        return Ok(config);
    }
    let path = PathBuf::from(target);
    if path.exists() {
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        return Config::parse(&text, Config::default())
            .with_context(|| format!("parsing {}", path.display()));
    }
    Err(anyhow!(
        "`{target}` is neither a registered benchmark nor an existing config file; \
         `list` shows the registry"
    ))
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { target, out } => {
            let config = resolve_target(&target)?;
            let outcome = pipeline::run(&config, &out)?;
            let report_path = outcome.dir.join("report.txt");
            let text = fs::read_to_string(&report_path)
                .with_context(|| format!("reading {}", report_path.display()))?;
            print!("{text}");
            println!("artifacts in {}", outcome.dir.display());
            Ok(if outcome.all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Selftest { inject_fault, points } => {
            let passed = selftest::selftest(inject_fault.as_deref(), points)?;
            Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::List { filter } => {
            print!("{}", registry::listing(filter.as_deref()));
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let all_pass = report::report(&dir)?;
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}
