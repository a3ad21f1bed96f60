//! `wandering run | plot | validate`.
//!
//! Exit codes: 0 when every declared check passes, 1 on a failed check or a
//! computation error, 2 on a usage or configuration error.

mod config;
mod plot;
mod run;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use crate::run::Report;

#[derive(Parser, Debug)]
#[command(name = "wandering", version, about = "Scenario runner for wandering-domain experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a scenario and write its report, data and plots.
    Run {
        config: PathBuf,
        /// Output directory; overrides $WANDERING_OUT and the scenario's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG plots from a report.
    Plot {
        report: PathBuf,
        /// Comma-separated plot kinds; all applicable kinds by default.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
}

const USAGE: u8 = 2;
const CHECK_FAIL: u8 = 1;

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(config: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let scenario = match config::load_valid(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e:#}");
            return Ok(USAGE);
        }
    };
    let dir = config::output_dir(&scenario, out);
    let started = std::time::Instant::now();
    let result = run::execute(&scenario);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let backend = scenario.model.as_ref().map(|m| m.backend).unwrap_or_default();
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => (run::Outcome::default(), Some(format!("{e:#}"))),
    };
    let pass = error.is_none() && outcome.checks.iter().all(|c| c.pass);
    let report = Report {
        kind: scenario.kind,
        seed: scenario.seed,
        backend,
        config: scenario.clone(),
        checks: outcome.checks,
        pass,
        error: error.clone(),
        data: outcome.data,
    };
    let json = serde_json::to_value(&report)?;
    write(&dir, "report.json", &(serde_json::to_string_pretty(&json)? + "\n"))?;
    for (name, csv) in &outcome.csv {
        write(&dir, name, csv)?;
    }
    if let Some(t) = &outcome.text {
        write(&dir, "report.txt", t)?;
    }
    let (plots, skipped) = plot::emit(&json, &[], &dir)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(e) = error {
        println!("ERROR {e}");
    }
    for s in skipped {
        eprintln!("skipped plot {s}");
    }
    eprintln!("{} plots, artifacts in {} ({:.2?})", plots.len(), dir.display(), started.elapsed());
    Ok(if pass { 0 } else { CHECK_FAIL })
}

fn cmd_plot(report: &Path, kinds: &[String], out: Option<&Path>) -> anyhow::Result<u8> {
    let text = match std::fs::read_to_string(report) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("reading {}: {e}", report.display());
            return Ok(USAGE);
        }
    };
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{} is not a JSON report: {e}", report.display());
            return Ok(USAGE);
        }
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
    let (written, skipped) = plot::emit(&value, kinds, &dir)?;
    for s in skipped {
        eprintln!("skipped {s}");
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(0)
}

fn cmd_validate(config: &Path) -> u8 {
    match config::load_valid(config) {
        Ok(s) => {
            println!("{}: valid {} scenario", config.display(), s.kind.name());
            0
        }
        Err(e) => {
            eprintln!("{e:#}");
            USAGE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, out.as_deref()),
        Cmd::Plot { report, kinds, out } => cmd_plot(&report, &kinds, out.as_deref()),
        Cmd::Validate { config } => Ok(cmd_validate(&config)),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(CHECK_FAIL)
        }
    }
}
