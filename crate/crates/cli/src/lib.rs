//! Command-line front end: loads JSON inputs, runs the pricing and hedging
//! pipelines, and writes canonical JSON reports.

pub mod args;
pub mod commands;
pub mod error;
pub mod fuzzing;
pub mod report;
pub mod verify;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use args::{Cli, Command};
use commands::Outcome;
use error::{CliError, Result};

/// Writes the document to `out`, or to stdout when no path is given, in
/// which case the summary goes to stderr.
fn emit<T: Serialize>(outcome: Outcome<T>, out: Option<&Path>) -> Result<i32> {
    let text = report::render(&outcome.document)?;
    match out {
        Some(path) => {
            report::write_text(path, &text)?;
            print!("{}", outcome.summary);
        }
        None => {
            print!("{text}");
            eprint!("{}", outcome.summary);
        }
    }
    Ok(outcome.code)
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Price(a) => emit(commands::price(a)?, a.out.as_deref()),
        Command::Polytope(a) => emit(commands::polytope(a)?, a.out.as_deref()),
        Command::Solve(a) => emit(commands::solve(a)?, a.out.as_deref()),
        Command::Oracle(a) => emit(commands::oracle(a)?, a.out.as_deref()),
        Command::Verify(a) if a.q.is_some() => {
            let stored = report::parse_report(&report::read_text(&a.report)?)?;
            let q = commands::parse_measure(&report::read_text(a.q.as_deref().expect("guarded"))?)?;
            emit(commands::inner_check(&stored, &q)?, a.out.as_deref())
        }
        Command::Verify(a) => {
            let stored = report::parse_report(&report::read_text(&a.report)?)?;
            let result = verify::verify_report(&stored)?;
            print!("{}", result.summary());
            Ok(result.code())
        }
    }
}

/// Runs a command and reports errors on stderr; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            e.code
        }
    }
}

fn report_error(e: &CliError) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "error: {e}");
    if let Some(w) = &e.witness {
        let _ = writeln!(err, "arbitrage witness (zero-cost strategy, nonnegative gains):");
        for (node, asset, units) in &w.holdings {
            let _ = writeln!(err, "  node {node} asset {asset}: hold {units:.12}");
        }
        let gains: Vec<String> = w.gains.iter().map(|g| format!("{g:.12}")).collect();
        let _ = writeln!(err, "  terminal gains: [{}]", gains.join(", "));
    }
}
