//! Acceptance criteria 1–8, one pass/fail line each.

use std::process::ExitCode;

use bifloc_core::config::RunConfig;
use bifloc_core::verify::{run_criterion, Suite};

fn main() -> ExitCode {
    let cfg = RunConfig::default();
    let mut failed = Vec::new();
    for &id in Suite::All.criteria() {
        let outcome = run_criterion(id, &cfg);
        println!("{}", outcome.summary_line());
        for check in &outcome.checks {
            println!("    [{}] {} {}", if check.passed { "ok" } else { "FAIL" }, check.label, check.detail);
        }
        if !outcome.passed() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
