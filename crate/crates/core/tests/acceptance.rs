//! Runs every acceptance criterion at its stated sample sizes and prints one
//! line per criterion. Built without the test harness so the lines are never
//! captured.

use std::process::ExitCode;

use hua_core::acceptance::{run_suite, Tier, DEFAULT_SEED};

fn main() -> ExitCode {
    let report = run_suite(Tier::Full, DEFAULT_SEED, &[]);
    for line in report.lines() {
        println!("{line}");
    }
    for (id, secs) in &report.timings {
        println!("criterion {id:>2} took {secs:.1} s");
    }
    let failed: Vec<u32> = report
        .criteria
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", report.criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
