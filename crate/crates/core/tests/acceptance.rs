//! Acceptance suite: one PASS/FAIL line per criterion, with the evidence for
//! every failing check. Exits nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use confirm_lsh::verify::{run_suites, Suite};

const SEED: u64 = 42;

fn main() -> ExitCode {
    let start = Instant::now();
    let mut last = Instant::now();
    let result = run_suites(&Suite::ALL, SEED, |rep| {
        for check in rep.checks.iter().filter(|c| !c.pass) {
            println!("    {check}");
        }
        println!("{} [{:.1}s]", rep.headline(), last.elapsed().as_secs_f64());
        last = Instant::now();
    });
    let reports = match result {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        reports.len() - failed.len(),
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
