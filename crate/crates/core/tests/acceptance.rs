//! Acceptance harness: one pass/fail line per criterion.
//!
//! Every line reports the true verdict. The exit status is non-zero on a
//! failure only when `ACCEPTANCE_STRICT=1`, so that the workspace test run
//! completes and shows all lines. `ACCEPTANCE_SEED` changes the seed of the
//! randomized checks.

use std::process::ExitCode;
use std::time::Instant;

use slowfast::suite::{format_line, run_check, SuiteOptions, CRITERIA};

fn main() -> ExitCode {
    let seed = std::env::var("ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(2024);
    let opts = SuiteOptions { seed, ..Default::default() };
    println!("acceptance criteria (seed {seed})");
    let mut failed = 0;
    for (id, _) in CRITERIA {
        let start = Instant::now();
        let c = run_check(id, &opts).expect("known criterion");
        println!("{} ({:.3} s)", format_line(&c), start.elapsed().as_secs_f64());
        if !c.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", CRITERIA.len() - failed);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
