//! Acceptance criteria 1-9 at desk scale, one PASS/FAIL line per criterion.
//! Numeric arguments restrict the run, e.g.
//! `cargo test -p fracbubble --test acceptance -- 3 4`.

use std::process::ExitCode;

use fracbubble::constants::resolve_constants;
use fracbubble::verify::{run_criterion, VerifySettings, CRITERIA};
use fracbubble::FracParams;

fn main() -> ExitCode {
    let chosen: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<usize> = CRITERIA.iter().copied().filter(|id| chosen.is_empty() || chosen.contains(id)).collect();
    let consts = match resolve_constants(&FracParams::critical(1, 0.3).expect("desk parameters"), 1e-10) {
        Ok(c) => c,
        Err(e) => {
            println!("acceptance: constants failed to resolve: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("\nrunning {} acceptance criteria", ids.len());
    let settings = VerifySettings::default();
    let mut failed = Vec::new();
    for id in ids {
        let report = run_criterion(id, &consts, &settings);
        println!("{}", report.line());
        for check in report.checks.iter().filter(|c| !c.passed) {
            println!("    {} = {:.6e} ({:?} {:e})", check.name, check.value, check.relation, check.bound);
        }
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed\n");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}\n");
        ExitCode::FAILURE
    }
}
