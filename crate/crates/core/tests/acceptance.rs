//! Runs the ten acceptance criteria and prints one PASS/FAIL line each.
//! Pass criterion ids as arguments to run a subset.

use std::process::ExitCode;

use maskbc::acceptance::{run, CRITERIA};

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, _, _) in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.0)) {
        let out = run(id).expect("listed criterion");
        println!("{}", out.line());
        if !out.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
