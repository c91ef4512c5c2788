//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;

use vanish_damp::verify::{self, VerifyOptions};

fn main() -> ExitCode {
    let results = verify::run_all(&VerifyOptions::default());
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.id.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
