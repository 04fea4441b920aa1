use std::process::ExitCode;

use finsler_core::suite::{criteria, run_criterion};

fn main() -> ExitCode {
    let mut failed = 0;
    for c in criteria() {
        let outcome = run_criterion(&c);
        println!("{}", outcome.line());
        if !outcome.ok() {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria().len() - failed, criteria().len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
