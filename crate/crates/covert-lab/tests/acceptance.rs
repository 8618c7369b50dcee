//! Runs the default suite once, prints one line per criterion, then replays
//! every report for the determinism criterion.

use std::io::Write;
use std::time::Duration;

use covert_lab::harness::experiments::{default_suite, replay, run_experiment, WORKERS_ENV};

const SEED: u64 = 1;

// per-criterion runtime budgets in minutes
const BUDGET_MIN: [u64; 11] = [1, 5, 10, 10, 10, 15, 5, 20, 20, 10, 15];

#[test]
fn acceptance() {
    std::env::set_var(WORKERS_ENV, "1");
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for cfg in default_suite(SEED) {
        let report = run_experiment(&cfg).expect("experiment runs");
        let c = report.criterion.expect("suite experiments carry a criterion");
        let budget = Duration::from_secs(60 * BUDGET_MIN[c as usize - 1]);
        let ok = report.passed() && report.runtime < budget;
        if !report.passed() {
            eprint!("{}", report.table());
        }
        lines.push((c, ok, format!("{} in {:.1}s", cfg.experiment, report.runtime.as_secs_f64())));
        reports.push(report.to_jsonl());
    }

    // replay on a different worker count
    std::env::set_var(WORKERS_ENV, "3");
    let mut identical = true;
    for text in &reports {
        let (_, same) = replay(text).expect("replay runs");
        identical &= same;
    }
    lines.push((12, identical, format!("{} reports replayed", reports.len())));

    lines.sort_by_key(|l| l.0);
    // straight to stdout so the lines survive libtest's output capture
    let mut out = std::io::stdout().lock();
    for (c, ok, note) in &lines {
        writeln!(out, "criterion {c}: {} ({note})", if *ok { "PASS" } else { "FAIL" }).unwrap();
    }
    let failed: Vec<u8> = lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
