use std::io::Write;

use strongdamp::suite::{run_all, SuiteConfig, Tolerances};
use strongdamp_verify::{pinned_tolerances, SEED};

#[test]
fn acceptance() {
    assert_eq!(pinned_tolerances(), Tolerances::default());
    let cfg = SuiteConfig {
        seed: SEED,
        criteria: (1..=9).collect(),
        tolerances: pinned_tolerances(),
    };
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let run = run_all(&cfg, first.path(), second.path()).unwrap();
    // written past the test harness capture so the table shows on success too
    let mut err = std::io::stderr().lock();
    for line in run.lines() {
        writeln!(err, "{line}").unwrap();
    }
    drop(err);
    let failed: Vec<u32> = (0..run.report.outcomes.len())
        .filter(|&i| !run.passed(i))
        .map(|i| run.report.outcomes[i].id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
