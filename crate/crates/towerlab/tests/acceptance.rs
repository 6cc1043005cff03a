//! The acceptance gate: runs the full verification suite and prints one
//! pass/fail line per criterion.

use towerlab::verify::{run_acceptance, VerifyLevel};

#[test]
fn full_verification_suite_passes() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let rows = run_acceptance(VerifyLevel::Full, scratch.path(), 0x5EED)
        .expect("suite must run to completion");
    for row in &rows {
        println!("{}", row.line());
    }
    assert!(rows.len() >= 12, "expected at least 12 criterion rows");
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).collect();
    assert!(
        failed.is_empty(),
        "{} criteria failed:\n{}",
        failed.len(),
        failed
            .iter()
            .map(|r| r.line())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
