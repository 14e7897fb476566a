use std::io::Write;

use maxreglab::harness::checks::run_all;

#[test]
fn acceptance() {
    let work = tempfile::tempdir().expect("temporary directory");
    let results = run_all(work.path(), 8);
    let mut out = std::io::stdout().lock();
    for r in &results {
        writeln!(out, "{r}").unwrap();
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.number).collect();
    writeln!(out, "acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len()).unwrap();
    assert_eq!(results.len(), 10);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
