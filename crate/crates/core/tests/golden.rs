mod common;

#[test]
fn analysis_matches_the_recount() {
    let bad = common::golden_mismatches();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn golden_log_loads() {
    let log = common::golden_log();
    assert_eq!(log.records.len(), 10_000);
    assert_eq!(common::golden_groups().len(), 24);
}
