mod common;

use common::*;

#[test]
fn renumbering_follows_first_occurrence() {
    assert_eq!(renumber_fixture(), vec![0, 1, 0, 2]);
}

#[test]
fn tokens_are_salted_and_stable() {
    assert_eq!(token_of("10.0.0.1"), token_of("10.0.0.1"));
    assert_ne!(token_of("10.0.0.1"), token_of("10.0.0.2"));
}

#[test]
fn merged_corpus_is_consistent() {
    let c = anon_corpus(5_000, 200, 6, 3);
    assert_eq!(c.distinct_ips, 200);
    let bad = anonymization_violations(&c);
    assert!(bad.is_empty(), "{bad:#?}");
}
