mod suites;

#[test]
fn full_only_mutual_training_equals_plain_training() {
    suites::degenerate_equivalence(5, 37).unwrap();
}
