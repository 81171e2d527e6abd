mod suites;

#[test]
fn selection_matches_brute_force_on_published_tables() {
    suites::budget_oracle(100, 31).unwrap();
}
