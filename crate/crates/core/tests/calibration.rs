mod suites;

#[test]
fn calibration_matches_streaming_oracle() {
    suites::calibration_oracle(13).unwrap();
}
