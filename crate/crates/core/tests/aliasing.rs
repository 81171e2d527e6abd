mod suites;

#[test]
fn steps_touch_only_active_slices() {
    suites::aliasing(40, 19).unwrap();
}
