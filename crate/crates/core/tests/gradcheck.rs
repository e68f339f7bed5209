mod common;

#[test]
fn every_primitive_matches_finite_differences() {
    let errors = common::gradcheck::primitive_errors();
    assert_eq!(errors.len(), 17);
    for (name, err) in errors {
        assert!(err < 1e-5, "{name}: relative error {err}");
    }
}
