use ebmrec_bench::{measurement, params, phantom};

#[test]
fn fixtures_are_deterministic_and_consistent() {
    assert_eq!(phantom(32), phantom(32));
    assert_eq!(params(&[4, 8]), params(&[4, 8]));

    let (x, y, sens) = measurement(32, 1);
    assert_eq!((x.height(), x.width()), (32, 32));
    assert_eq!(y.coils(), 1);
    assert!(sens.is_none());
    let kept = y.mask.kept_fraction();
    assert!((kept - 1.0 / 3.0).abs() < 0.15 / 3.0 + 1e-9, "kept {kept}");

    let (_, y, sens) = measurement(32, 4);
    assert_eq!(y.coils(), 4);
    assert_eq!(sens.unwrap().n_coils(), 4);
}
