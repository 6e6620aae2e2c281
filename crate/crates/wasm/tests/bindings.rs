use copula_stream_wasm::{detect_changes, fit_correlation, online_error_curve};

#[test]
fn error_curve_has_one_value_per_batch() {
    let curve = online_error_curve(200, 1, 0.4, 0.5, 100, 1).unwrap();
    assert_eq!(curve.len(), 10);
    assert!(curve.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn detection_rows_have_five_fields() {
    let out = detect_changes(200, 1, 19, 0.05, 2).unwrap();
    assert_eq!(out.len(), 10 * 5);
    assert_eq!(out[0], 40.0);
    assert!(out[1].is_nan());
    let tested = out.chunks(5).filter(|r| !r[4].is_nan()).count();
    assert_eq!(tested, 6);
}

#[test]
fn fitted_correlation_is_close_to_truth() {
    let out = fit_correlation(2000, 0.2, 5).unwrap();
    assert_eq!(out.len(), 2 * 225);
    let err: f64 = (0..225).map(|i| (out[i] - out[225 + i]).powi(2)).sum::<f64>().sqrt();
    assert!(err < 2.0, "{err}");
    assert!((0..15).all(|i| (out[225 + i * 16] - 1.0).abs() < 1e-12));
}
