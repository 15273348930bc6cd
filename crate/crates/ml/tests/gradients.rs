use std::time::Instant;

use wivi_ml::nn::gradcheck::{run_suite, CASE_KINDS};

#[test]
fn every_layer_and_head_matches_finite_differences() {
    let t = Instant::now();
    let cases = 2 * CASE_KINDS.len();
    let reports = run_suite(cases, 2024).unwrap();
    let mut worst = 0.0f64;
    for r in &reports {
        assert!(r.max_err() < 1e-3, "{} {}: input {:.2e} params {:.2e}", r.case, r.shape, r.input_err, r.param_err);
        worst = worst.max(r.max_err());
    }
    assert!(reports.len() >= 20);
    assert!(t.elapsed().as_secs() < 60, "suite took {:?}", t.elapsed());
    eprintln!("{} cases, worst relative error {worst:.2e}", reports.len());
}

#[test]
fn different_seeds_draw_different_shapes() {
    let a = run_suite(CASE_KINDS.len(), 1).unwrap();
    let b = run_suite(CASE_KINDS.len(), 2).unwrap();
    assert!(a.iter().zip(&b).any(|(x, y)| x.shape != y.shape));
}
