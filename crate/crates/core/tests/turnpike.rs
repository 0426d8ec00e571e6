//! Stationary-pair estimation on the benchmark model.

use smpc_core::scalar::ScalarSearch;
use smpc_core::turnpike::estimate_stationary;
use smpc_core::{backward_induction, make_paper_example, SolveOptions};

#[test]
fn estimators_agree_near_reference_cost() {
    let m = make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap();
    let table = backward_induction(&m, 2001, 16, ScalarSearch::default()).unwrap();
    let est = estimate_stationary(&m, 3.0, 15, 0.5, Some(&table), &SolveOptions::default()).unwrap();
    assert!((est.stationary_cost - 9.83).abs() <= 0.02 * 9.83, "{}", est.stationary_cost);
    assert!(!est.estimators_disagree(), "{:?}", est.estimator_disagreement());
    assert!((est.state_distribution.total_mass() - 1.0).abs() < 1e-10);
}

/// Mid-horizon extraction should be insensitive to where in the middle the
/// law is read off.
#[test]
fn mid_fraction_flatness() {
    let m = make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap();
    let opts = SolveOptions::default();
    let early = estimate_stationary(&m, 3.0, 15, 0.4, None, &opts).unwrap().stationary_cost;
    let late = estimate_stationary(&m, 3.0, 15, 0.6, None, &opts).unwrap().stationary_cost;
    let rel = (early - late).abs() / early.max(late);
    assert!(rel <= 0.01, "k*=6 gives {early}, k*=9 gives {late}: {:.2}% apart", 100.0 * rel);
}
