//! Expected costs recomputed by brute-force path enumeration.

use smpc_core::mpc::{run_algorithm1, GridFeedback};
use smpc_core::scalar::ScalarSearch;
use smpc_core::tree::{ScenarioTree, DEFAULT_NODE_CAP};
use smpc_core::{backward_induction, make_paper_example, ControlTree, DiscreteDistribution, SystemModel};

/// Walks every noise sequence; the control at depth `k` on the path with
/// branch choices `(j₀, …, j_{k−1})` sits at index `Σ j_i s^{k−1−i}` of level `k`.
fn enumerate(model: &SystemModel, controls: &ControlTree, x: f64, k: usize, index: usize, p: f64) -> f64 {
    if k == controls.horizon() {
        return 0.0;
    }
    let u = controls.level(k)[index];
    let mut total = p * model.stage_cost(x, u);
    let s = model.noise().len();
    for (j, w) in model.noise().atoms().iter().enumerate() {
        let next = model.dynamics(x, u, w.value);
        total += enumerate(model, controls, next, k + 1, index * s + j, p * w.probability);
    }
    total
}

#[test]
fn tree_cost_matches_path_enumeration() {
    let model = make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap();
    for horizon in 1..=7 {
        let levels: Vec<Vec<f64>> = (0..horizon)
            .map(|k| (0..1usize << k).map(|i| 0.3 + 0.1 * ((i * 7 + k * 3) % 11) as f64).collect())
            .collect();
        let controls = ControlTree::from_levels(&levels, 1, 2).unwrap();
        let tree = ScenarioTree::build(&model, 1.5, horizon, Some(&controls), DEFAULT_NODE_CAP).unwrap();
        let exact = enumerate(&model, &controls, 1.5, 0, 0, 1.0);
        let cost = tree.evaluate_cost(&controls).unwrap();
        assert!((cost - exact).abs() <= 1e-12 * exact, "N={horizon}: {cost} vs {exact}");
    }
}

/// `E Σ_{k<K} g(X(k), μ(X(k)))` by enumerating all closed-loop paths.
fn closed_loop_enumeration(model: &SystemModel, mu: &dyn Fn(f64) -> f64, x: f64, steps: usize, p: f64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let u = mu(x);
    let mut total = p * model.stage_cost(x, u);
    for w in model.noise().atoms() {
        total += closed_loop_enumeration(model, mu, model.dynamics(x, u, w.value), steps - 1, p * w.probability);
    }
    total
}

#[test]
fn exact_propagation_matches_path_enumeration() {
    let model = make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap();
    let table = backward_induction(&model, 801, 3, ScalarSearch::default()).unwrap();
    let fb = GridFeedback::new(&table, 3).unwrap();
    let mu = |x: f64| table.feedback(x, 3).control;
    let x0 = DiscreteDistribution::new([(2.0, 0.4), (3.0, 0.6)]).unwrap();
    let steps = 8;
    let ens = run_algorithm1(&model, &fb, &x0, steps, usize::MAX);
    let exact: f64 = x0.atoms().iter().map(|a| closed_loop_enumeration(&model, &mu, a.value, steps, a.probability)).sum();
    let total = ens.cumulative_costs()[steps - 1];
    assert!((total - exact).abs() <= 1e-10 * exact, "{total} vs {exact}");
    // coincident atoms are merged at 1e-9, so at most that much transport per unit mass
    assert!(ens.merge_loss <= 1e-9 * steps as f64, "{}", ens.merge_loss);
}
