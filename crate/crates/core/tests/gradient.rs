//! Reverse-mode cost gradients against central finite differences on random
//! control trees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smpc_core::rng::uniform;
use smpc_core::tree::{ScenarioTree, DEFAULT_NODE_CAP, FD_STEP};
use smpc_core::{make_paper_example, ControlTree, DiscreteDistribution, SystemModel};

/// Controls that track the state up to a uniform offset in `[−0.6, 0.6]`,
/// which keeps the quadratic dynamics from blowing up over six stages.
fn random_controls(model: &SystemModel, x0: f64, horizon: usize, rng: &mut ChaCha8Rng) -> ControlTree {
    let mut tree = ScenarioTree::build(model, x0, horizon, None, DEFAULT_NODE_CAP).unwrap();
    let mut controls = tree.zero_controls();
    for k in 0..horizon {
        let states = tree.level_states(k).to_vec();
        for (u, x) in controls.level_mut(k).iter_mut().zip(states) {
            *u = x + 1.2 * uniform(rng) - 0.6;
        }
        tree.assign(&controls).unwrap();
    }
    controls
}

#[test]
fn adjoint_matches_finite_differences() {
    let models = [
        make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap(),
        make_paper_example(0.5, 0.0, 0.4, 2.0, 3.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let model = &models[case % 2];
        let horizon = 1 + case % 6;
        let x0 = 0.5 + 3.0 * uniform(&mut rng);
        let controls = random_controls(model, x0, horizon, &mut rng);
        let tree = ScenarioTree::build(model, x0, horizon, Some(&controls), DEFAULT_NODE_CAP).unwrap();
        let adjoint = tree.cost_gradient(&controls).unwrap();
        let fd = tree.finite_difference_gradient(&controls, FD_STEP).unwrap();
        let scale = fd.iter().fold(0.0_f64, |m, g| m.max(g.abs())).max(1e-8);
        let err = adjoint.iter().zip(&fd).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        assert!(err < 1e-5, "case {case} N={horizon}: relative error {err:e}");
    }
}

#[test]
fn distributional_initial_state() {
    let model = make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap();
    let x0 = DiscreteDistribution::new([(1.0, 0.25), (2.5, 0.75)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tree = ScenarioTree::build(&model, x0.clone(), 4, None, DEFAULT_NODE_CAP).unwrap();
    let mut controls = tree.zero_controls();
    for k in 0..4 {
        let states = tree.level_states(k).to_vec();
        for (u, x) in controls.level_mut(k).iter_mut().zip(states) {
            *u = x + uniform(&mut rng) - 0.5;
        }
        tree.assign(&controls).unwrap();
    }
    let adjoint = tree.cost_gradient(&controls).unwrap();
    let fd = tree.finite_difference_gradient(&controls, FD_STEP).unwrap();
    for (a, b) in adjoint.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
    }
}
