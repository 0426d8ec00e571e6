//! Finite-horizon stochastic optimal control on scenario trees.
//!
//! All node controls are optimized jointly by projected L-BFGS. The variables
//! are preconditioned by their path probabilities: a node's control enters
//! the cost only through its own subtree, so the Hessian diagonal scales with
//! the node's probability.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::lbfgs;
use crate::model::SystemModel;
use crate::tree::{ControlTree, InitialState, ScenarioTree, DEFAULT_NODE_CAP};

/// How the optimizer is seeded when no warm start is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    /// All controls zero.
    Zero,
    /// Roll the tree forward under `u = x` (clamped to the control bounds),
    /// which cancels the drift of the benchmark dynamics.
    #[default]
    StateTracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub node_cap: usize,
    pub initialization: Initialization,
    pub warm_start: Option<ControlTree>,
    /// How many times the control box may be doubled when the optimum
    /// touches it.
    pub max_widenings: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            memory: 10,
            node_cap: DEFAULT_NODE_CAP,
            initialization: Initialization::default(),
            warm_start: None,
            max_widenings: 3,
        }
    }
}

impl SolveOptions {
    pub fn with_warm_start(mut self, controls: ControlTree) -> Self {
        self.warm_start = Some(controls);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub controls: ControlTree,
    /// `J_N` at `controls`, an upper bound on `V_N`.
    pub value: f64,
    /// Projected gradient max-norm at `controls`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The control box in effect at return (wider than the model's when the
    /// optimum touched the original bounds).
    pub control_bounds: crate::model::Interval,
}

fn initial_controls(tree: &ScenarioTree, init: Initialization) -> ControlTree {
    let mut controls = tree.zero_controls();
    if init == Initialization::Zero {
        return controls;
    }
    let bounds = tree.model().control_bounds();
    let mut work = tree.clone();
    for k in 0..tree.horizon() {
        work.assign(&controls).expect("shape is fixed");
        let states = work.level_states(k).to_vec();
        for (u, x) in controls.level_mut(k).iter_mut().zip(states) {
            *u = bounds.clamp(x);
        }
    }
    controls
}

fn touches_bounds(controls: &ControlTree, bounds: crate::model::Interval) -> bool {
    let tol = 1e-9 * bounds.width();
    controls.as_slice().iter().any(|&u| u <= bounds.lo + tol || u >= bounds.hi - tol)
}

/// Minimizes `J_N(X₀, ·)` over causal control trees.
///
/// Returns [`Error::NotConverged`] carrying the best iterate when the gradient
/// tolerance is not met within `max_iters`.
pub fn solve(
    model: &SystemModel,
    initial: impl Into<InitialState>,
    horizon: usize,
    options: &SolveOptions,
) -> Result<OcpSolution> {
    let initial = initial.into();
    let mut model = model.clone();
    let mut tree = ScenarioTree::build(&model, initial.clone(), horizon, None, options.node_cap)?;
    let mut start = match &options.warm_start {
        Some(w) => {
            tree.evaluate_cost(w)?;
            w.clone()
        }
        None => initial_controls(&tree, options.initialization),
    };

    let mut total_iters = 0;
    let mut widenings = 0;
    loop {
        let bounds = model.control_bounds();
        let precond: Vec<f64> = tree.control_node_probabilities().iter().map(|p| 1.0 / p).collect();
        let mut states = vec![0.0; tree.control_node_probabilities().len() + tree.level_len(horizon)];
        let outcome = lbfgs::minimize(
            |u, g| tree.cost_and_gradient(u, &mut states, g),
            start.as_slice().to_vec(),
            bounds.lo,
            bounds.hi,
            &precond,
            lbfgs::Settings {
                memory: options.memory,
                max_iters: options.max_iters,
                grad_tol: options.grad_tol,
            },
        );
        total_iters += outcome.iterations;
        let mut controls = start.clone();
        controls.as_mut_slice().copy_from_slice(&outcome.x);

        if touches_bounds(&controls, bounds) && widenings < options.max_widenings {
            widenings += 1;
            model = model.with_control_bounds(bounds.widened(2.0));
            tree = ScenarioTree::build(&model, initial.clone(), horizon, Some(&controls), options.node_cap)?;
            start = controls;
            continue;
        }

        tree.assign(&controls)?;
        let value = tree.evaluate_cost(&controls)?;
        let solution = OcpSolution {
            controls,
            value,
            gradient_norm: outcome.grad_norm,
            iterations: total_iters,
            converged: outcome.converged,
            control_bounds: bounds,
        };
        return if solution.converged {
            Ok(solution)
        } else {
            Err(Error::NotConverged(Box::new(solution)))
        };
    }
}

/// Like [`solve`], but hands back the best iterate instead of
/// [`Error::NotConverged`].
pub fn solve_best_effort(
    model: &SystemModel,
    initial: impl Into<InitialState>,
    horizon: usize,
    options: &SolveOptions,
) -> Result<OcpSolution> {
    match solve(model, initial, horizon, options) {
        Err(e @ Error::NotConverged(_)) => Ok(e.into_best_iterate().expect("carries iterate")),
        other => other,
    }
}

/// Exact law `P_{X*(k)}` of the optimal state at every depth `k = 0..=N`.
/// `tree` must have been built (or assigned) with the solution's controls.
pub fn optimal_state_distributions(
    solution: &OcpSolution,
    tree: &ScenarioTree,
) -> Result<Vec<DiscreteDistribution>> {
    if !tree.is_consistent_with(&solution.controls) {
        let mut t = tree.clone();
        t.assign(&solution.controls)?;
        return Ok(t.state_distributions());
    }
    Ok(tree.state_distributions())
}

/// Scenario tree carrying the solution's controls and states.
pub fn solution_tree(
    model: &SystemModel,
    initial: impl Into<InitialState>,
    solution: &OcpSolution,
) -> Result<ScenarioTree> {
    let model = model.clone().with_control_bounds(solution.control_bounds);
    ScenarioTree::build(
        &model,
        initial,
        solution.controls.horizon(),
        Some(&solution.controls),
        usize::MAX,
    )
}
