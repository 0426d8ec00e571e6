//! Disturbance-history scenario trees.
//!
//! Depth `k` holds one node per initial atom and noise history
//! `(w₀, …, w_{k−1})`, stored level by level. Child `j` of node `i` at depth
//! `k` is node `i·s + j` at depth `k + 1`, where `s` is the noise support size.
//! Controls are indexed by non-leaf node, so two scenarios that share a history
//! prefix necessarily share the control on that prefix.

use alloc::vec;
use alloc::vec::Vec;

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::model::{Interval, SystemModel};
use crate::stats::pairwise_sum;

pub const DEFAULT_NODE_CAP: usize = 1 << 20;

/// Central-difference step for the gradient fallback.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Point(f64),
    Distribution(DiscreteDistribution),
}

impl InitialState {
    pub fn as_distribution(&self) -> DiscreteDistribution {
        match self {
            InitialState::Point(x) => DiscreteDistribution::point_mass(*x),
            InitialState::Distribution(d) => d.clone(),
        }
    }
}

impl From<f64> for InitialState {
    fn from(x: f64) -> Self {
        InitialState::Point(x)
    }
}

impl From<DiscreteDistribution> for InitialState {
    fn from(d: DiscreteDistribution) -> Self {
        InitialState::Distribution(d)
    }
}

fn level_offsets(levels: usize, root_count: usize, branching: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(levels + 1);
    let mut width = root_count;
    let mut acc = 0;
    offsets.push(0);
    for _ in 0..levels {
        acc += width;
        offsets.push(acc);
        width *= branching;
    }
    offsets
}

/// One control per non-leaf node of a scenario tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTree {
    horizon: usize,
    root_count: usize,
    branching: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ControlTree {
    pub fn zeros(horizon: usize, root_count: usize, branching: usize) -> Self {
        let offsets = level_offsets(horizon, root_count, branching);
        let values = vec![0.0; offsets[horizon]];
        Self { horizon, root_count, branching, offsets, values }
    }

    /// Builds a tree from per-depth control vectors (depth `k` has
    /// `root_count · branching^k` entries).
    pub fn from_levels(levels: &[Vec<f64>], root_count: usize, branching: usize) -> Result<Self> {
        let mut tree = Self::zeros(levels.len(), root_count, branching);
        for (k, level) in levels.iter().enumerate() {
            let slot = tree.level_mut(k);
            if slot.len() != level.len() {
                return Err(Error::ShapeMismatch { expected: slot.len(), found: level.len() });
            }
            slot.copy_from_slice(level);
        }
        Ok(tree)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root_count(&self) -> usize {
        self.root_count
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn level(&self, depth: usize) -> &[f64] {
        &self.values[self.offsets[depth]..self.offsets[depth + 1]]
    }

    pub fn level_mut(&mut self, depth: usize) -> &mut [f64] {
        &mut self.values[self.offsets[depth]..self.offsets[depth + 1]]
    }

    pub fn levels(&self) -> Vec<Vec<f64>> {
        (0..self.horizon).map(|k| self.level(k).to_vec()).collect()
    }

    /// All controls, depth-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn root_controls(&self) -> &[f64] {
        self.level(0)
    }

    pub fn within(&self, bounds: Interval) -> bool {
        self.values.iter().all(|&u| bounds.contains(u))
    }

    /// Receding-horizon warm start: the subtree below root child `branch`,
    /// shifted up one level, with a zero level appended at the bottom.
    pub fn shifted(&self, branch: usize) -> Self {
        assert_eq!(self.root_count, 1, "shifting needs a deterministic root");
        assert!(branch < self.branching);
        let mut next = Self::zeros(self.horizon, 1, self.branching);
        let mut width = 1;
        for k in 0..self.horizon.saturating_sub(1) {
            let src = &self.level(k + 1)[branch * width..(branch + 1) * width];
            next.level_mut(k).copy_from_slice(src);
            width *= self.branching;
        }
        next
    }

    fn conforms(&self, tree: &ScenarioTree) -> Result<()> {
        let expected = tree.offsets[tree.horizon];
        if self.horizon != tree.horizon
            || self.root_count != tree.root_count
            || self.branching != tree.branching
            || self.values.len() != expected
        {
            return Err(Error::ShapeMismatch { expected, found: self.values.len() });
        }
        Ok(())
    }
}

/// States and path probabilities of every disturbance history up to the horizon.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    model: SystemModel,
    horizon: usize,
    root_count: usize,
    branching: usize,
    offsets: Vec<usize>,
    noise_values: Vec<f64>,
    noise_probabilities: Vec<f64>,
    root_states: Vec<f64>,
    probabilities: Vec<f64>,
    states: Vec<f64>,
}

impl ScenarioTree {
    /// Forward-simulates the tree under `controls` (zero controls when `None`).
    pub fn build(
        model: &SystemModel,
        initial: impl Into<InitialState>,
        horizon: usize,
        controls: Option<&ControlTree>,
        node_cap: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(crate::error::invalid_argument("horizon must be at least 1"));
        }
        let initial = initial.into().as_distribution();
        let branching = model.noise().len();
        let root_count = initial.len();
        let leaves = (root_count as u128).saturating_mul((branching as u128).saturating_pow(horizon as u32));
        if leaves > node_cap as u128 {
            return Err(Error::NodeCapExceeded { required: leaves, cap: node_cap });
        }
        let offsets = level_offsets(horizon + 1, root_count, branching);
        let total = offsets[horizon + 1];
        let noise_values: Vec<f64> = model.noise().values().collect();
        let noise_probabilities: Vec<f64> = model.noise().atoms().iter().map(|a| a.probability).collect();

        let mut probabilities = vec![0.0; total];
        for (i, atom) in initial.atoms().iter().enumerate() {
            probabilities[i] = atom.probability;
        }
        for k in 0..horizon {
            let (lo, hi) = (offsets[k], offsets[k + 1]);
            for i in 0..hi - lo {
                let p = probabilities[lo + i];
                for (j, q) in noise_probabilities.iter().enumerate() {
                    probabilities[hi + i * branching + j] = p * q;
                }
            }
        }

        let mut tree = Self {
            model: model.clone(),
            horizon,
            root_count,
            branching,
            offsets,
            noise_values,
            noise_probabilities,
            root_states: initial.values().collect(),
            probabilities,
            states: vec![0.0; total],
        };
        let zeros;
        let controls = match controls {
            Some(c) => c,
            None => {
                zeros = tree.zero_controls();
                &zeros
            }
        };
        tree.assign(controls)?;
        Ok(tree)
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn root_count(&self) -> usize {
        self.root_count
    }

    pub fn level_len(&self, depth: usize) -> usize {
        self.offsets[depth + 1] - self.offsets[depth]
    }

    pub fn level_states(&self, depth: usize) -> &[f64] {
        &self.states[self.offsets[depth]..self.offsets[depth + 1]]
    }

    pub fn level_probabilities(&self, depth: usize) -> &[f64] {
        &self.probabilities[self.offsets[depth]..self.offsets[depth + 1]]
    }

    /// Path probabilities of the control-carrying nodes, depth-major.
    pub fn control_node_probabilities(&self) -> &[f64] {
        &self.probabilities[..self.offsets[self.horizon]]
    }

    pub fn noise_values(&self) -> &[f64] {
        &self.noise_values
    }

    /// Index at depth `to` of the ancestor of node `index` at depth `from`.
    pub fn ancestor(&self, from: usize, index: usize, to: usize) -> usize {
        debug_assert!(to <= from);
        index / self.branching.pow((from - to) as u32)
    }

    /// Noise outcome indices along the history of node `index` at `depth`.
    pub fn history(&self, depth: usize, index: usize) -> Vec<usize> {
        let mut path = vec![0; depth];
        let mut i = index;
        for k in (0..depth).rev() {
            path[k] = i % self.branching;
            i /= self.branching;
        }
        path
    }

    pub fn zero_controls(&self) -> ControlTree {
        ControlTree::zeros(self.horizon, self.root_count, self.branching)
    }

    /// Re-simulates every node state under `controls`.
    pub fn assign(&mut self, controls: &ControlTree) -> Result<()> {
        controls.conforms(self)?;
        let mut states = core::mem::take(&mut self.states);
        self.forward(controls.as_slice(), &mut states);
        self.states = states;
        Ok(())
    }

    /// Whether every child state equals the dynamics applied to its parent.
    pub fn is_consistent_with(&self, controls: &ControlTree) -> bool {
        if controls.conforms(self).is_err() {
            return false;
        }
        let u = controls.as_slice();
        (0..self.horizon).all(|k| {
            let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
            (0..hi - lo).all(|i| {
                self.noise_values.iter().enumerate().all(|(j, &w)| {
                    self.states[hi + i * self.branching + j]
                        == self.model.dynamics(self.states[lo + i], u[lo + i], w)
                })
            })
        })
    }

    /// `J_N = Σ_k Σ_{depth-k nodes} p · g(x, u)`, the exact expected cost.
    pub fn evaluate_cost(&self, controls: &ControlTree) -> Result<f64> {
        controls.conforms(self)?;
        let mut states = vec![0.0; self.states.len()];
        self.forward(controls.as_slice(), &mut states);
        Ok(self.cost_of(&states, controls.as_slice()))
    }

    /// Reverse-mode gradient of [`evaluate_cost`](Self::evaluate_cost) with
    /// respect to every node control, depth-major. Uses central differences when
    /// the system provides no partial derivatives.
    pub fn cost_gradient(&self, controls: &ControlTree) -> Result<Vec<f64>> {
        controls.conforms(self)?;
        let mut states = vec![0.0; self.states.len()];
        let mut grad = vec![0.0; controls.len()];
        self.cost_and_gradient(controls.as_slice(), &mut states, &mut grad);
        Ok(grad)
    }

    pub fn finite_difference_gradient(&self, controls: &ControlTree, step: f64) -> Result<Vec<f64>> {
        controls.conforms(self)?;
        let mut grad = vec![0.0; controls.len()];
        self.fd_gradient(controls.as_slice(), step, &mut grad);
        Ok(grad)
    }

    fn forward(&self, u: &[f64], states: &mut [f64]) {
        states[..self.root_count].copy_from_slice(&self.root_states);
        let s = self.branching;
        for k in 0..self.horizon {
            let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
            for i in 0..hi - lo {
                let x = states[lo + i];
                let ui = u[lo + i];
                for (j, &w) in self.noise_values.iter().enumerate() {
                    states[hi + i * s + j] = self.model.dynamics(x, ui, w);
                }
            }
        }
    }

    fn cost_of(&self, states: &[f64], u: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut terms = Vec::new();
        for k in 0..self.horizon {
            let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
            terms.clear();
            terms.extend(
                (lo..hi).map(|n| self.probabilities[n] * self.model.stage_cost(states[n], u[n])),
            );
            total += pairwise_sum(&terms);
        }
        total
    }

    /// Cost at `u`, gradient into `grad`, node states into `states`.
    pub(crate) fn cost_and_gradient(&self, u: &[f64], states: &mut [f64], grad: &mut [f64]) -> f64 {
        self.forward(u, states);
        let value = self.cost_of(states, u);
        if !self.adjoint_gradient(u, states, grad) {
            self.fd_gradient(u, FD_STEP, grad);
        }
        value
    }

    fn adjoint_gradient(&self, u: &[f64], states: &[f64], grad: &mut [f64]) -> bool {
        let sys = self.model.system();
        let s = self.branching;
        // leaves carry no cost, so their adjoint is zero
        let mut child_adjoint = vec![0.0; self.level_len(self.horizon)];
        for k in (0..self.horizon).rev() {
            let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
            let mut adjoint = vec![0.0; hi - lo];
            for i in 0..hi - lo {
                let n = lo + i;
                let (x, ui, p) = (states[n], u[n], self.probabilities[n]);
                let Some((gx, gu)) = sys.stage_cost_partials(x, ui) else { return false };
                let mut lam = p * gx;
                let mut du = p * gu;
                for (j, &w) in self.noise_values.iter().enumerate() {
                    let Some((fx, fu)) = sys.dynamics_partials(x, ui, w) else { return false };
                    let lc = child_adjoint[i * s + j];
                    lam += lc * fx;
                    du += lc * fu;
                }
                adjoint[i] = lam;
                grad[n] = du;
            }
            child_adjoint = adjoint;
        }
        true
    }

    fn fd_gradient(&self, u: &[f64], step: f64, grad: &mut [f64]) {
        let mut work = u.to_vec();
        let mut states = vec![0.0; self.states.len()];
        for n in 0..u.len() {
            let orig = work[n];
            work[n] = orig + step;
            self.forward(&work, &mut states);
            let plus = self.cost_of(&states, &work);
            work[n] = orig - step;
            self.forward(&work, &mut states);
            let minus = self.cost_of(&states, &work);
            work[n] = orig;
            grad[n] = (plus - minus) / (2.0 * step);
        }
    }

    /// Exact law of the state at each depth `k = 0..=N`.
    pub fn state_distributions(&self) -> Vec<DiscreteDistribution> {
        (0..=self.horizon)
            .map(|k| {
                let pairs = self
                    .level_states(k)
                    .iter()
                    .zip(self.level_probabilities(k))
                    .map(|(&x, &p)| (x, p))
                    .collect();
                DiscreteDistribution::from_weighted(pairs, crate::distribution::ATOM_MERGE_TOL)
            })
            .collect()
    }

    /// Expected stage cost `ℓ(X(k), U(k))` at each depth `k < N`.
    pub fn stage_costs(&self, controls: &ControlTree) -> Result<Vec<f64>> {
        controls.conforms(self)?;
        let mut states = vec![0.0; self.states.len()];
        self.forward(controls.as_slice(), &mut states);
        let u = controls.as_slice();
        Ok((0..self.horizon)
            .map(|k| {
                let terms: Vec<f64> = (self.offsets[k]..self.offsets[k + 1])
                    .map(|n| self.probabilities[n] * self.model.stage_cost(states[n], u[n]))
                    .collect();
                pairwise_sum(&terms)
            })
            .collect())
    }

    /// Probability of the noise outcome with index `j`.
    pub fn branch_probability(&self, j: usize) -> f64 {
        self.noise_probabilities[j]
    }
}

/// [`ScenarioTree::build`] with the default node cap.
pub fn build_tree(
    model: &SystemModel,
    initial: impl Into<InitialState>,
    horizon: usize,
    controls: Option<&ControlTree>,
) -> Result<ScenarioTree> {
    ScenarioTree::build(model, initial, horizon, controls, DEFAULT_NODE_CAP)
}
