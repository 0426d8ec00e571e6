//! Finite-horizon dynamic programming on a uniform state grid.
//!
//! `V_0 ≡ 0` and `V_j(x) = min_u g(x, u) + Σ_w p_w V̄_{j−1}(f(x, u, w))`, where
//! `V̄` is the piecewise-linear interpolant of the grid values, held constant
//! outside the state domain. Minimizers are selected deterministically
//! (smallest control among ties), which makes the feedback a measurable
//! selection.

use alloc::vec::Vec;

use crate::distribution::{DiscreteDistribution, ATOM_MERGE_TOL};
use crate::error::{invalid_argument, Result};
use crate::model::{Interval, SystemModel};
use crate::scalar::{Minimum, ScalarSearch};

/// A minimizing control at a query state and the minimized value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub control: f64,
    pub value: f64,
    /// The query state, or a successor under the chosen control, lay outside
    /// the state domain.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct ValueTable {
    model: SystemModel,
    search: ScalarSearch,
    grid: Vec<f64>,
    /// `values[j][i] = V_j(grid[i])`, `j = 0..=N`.
    values: Vec<Vec<f64>>,
    /// `feedback[j][i]` minimizes the `j`-steps-to-go problem; `feedback[0]` is empty.
    feedback: Vec<Vec<f64>>,
    clamp_events: usize,
}

/// Uniform grid of `size` nodes over `domain`, endpoints exact.
fn uniform_grid(domain: Interval, size: usize) -> Vec<f64> {
    let h = domain.width() / (size - 1) as f64;
    (0..size)
        .map(|i| if i == size - 1 { domain.hi } else { domain.lo + i as f64 * h })
        .collect()
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let (lo, hi) = (grid[0], grid[n - 1]);
    if x <= lo {
        return values[0];
    }
    if x >= hi {
        return values[n - 1];
    }
    let h = (hi - lo) / (n - 1) as f64;
    let i = (((x - lo) / h) as usize).min(n - 2);
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + t * (values[i + 1] - values[i])
}

/// Minimizes `g(x, u) + E V̄(f(x, u, W))` over the model's control box.
fn stage_minimum(
    model: &SystemModel,
    search: &ScalarSearch,
    grid: &[f64],
    next_values: &[f64],
    x: f64,
) -> Minimum {
    let noise = model.noise().atoms();
    let bounds = model.control_bounds();
    search.minimize(bounds.lo, bounds.hi, |u| {
        let mut v = model.stage_cost(x, u);
        for a in noise {
            v += a.probability * interpolate(grid, next_values, model.dynamics(x, u, a.value));
        }
        v
    })
}

fn leaves_domain(model: &SystemModel, x: f64, u: f64) -> bool {
    let domain = model.state_domain();
    model.noise().values().any(|w| !domain.contains(model.dynamics(x, u, w)))
}

/// Computes `V_0, …, V_N` and the feedback tables on a `grid_size`-node grid.
pub fn backward_induction(
    model: &SystemModel,
    grid_size: usize,
    horizon: usize,
    search: ScalarSearch,
) -> Result<ValueTable> {
    let mut table = ValueTable::empty(model, grid_size, search)?;
    for _ in 0..horizon {
        table.extend_by_one_stage();
    }
    Ok(table)
}

impl ValueTable {
    /// A table holding only `V_0 ≡ 0`.
    pub fn empty(model: &SystemModel, grid_size: usize, search: ScalarSearch) -> Result<Self> {
        if grid_size < 2 {
            return Err(invalid_argument("grid needs at least two nodes"));
        }
        let grid = uniform_grid(model.state_domain(), grid_size);
        Ok(Self {
            model: model.clone(),
            search,
            values: alloc::vec![alloc::vec![0.0; grid_size]],
            feedback: alloc::vec![Vec::new()],
            grid,
            clamp_events: 0,
        })
    }

    /// Solves the stage problem at one grid node for `V_{horizon()+1}`.
    /// Exposed so callers can distribute the nodes of a stage over workers;
    /// [`push_stage`](Self::push_stage) assembles the results.
    pub fn solve_node(&self, index: usize) -> Decision {
        let x = self.grid[index];
        let m = stage_minimum(&self.model, &self.search, &self.grid, self.values.last().expect("V_0"), x);
        Decision { control: m.argmin, value: m.value, clamped: leaves_domain(&self.model, x, m.argmin) }
    }

    /// Appends a stage computed node by node with [`solve_node`](Self::solve_node).
    pub fn push_stage(&mut self, decisions: &[Decision]) {
        assert_eq!(decisions.len(), self.grid.len());
        self.clamp_events += decisions.iter().filter(|d| d.clamped).count();
        self.values.push(decisions.iter().map(|d| d.value).collect());
        self.feedback.push(decisions.iter().map(|d| d.control).collect());
    }

    fn extend_by_one_stage(&mut self) {
        let decisions: Vec<Decision> = (0..self.grid.len()).map(|i| self.solve_node(i)).collect();
        self.push_stage(&decisions);
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn search(&self) -> ScalarSearch {
        self.search
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self, steps: usize) -> &[f64] {
        &self.values[steps]
    }

    pub fn feedback_table(&self, steps: usize) -> &[f64] {
        &self.feedback[steps]
    }

    /// Grid nodes whose optimal successors left the state domain.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Interpolated `V̄_steps(x)`.
    pub fn value_at(&self, steps: usize, x: f64) -> f64 {
        interpolate(&self.grid, &self.values[steps], x)
    }

    /// MPC feedback `μ_N(x)`, re-optimized at `x` against `V̄_{N−1}`.
    ///
    /// Panics if `steps_remaining` is zero or exceeds the table horizon.
    pub fn feedback(&self, x: f64, steps_remaining: usize) -> Decision {
        assert!(
            steps_remaining >= 1 && steps_remaining <= self.horizon(),
            "feedback for {steps_remaining} steps needs a table of that horizon (have {})",
            self.horizon()
        );
        let domain = self.model.state_domain();
        let query = domain.clamp(x);
        let m = stage_minimum(&self.model, &self.search, &self.grid, &self.values[steps_remaining - 1], query);
        Decision {
            control: m.argmin,
            value: m.value,
            clamped: query != x || leaves_domain(&self.model, query, m.argmin),
        }
    }
}

/// Residual of the dynamic programming principle at `x` for split `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppResidual {
    pub value: f64,
    pub prefix_cost: f64,
    pub tail_value: f64,
    pub residual: f64,
}

impl DppResidual {
    pub fn relative(&self) -> f64 {
        if self.value == 0.0 {
            self.residual
        } else {
            self.residual / self.value.abs()
        }
    }
}

/// `|V_N(x) − Σ_{j<M} ℓ(X*(j), U*(j)) − E V_{N−M}(X*(M))|`, with the optimal
/// evolution generated from the point mass at `x` by the table's feedback
/// and propagated exactly over the noise support.
pub fn dpp_residual(table: &ValueTable, x: f64, horizon: usize, split: usize) -> Result<DppResidual> {
    if !(1..=horizon).contains(&split) || horizon > table.horizon() {
        return Err(invalid_argument("need 1 ≤ M ≤ N ≤ table horizon"));
    }
    let model = table.model();
    let mut law = DiscreteDistribution::point_mass(x);
    let mut prefix_cost = 0.0;
    for j in 0..split {
        let mut next = Vec::with_capacity(law.len() * model.noise().len());
        let mut stage = 0.0;
        for atom in law.atoms() {
            let u = table.feedback(atom.value, horizon - j).control;
            stage += atom.probability * model.stage_cost(atom.value, u);
            for w in model.noise().atoms() {
                next.push((model.dynamics(atom.value, u, w.value), atom.probability * w.probability));
            }
        }
        prefix_cost += stage;
        law = DiscreteDistribution::from_weighted(next, ATOM_MERGE_TOL);
    }
    let tail_value = law.expectation(|y| table.value_at(horizon - split, y));
    let value = table.value_at(horizon, x);
    Ok(DppResidual { value, prefix_cost, tail_value, residual: (value - prefix_cost - tail_value).abs() })
}
