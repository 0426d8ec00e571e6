//! Closed-loop receding-horizon control.
//!
//! [`run_algorithm2`] measures the realized state on a sampled noise path and
//! applies the first optimal control for that state. [`run_algorithm1`]
//! propagates the whole closed-loop state law instead, applying the same
//! pointwise feedback atom by atom. With a measurable (here: deterministic)
//! feedback both produce the same expected closed-loop cost; the Monte-Carlo
//! aggregate of the first must therefore bracket the exact cost of the second.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;

use crate::distribution::{Atom, DiscreteDistribution};
use crate::dp::ValueTable;
use crate::error::{invalid_argument, Error, Result};
use crate::model::SystemModel;
use crate::ocp::{solve, SolveOptions};
use crate::rng::{path_stream, uniform, Purpose};
use crate::stats::{mean_and_halfwidth, pairwise_sum};

/// Atoms of the propagated law closer than this coincide.
pub const ENSEMBLE_MERGE_TOL: f64 = 1e-9;
pub const DEFAULT_SUPPORT_CAP: usize = 100_000;
/// Accumulated merge transport above which exact propagation counts as degraded.
pub const MERGE_LOSS_ALARM: f64 = 1e-6;

/// A deterministic state feedback `u = μ(x)`.
pub trait StateFeedback: Sync {
    fn control_at(&self, state: f64) -> f64;
}

/// A possibly randomized feedback; `rng` is the path's policy stream.
pub trait Policy: Sync {
    fn control(&self, state: f64, rng: &mut dyn RngCore) -> f64;
}

impl<F: StateFeedback> Policy for F {
    fn control(&self, state: f64, _rng: &mut dyn RngCore) -> f64 {
        self.control_at(state)
    }
}

impl<F: Fn(f64) -> f64 + Sync> StateFeedback for F {
    fn control_at(&self, state: f64) -> f64 {
        self(state)
    }
}

/// The MPC feedback `μ_N` from a grid value table.
#[derive(Debug, Clone, Copy)]
pub struct GridFeedback<'a> {
    pub table: &'a ValueTable,
    pub horizon: usize,
}

impl<'a> GridFeedback<'a> {
    pub fn new(table: &'a ValueTable, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > table.horizon() {
            return Err(invalid_argument("MPC horizon must lie in 1..=table horizon"));
        }
        Ok(Self { table, horizon })
    }
}

impl StateFeedback for GridFeedback<'_> {
    fn control_at(&self, state: f64) -> f64 {
        self.table.feedback(state, self.horizon).control
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroControl;

impl StateFeedback for ZeroControl {
    fn control_at(&self, _state: f64) -> f64 {
        0.0
    }
}

/// `μ(x) + ξ` with `ξ` uniform on `[−amplitude, amplitude]`.
#[derive(Debug, Clone, Copy)]
pub struct Perturbed<P> {
    pub base: P,
    pub amplitude: f64,
}

impl<P: StateFeedback> Policy for Perturbed<P> {
    fn control(&self, state: f64, rng: &mut dyn RngCore) -> f64 {
        self.base.control_at(state) + self.amplitude * (2.0 * uniform(rng) - 1.0)
    }
}

/// One realized closed-loop path.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub path_id: u64,
    pub seed: u64,
    /// `x(0..=K)`.
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub noises: Vec<f64>,
    pub stage_costs: Vec<f64>,
    /// Steps whose tree solve stopped short of its tolerance (tree mode only).
    pub unconverged_steps: Vec<usize>,
}

impl ClosedLoopTrace {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn cumulative_costs(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.stage_costs
            .iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    }
}

/// Sampled closed loop: at every step the realized state is fed to `policy`.
pub fn run_algorithm2(
    model: &SystemModel,
    policy: &(impl Policy + ?Sized),
    x0: f64,
    steps: usize,
    seed: u64,
    path_id: u64,
) -> ClosedLoopTrace {
    let mut noise_rng = path_stream(seed, path_id, Purpose::Noise);
    let mut policy_rng = path_stream(seed, path_id, Purpose::Policy);
    let noise = model.noise();
    let mut trace = ClosedLoopTrace {
        path_id,
        seed,
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        noises: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        unconverged_steps: Vec::new(),
    };
    let mut x = x0;
    trace.states.push(x);
    for _ in 0..steps {
        let u = policy.control(x, &mut policy_rng);
        let w = noise.sample(uniform(&mut noise_rng));
        trace.controls.push(u);
        trace.noises.push(w);
        trace.stage_costs.push(model.stage_cost(x, u));
        x = model.dynamics(x, u, w);
        trace.states.push(x);
    }
    trace
}

/// Sampled closed loop with `μ_N` computed by a fresh scenario-tree solve at
/// every realized state. With `warm_start`, each solve starts from the
/// previous solution shifted along the realized branch.
pub fn run_algorithm2_tree(
    model: &SystemModel,
    horizon: usize,
    x0: f64,
    steps: usize,
    seed: u64,
    path_id: u64,
    options: &SolveOptions,
    warm_start: bool,
) -> Result<ClosedLoopTrace> {
    let mut noise_rng = path_stream(seed, path_id, Purpose::Noise);
    let noise = model.noise();
    let mut trace = ClosedLoopTrace {
        path_id,
        seed,
        states: vec![x0],
        controls: Vec::new(),
        noises: Vec::new(),
        stage_costs: Vec::new(),
        unconverged_steps: Vec::new(),
    };
    let mut x = x0;
    let mut previous = None;
    for j in 0..steps {
        let mut opts = options.clone();
        opts.warm_start = previous.take();
        let solution = match solve(model, x, horizon, &opts) {
            Ok(s) => s,
            Err(Error::NotConverged(best)) => {
                trace.unconverged_steps.push(j);
                *best
            }
            Err(e) => return Err(e),
        };
        let u = solution.controls.root_controls()[0];
        let branch = noise.sample_index(uniform(&mut noise_rng));
        let w = noise.atoms()[branch].value;
        if warm_start {
            previous = Some(solution.controls.shifted(branch));
        }
        trace.controls.push(u);
        trace.noises.push(w);
        trace.stage_costs.push(model.stage_cost(x, u));
        x = model.dynamics(x, u, w);
        trace.states.push(x);
    }
    Ok(trace)
}

/// `J^cl_K` and derived series for `K = 1..=K_max`; entry `K − 1` belongs to `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSeries {
    pub cumulative: Vec<f64>,
    pub averaged: Vec<f64>,
    pub shifted_cumulative: Vec<f64>,
    /// 95% half-width of `cumulative`; zero for exact series.
    pub confidence_halfwidth: Vec<f64>,
    pub stationary_cost: f64,
    pub paths: usize,
}

impl PerformanceSeries {
    /// Aggregates per-path stage costs (one vector per path, all of equal
    /// length) into means over paths. Reductions run in path order.
    pub fn from_paths(stage_costs: &[Vec<f64>], stationary_cost: f64) -> Self {
        let paths = stage_costs.len();
        assert!(paths > 0, "need at least one path");
        let k_max = stage_costs[0].len();
        let mut running = vec![0.0; paths];
        let mut cumulative = Vec::with_capacity(k_max);
        let mut halfwidth = Vec::with_capacity(k_max);
        for k in 0..k_max {
            for (acc, costs) in running.iter_mut().zip(stage_costs) {
                *acc += costs[k];
            }
            let (mean, hw) = mean_and_halfwidth(&running);
            cumulative.push(mean);
            halfwidth.push(hw);
        }
        Self::assemble(cumulative, halfwidth, stationary_cost, paths)
    }

    /// Series of an exactly known expected stage-cost sequence.
    pub fn from_expected_costs(expected: &[f64], stationary_cost: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = expected
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect();
        Self::assemble(cumulative, vec![0.0; expected.len()], stationary_cost, 0)
    }

    fn assemble(cumulative: Vec<f64>, halfwidth: Vec<f64>, stationary_cost: f64, paths: usize) -> Self {
        let averaged = cumulative.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).collect();
        let shifted_cumulative =
            cumulative.iter().enumerate().map(|(i, c)| c - (i + 1) as f64 * stationary_cost).collect();
        Self { cumulative, averaged, shifted_cumulative, confidence_halfwidth: halfwidth, stationary_cost, paths }
    }

    pub fn k_max(&self) -> usize {
        self.cumulative.len()
    }

    /// 95% half-width of the averaged cost at `K`.
    pub fn averaged_halfwidth(&self, k: usize) -> f64 {
        self.confidence_halfwidth[k - 1] / k as f64
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub series: PerformanceSeries,
    /// Per-path traces in path order; empty unless retention was requested.
    pub traces: Vec<ClosedLoopTrace>,
}

/// Runs `paths` independent closed loops (path `p` on streams keyed by
/// `(seed, p)`) and aggregates their costs.
pub fn monte_carlo(
    model: &SystemModel,
    policy: &(impl Policy + ?Sized),
    x0: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    stationary_cost: f64,
    retain_traces: bool,
) -> Result<MonteCarloResult> {
    if paths == 0 || steps == 0 {
        return Err(invalid_argument("need at least one path and one step"));
    }
    let traces: Vec<ClosedLoopTrace> =
        (0..paths as u64).map(|p| run_algorithm2(model, policy, x0, steps, seed, p)).collect();
    Ok(aggregate_traces(traces, stationary_cost, retain_traces))
}

/// Aggregation shared by sequential and parallel Monte-Carlo drivers.
pub fn aggregate_traces(traces: Vec<ClosedLoopTrace>, stationary_cost: f64, retain: bool) -> MonteCarloResult {
    let costs: Vec<Vec<f64>> = traces.iter().map(|t| t.stage_costs.clone()).collect();
    let series = PerformanceSeries::from_paths(&costs, stationary_cost);
    MonteCarloResult { series, traces: if retain { traces } else { Vec::new() } }
}

/// Exactly propagated closed-loop state laws.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTrace {
    /// `P_{X(k)}` for `k = 0..=K`.
    pub laws: Vec<DiscreteDistribution>,
    /// `ℓ(k) = E[g(X(k), μ(X(k)))]` for `k < K`.
    pub expected_costs: Vec<f64>,
    pub support_sizes: Vec<usize>,
    /// Accumulated transport cost (mass × distance moved) of all atom merges.
    pub merge_loss: f64,
}

impl EnsembleTrace {
    pub fn cumulative_costs(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.expected_costs
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect()
    }

    pub fn degraded(&self) -> bool {
        self.merge_loss > MERGE_LOSS_ALARM
    }
}

/// Applies the feedback to every atom; returns the per-atom stage-cost terms
/// `p·g(x, μ(x))` and the weighted successors `(f(x, μ(x), w), p·q_w)`, both
/// in atom order.
pub fn propagate_atoms(
    model: &SystemModel,
    feedback: &(impl StateFeedback + ?Sized),
    atoms: &[Atom],
) -> (Vec<f64>, Vec<(f64, f64)>) {
    let noise = model.noise().atoms();
    let mut terms = Vec::with_capacity(atoms.len());
    let mut successors = Vec::with_capacity(atoms.len() * noise.len());
    for a in atoms {
        let u = feedback.control_at(a.value);
        terms.push(a.probability * model.stage_cost(a.value, u));
        for w in noise {
            successors.push((model.dynamics(a.value, u, w.value), a.probability * w.probability));
        }
    }
    (terms, successors)
}

/// Canonicalizes successors at [`ENSEMBLE_MERGE_TOL`] and, above `cap`
/// atoms, merges nearest neighbours pairwise into their probability-weighted
/// mean. Returns the law and the transport cost of all merges.
pub fn absorb_successors(mut successors: Vec<(f64, f64)>, cap: usize) -> (DiscreteDistribution, f64) {
    successors.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut loss = 0.0;
    let mut atoms: Vec<Atom> = Vec::with_capacity(successors.len());
    let mut anchor = f64::NEG_INFINITY;
    for (value, probability) in successors {
        if probability <= 0.0 {
            continue;
        }
        match atoms.last_mut() {
            Some(last) if value - anchor <= ENSEMBLE_MERGE_TOL => {
                loss += probability * (value - last.value).abs();
                last.probability += probability;
            }
            _ => {
                anchor = value;
                atoms.push(Atom { value, probability });
            }
        }
    }
    while atoms.len() > cap.max(1) {
        let excess = atoms.len() - cap.max(1);
        loss += merge_nearest_pairs(&mut atoms, excess);
    }
    (DiscreteDistribution::from_sorted_atoms(atoms), loss)
}

/// Merges up to `count` disjoint adjacent pairs, smallest gaps first (ties by
/// position). Returns the transport cost.
fn merge_nearest_pairs(atoms: &mut Vec<Atom>, count: usize) -> f64 {
    let n = atoms.len();
    let mut order: Vec<usize> = (0..n - 1).collect();
    let gap = |i: usize| atoms[i + 1].value - atoms[i].value;
    order.sort_by(|&a, &b| gap(a).total_cmp(&gap(b)).then(a.cmp(&b)));
    let mut taken = vec![false; n];
    let mut starts = vec![false; n];
    let mut chosen = 0;
    for i in order {
        if chosen == count {
            break;
        }
        if !taken[i] && !taken[i + 1] {
            taken[i] = true;
            taken[i + 1] = true;
            starts[i] = true;
            chosen += 1;
        }
    }
    let mut loss = 0.0;
    let mut merged = Vec::with_capacity(n - chosen);
    let mut i = 0;
    while i < n {
        if starts[i] {
            let (a, b) = (atoms[i], atoms[i + 1]);
            let p = a.probability + b.probability;
            let m = (a.probability * a.value + b.probability * b.value) / p;
            loss += a.probability * (m - a.value).abs() + b.probability * (b.value - m).abs();
            merged.push(Atom { value: m, probability: p });
            i += 2;
        } else {
            merged.push(atoms[i]);
            i += 1;
        }
    }
    *atoms = merged;
    loss
}

/// Exact closed-loop law propagation under a pointwise feedback.
pub fn run_algorithm1(
    model: &SystemModel,
    feedback: &(impl StateFeedback + ?Sized),
    x0: &DiscreteDistribution,
    steps: usize,
    support_cap: usize,
) -> EnsembleTrace {
    run_algorithm1_with(model, x0, steps, support_cap, |atoms| propagate_atoms(model, feedback, atoms))
}

/// [`run_algorithm1`] with a caller-supplied atom kernel, which must return
/// the same vectors as [`propagate_atoms`] (e.g. computed in parallel).
pub fn run_algorithm1_with(
    _model: &SystemModel,
    x0: &DiscreteDistribution,
    steps: usize,
    support_cap: usize,
    mut kernel: impl FnMut(&[Atom]) -> (Vec<f64>, Vec<(f64, f64)>),
) -> EnsembleTrace {
    let mut trace = EnsembleTrace {
        laws: vec![x0.clone()],
        expected_costs: Vec::with_capacity(steps),
        support_sizes: vec![x0.len()],
        merge_loss: 0.0,
    };
    for _ in 0..steps {
        let law = trace.laws.last().expect("initial law");
        let (terms, successors) = kernel(law.atoms());
        trace.expected_costs.push(pairwise_sum(&terms));
        let (next, loss) = absorb_successors(successors, support_cap);
        trace.merge_loss += loss;
        trace.support_sizes.push(next.len());
        trace.laws.push(next);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::backward_induction;
    use crate::model::make_paper_example;
    use crate::scalar::ScalarSearch;

    fn paper() -> SystemModel {
        make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap()
    }

    #[test]
    fn single_step_single_stage() {
        let m = paper();
        let t = backward_induction(&m, 401, 1, ScalarSearch::default()).unwrap();
        let fb = GridFeedback::new(&t, 1).unwrap();
        let tr = run_algorithm2(&m, &fb, 3.0, 1, 11, 0);
        assert!(tr.controls[0].abs() < 1e-7);
        assert_eq!(tr.stage_costs[0], m.stage_cost(3.0, tr.controls[0]));
        assert!((tr.stage_costs[0] - 9.0).abs() < 1e-12);
        assert!((tr.states[1] - 10.0).abs() < 1e-6 || (tr.states[1] - 9.25).abs() < 1e-6);

        let ens = run_algorithm1(&m, &fb, &DiscreteDistribution::point_mass(3.0), 1, DEFAULT_SUPPORT_CAP);
        assert!((ens.expected_costs[0] - 9.0).abs() < 1e-12);
        let a = ens.laws[1].atoms();
        assert!((a[0].value - 9.25).abs() < 1e-6 && (a[0].probability - 0.3).abs() < 1e-12);
        assert!((a[1].value - 10.0).abs() < 1e-6 && (a[1].probability - 0.7).abs() < 1e-12);
    }

    #[test]
    fn trace_satisfies_dynamics_exactly() {
        let m = paper();
        let fb = |x: f64| 0.6 * x;
        let tr = run_algorithm2(&m, &fb, 3.0, 50, 5, 2);
        for k in 0..50 {
            assert_eq!(tr.states[k + 1], m.dynamics(tr.states[k], tr.controls[k], tr.noises[k]));
            assert_eq!(tr.stage_costs[k], m.stage_cost(tr.states[k], tr.controls[k]));
        }
        assert_eq!(tr, run_algorithm2(&m, &fb, 3.0, 50, 5, 2));
    }

    #[test]
    fn single_path_monte_carlo_is_the_trace() {
        let m = paper();
        let fb = |x: f64| 0.6 * x;
        let mc = monte_carlo(&m, &fb, 3.0, 20, 1, 9, 0.0, true).unwrap();
        let tr = run_algorithm2(&m, &fb, 3.0, 20, 9, 0);
        assert_eq!(mc.traces[0], tr);
        assert_eq!(mc.series.cumulative, tr.cumulative_costs());
        assert!(mc.series.confidence_halfwidth.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn first_stage_cost_is_deterministic() {
        let m = paper();
        let fb = |x: f64| 0.6 * x;
        let mc = monte_carlo(&m, &fb, 3.0, 5, 64, 3, 0.0, false).unwrap();
        assert_eq!(mc.series.cumulative[0], m.stage_cost(3.0, fb(3.0)));
        assert_eq!(mc.series.confidence_halfwidth[0], 0.0);
    }

    #[test]
    fn series_identities() {
        let costs = vec![vec![3.0, 1.0, 4.0, 1.0], vec![5.0, 9.0, 2.0, 6.0], vec![5.0, 3.0, 5.0, 8.0]];
        let s = PerformanceSeries::from_paths(&costs, 2.5);
        for k in 1..=4 {
            let c = s.cumulative[k - 1];
            assert!((s.averaged[k - 1] * k as f64 - c).abs() <= 4.0 * f64::EPSILON * c);
            assert_eq!(s.shifted_cumulative[k - 1], c - k as f64 * 2.5);
        }
        assert_eq!(s.cumulative[0], 13.0 / 3.0);
    }

    #[test]
    fn support_growth_is_bounded() {
        let m = paper();
        let fb = |x: f64| 0.6 * x;
        let x0 = DiscreteDistribution::new([(2.0, 0.5), (3.0, 0.5)]).unwrap();
        let cap = 40;
        let ens = run_algorithm1(&m, &fb, &x0, 12, cap);
        for (k, &n) in ens.support_sizes.iter().enumerate() {
            assert!(n <= cap.min(2usize.pow(k as u32) * 2), "k={k} n={n}");
            assert!((ens.laws[k].total_mass() - 1.0).abs() < 1e-9);
        }
        assert!(ens.merge_loss > 0.0);
    }

    #[test]
    fn nearest_pair_merging_preserves_mass_and_mean() {
        let succ = vec![(0.0, 0.1), (0.001, 0.2), (1.0, 0.3), (1.5, 0.15), (1.502, 0.25)];
        let (d, loss) = absorb_successors(succ.clone(), 3);
        assert_eq!(d.len(), 3);
        assert!((d.total_mass() - 1.0).abs() < 1e-15);
        let mean: f64 = succ.iter().map(|(x, p)| x * p).sum();
        assert!((d.mean() - mean).abs() < 1e-15);
        // merges (0, 0.001) and (1.5, 1.502)
        let expected = 2.0 * 0.1 * 0.2 * 0.001 / 0.3 + 2.0 * 0.15 * 0.25 * 0.002 / 0.4;
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn tree_mode_warm_start_is_equivalent() {
        let m = paper();
        let opts = SolveOptions::default();
        let cold = run_algorithm2_tree(&m, 3, 3.0, 15, 4, 0, &opts, false).unwrap();
        let warm = run_algorithm2_tree(&m, 3, 3.0, 15, 4, 0, &opts, true).unwrap();
        let (a, b) = (cold.cumulative_costs()[14], warm.cumulative_costs()[14]);
        assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
        assert_eq!(cold.noises, warm.noises);
    }

    #[test]
    fn tree_mode_matches_grid_mode() {
        let m = paper();
        let table = backward_induction(&m, 2001, 3, ScalarSearch::default()).unwrap();
        let fb = GridFeedback::new(&table, 3).unwrap();
        let grid = run_algorithm2(&m, &fb, 3.0, 10, 4, 0);
        let tree = run_algorithm2_tree(&m, 3, 3.0, 10, 4, 0, &SolveOptions::default(), true).unwrap();
        for (a, b) in grid.controls.iter().zip(&tree.controls) {
            assert!((a - b).abs() < 5e-3, "{a} vs {b}");
        }
    }
}
