//! Distributional turnpike diagnostics.
//!
//! Optimal state laws are compared with an estimated optimal stationary law
//! in the 1-Wasserstein metric; the time indices where the distance exceeds a
//! threshold form the exceptional set.

use alloc::vec::Vec;

use libm::round;

use crate::distribution::DiscreteDistribution;
use crate::dp::ValueTable;
use crate::error::{invalid_argument, Error, Result};
use crate::model::{StationaryEstimate, StationaryProvenance, SystemModel};
use crate::ocp::{optimal_state_distributions, solution_tree, solve, OcpSolution, SolveOptions};
use crate::stats::pairwise_sum;

/// Exact `W₁(p, q) = ∫ |F_p − F_q|` between laws on the real line.
pub fn wasserstein1(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let (a, b) = (p.atoms(), q.atoms());
    let (mut i, mut j) = (0, 0);
    let (mut fp, mut fq) = (0.0_f64, 0.0_f64);
    let mut pieces = Vec::with_capacity(a.len() + b.len());
    let mut last: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(u), Some(v)) => u.value.min(v.value),
            (Some(u), None) => u.value,
            (None, Some(v)) => v.value,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            pieces.push((fp - fq).abs() * (x - prev));
        }
        while i < a.len() && a[i].value == x {
            fp += a[i].probability;
            i += 1;
        }
        while j < b.len() && b[j].value == x {
            fq += b[j].probability;
            j += 1;
        }
        last = Some(x);
    }
    pairwise_sum(&pieces)
}

/// Distances of the optimal laws to the stationary law and the resulting
/// exceptional-set sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnpikeProfile {
    pub horizon: usize,
    /// `d(P_{X*(k)}, P^s)` for `k = 0..=N`.
    pub distances: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `#{k : distances[k] > ε}` per threshold.
    pub exceptional_counts: Vec<usize>,
}

impl TurnpikeProfile {
    pub fn from_laws(laws: &[DiscreteDistribution], stationary: &DiscreteDistribution, thresholds: &[f64]) -> Self {
        let distances: Vec<f64> = laws.iter().map(|l| wasserstein1(l, stationary)).collect();
        let exceptional_counts =
            thresholds.iter().map(|&eps| distances.iter().filter(|&&d| d > eps).count()).collect();
        Self { horizon: laws.len() - 1, distances, thresholds: thresholds.to_vec(), exceptional_counts }
    }

    /// Indices `k ∈ [⌈N/3⌉, ⌊2N/3⌋]`.
    pub fn middle(&self) -> core::ops::RangeInclusive<usize> {
        self.horizon.div_ceil(3)..=2 * self.horizon / 3
    }

    pub fn max_middle_distance(&self) -> f64 {
        self.distances[self.middle()].iter().copied().fold(0.0, f64::max)
    }

    /// Whether every mid-horizon distance lies strictly below both endpoint
    /// distances.
    pub fn middle_below_endpoints(&self) -> bool {
        let ends = self.distances[0].min(self.distances[self.horizon]);
        self.max_middle_distance() < ends
    }

    pub fn count_for(&self, threshold: f64) -> Option<usize> {
        self.thresholds.iter().position(|&t| t == threshold).map(|i| self.exceptional_counts[i])
    }
}

/// Solves the OCP and profiles its laws against `stationary`.
pub fn turnpike_profile(
    model: &SystemModel,
    x0: f64,
    horizon: usize,
    stationary: &StationaryEstimate,
    thresholds: &[f64],
    options: &SolveOptions,
) -> Result<TurnpikeProfile> {
    let solution = solve(model, x0, horizon, options)?;
    profile_solution(model, x0, &solution, stationary, thresholds)
}

/// Profile of an already solved OCP.
pub fn profile_solution(
    model: &SystemModel,
    x0: f64,
    solution: &OcpSolution,
    stationary: &StationaryEstimate,
    thresholds: &[f64],
) -> Result<TurnpikeProfile> {
    let tree = solution_tree(model, x0, solution)?;
    let laws = optimal_state_distributions(solution, &tree)?;
    Ok(TurnpikeProfile::from_laws(&laws, &stationary.state_distribution, thresholds))
}

/// Estimates the optimal stationary pair from the middle of a long optimal
/// trajectory: the law `P_{X*(k*)}` and the expected stage cost at
/// `k* = round(mid_fraction · N_long)`. With a value table, also reports the
/// marginal cost `V_{H}(x₀) − V_{H−1}(x₀)` for `H = min(N_long + 1, table horizon)`.
///
/// An unconverged solve is accepted and recorded in the provenance.
pub fn estimate_stationary(
    model: &SystemModel,
    x0: f64,
    n_long: usize,
    mid_fraction: f64,
    table: Option<&ValueTable>,
    options: &SolveOptions,
) -> Result<StationaryEstimate> {
    if n_long < 2 {
        return Err(invalid_argument("N_long must be at least 2"));
    }
    if !(mid_fraction > 0.0 && mid_fraction < 1.0) {
        return Err(invalid_argument("mid_fraction must lie in (0, 1)"));
    }
    let k_star = (round(mid_fraction * n_long as f64) as usize).clamp(1, n_long - 1);
    let solution = match solve(model, x0, n_long, options) {
        Ok(s) => s,
        Err(Error::NotConverged(best)) => *best,
        Err(e) => return Err(e),
    };
    let tree = solution_tree(model, x0, &solution)?;
    let stage = tree.stage_costs(&solution.controls)?;
    let laws = optimal_state_distributions(&solution, &tree)?;
    let marginal_cost = table.filter(|t| t.horizon() >= 2).map(|t| {
        let h = (n_long + 1).min(t.horizon());
        t.value_at(h, x0) - t.value_at(h - 1, x0)
    });
    Ok(StationaryEstimate {
        state_distribution: laws[k_star].clone(),
        stationary_cost: stage[k_star],
        marginal_cost,
        provenance: StationaryProvenance {
            horizon: n_long,
            time_index: k_star,
            solver_converged: solution.converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::backward_induction;
    use crate::model::{make_paper_example, ControlSystem, Interval};
    use crate::scalar::ScalarSearch;
    use alloc::sync::Arc;
    use proptest::prelude::*;

    fn dist(pairs: &[(f64, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::new(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn point_masses() {
        let a = DiscreteDistribution::point_mass(-1.5);
        let b = DiscreteDistribution::point_mass(2.0);
        assert_eq!(wasserstein1(&a, &b), 3.5);
        assert_eq!(wasserstein1(&a, &a), 0.0);
    }

    #[test]
    fn half_mass_moved_by_one() {
        let p = dist(&[(0.0, 0.5), (1.0, 0.5)]);
        let q = DiscreteDistribution::point_mass(0.0);
        assert_eq!(wasserstein1(&p, &q), 0.5);
    }

    #[test]
    fn translation_moves_by_shift() {
        let p = dist(&[(0.0, 0.2), (1.0, 0.3), (4.0, 0.5)]);
        let q = p.pushforward(|x| x + 0.75);
        assert!((wasserstein1(&p, &q) - 0.75).abs() < 1e-15);
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..8).prop_map(|v| {
            let total: f64 = v.iter().map(|a| a.1).sum();
            DiscreteDistribution::from_weighted(v.into_iter().map(|(x, p)| (x, p / total)).collect(), 1e-12)
        })
    }

    proptest! {
        #[test]
        fn metric_axioms(p in arb_dist(), q in arb_dist(), r in arb_dist()) {
            let pq = wasserstein1(&p, &q);
            prop_assert!(pq >= 0.0);
            prop_assert_eq!(pq, wasserstein1(&q, &p));
            prop_assert_eq!(wasserstein1(&p, &p), 0.0);
            prop_assert!(pq <= wasserstein1(&p, &r) + wasserstein1(&r, &q) + 1e-12);
        }
    }

    fn paper() -> SystemModel {
        make_paper_example(1.0, 0.25, 0.7, 1.0, 25.0).unwrap()
    }

    #[test]
    fn counts_are_monotone_in_threshold() {
        let m = paper();
        let est = estimate_stationary(&m, 3.0, 10, 0.5, None, &SolveOptions::default()).unwrap();
        let prof = turnpike_profile(&m, 3.0, 10, &est, &[0.05, 0.1, 0.2, 1.0], &SolveOptions::default()).unwrap();
        assert!(prof.exceptional_counts.windows(2).all(|w| w[0] >= w[1]));
        assert!(prof.distances[0] > 0.0);
        assert_eq!(prof.distances.len(), 11);
    }

    #[derive(Debug)]
    struct Still;
    impl ControlSystem for Still {
        fn dynamics(&self, x: f64, _u: f64, _w: f64) -> f64 {
            x
        }
        fn stage_cost(&self, x: f64, _u: f64) -> f64 {
            x * x
        }
    }

    #[test]
    fn fixed_point_model() {
        let m = SystemModel::new(
            "still",
            Arc::new(Still),
            DiscreteDistribution::point_mass(0.0),
            Interval::new(-1.0, 1.0).unwrap(),
            Interval::new(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let t = backward_induction(&m, 21, 12, ScalarSearch::default()).unwrap();
        let est = estimate_stationary(&m, 0.0, 10, 0.5, Some(&t), &SolveOptions::default()).unwrap();
        assert_eq!(est.state_distribution, DiscreteDistribution::point_mass(0.0));
        assert_eq!(est.stationary_cost, 0.0);
        assert_eq!(est.marginal_cost, Some(0.0));
    }
}
