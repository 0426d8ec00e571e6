//! Closed-loop performance diagnostics: averaged-cost limits per horizon,
//! linear growth of cumulative cost, overtaking margins against a long-horizon
//! optimal reference and the optimal-operation check.

use alloc::vec::Vec;

use crate::distribution::DiscreteDistribution;
use crate::dp::ValueTable;
use crate::error::{invalid_argument, Error, Result};
use crate::model::SystemModel;
use crate::mpc::{run_algorithm1, GridFeedback, PerformanceSeries};
use crate::ocp::{solution_tree, solve, SolveOptions};
use crate::stats::linear_fit;

/// Start of the window used for slope fits; excludes the leaving arc.
pub const DEFAULT_K_MIN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPerformance {
    pub horizon: usize,
    /// `J̄^cl_K` at `K_max`.
    pub averaged_cost_limit: f64,
    /// 95% half-width of `averaged_cost_limit`.
    pub averaged_halfwidth: f64,
    /// `averaged_cost_limit − stationary_cost`.
    pub delta_estimate: f64,
    pub slope: f64,
    pub slope_r2: f64,
}

impl HorizonPerformance {
    /// The averaged cost does not significantly undershoot the stationary cost.
    pub fn operates_optimally(&self) -> bool {
        self.delta_estimate >= -self.averaged_halfwidth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub stationary_cost: f64,
    pub k_min: usize,
    /// Sorted by horizon.
    pub horizons: Vec<HorizonPerformance>,
}

impl PerformanceReport {
    /// Whether `δ(N)` decreases between consecutive horizons by more than the
    /// sum of their half-widths (non-overlapping 95% intervals).
    pub fn delta_strictly_decreasing(&self) -> bool {
        self.horizons.windows(2).all(|w| {
            w[0].delta_estimate - w[1].delta_estimate > w[0].averaged_halfwidth + w[1].averaged_halfwidth
        })
    }

    /// Whether `δ(N)` is nonincreasing up to the half-widths.
    pub fn delta_nonincreasing(&self) -> bool {
        self.horizons.windows(2).all(|w| {
            w[1].delta_estimate <= w[0].delta_estimate + w[0].averaged_halfwidth + w[1].averaged_halfwidth
        })
    }

    pub fn get(&self, horizon: usize) -> Option<&HorizonPerformance> {
        self.horizons.iter().find(|h| h.horizon == horizon)
    }
}

/// Least-squares fit of `cumulative(K)` over `K ∈ [K_min, K_max]`; returns
/// `(slope, R²)`.
pub fn linear_growth_check(series: &PerformanceSeries, k_min: usize) -> Result<(f64, f64)> {
    let k_max = series.k_max();
    if k_min == 0 || k_max < 2 * k_min {
        return Err(invalid_argument("linear growth check needs 1 ≤ K_min and K_max ≥ 2·K_min"));
    }
    let ks: Vec<f64> = (k_min..=k_max).map(|k| k as f64).collect();
    let (slope, _, r2) = linear_fit(&ks, &series.cumulative[k_min - 1..]);
    Ok((slope, r2))
}

/// Summarizes one series per horizon, all sharing `K_max`.
pub fn averaged_performance(
    series: &[(usize, &PerformanceSeries)],
    stationary_cost: f64,
    k_min: usize,
) -> Result<PerformanceReport> {
    let Some((_, first)) = series.first() else {
        return Err(invalid_argument("no horizons"));
    };
    let k_max = first.k_max();
    let mut horizons = Vec::with_capacity(series.len());
    for &(horizon, s) in series {
        if s.k_max() != k_max {
            return Err(invalid_argument("series must share K_max"));
        }
        let (slope, slope_r2) = linear_growth_check(s, k_min)?;
        let averaged_cost_limit = s.averaged[k_max - 1];
        horizons.push(HorizonPerformance {
            horizon,
            averaged_cost_limit,
            averaged_halfwidth: s.averaged_halfwidth(k_max),
            delta_estimate: averaged_cost_limit - stationary_cost,
            slope,
            slope_r2,
        });
    }
    horizons.sort_by_key(|h| h.horizon);
    Ok(PerformanceReport { stationary_cost, k_min, horizons })
}

/// Worst value of `Ĵ^cl_K + CI_K` over all `K`, where `CI_K` is the 95%
/// half-width of the cumulative cost. Nonnegative means no tested `K` shows
/// the policy significantly beating the stationary cost.
pub fn optimal_operation_slack(series: &PerformanceSeries) -> f64 {
    series
        .shifted_cumulative
        .iter()
        .zip(&series.confidence_halfwidth)
        .map(|(s, h)| s + h)
        .fold(f64::INFINITY, f64::min)
}

/// `Σ_{k<K} [ℓ_ref(k) − ℓ_mpc(k)] + K·δ` for `K = 1..=len`.
pub fn overtaking_margin(reference: &[f64], mpc: &[f64], delta: f64) -> Vec<f64> {
    let mut acc = 0.0;
    reference
        .iter()
        .zip(mpc)
        .enumerate()
        .map(|(k, (r, m))| {
            acc += r - m;
            acc + (k + 1) as f64 * delta
        })
        .collect()
}

/// Overtaking margins of `μ_N` (exact law propagation) against the optimal
/// tree solution over `reference_horizon`, truncated to `K` steps.
pub fn overtaking_comparison(
    table: &ValueTable,
    x0: f64,
    n_mpc: usize,
    steps: usize,
    reference_horizon: usize,
    delta: f64,
    options: &SolveOptions,
) -> Result<Vec<f64>> {
    if reference_horizon < steps + n_mpc {
        return Err(invalid_argument("reference horizon must be at least K + N_mpc"));
    }
    let model: &SystemModel = table.model();
    let reference = match solve(model, x0, reference_horizon, options) {
        Ok(s) => s,
        Err(Error::NotConverged(best)) => *best,
        Err(Error::NodeCapExceeded { required, cap }) => {
            return Err(invalid_argument(alloc::format!(
                "reference tree needs {required} nodes (cap {cap}); reduce K or the reference horizon"
            )))
        }
        Err(e) => return Err(e),
    };
    let tree = solution_tree(model, x0, &reference)?;
    let reference_costs = tree.stage_costs(&reference.controls)?;
    let feedback = GridFeedback::new(table, n_mpc)?;
    let ensemble =
        run_algorithm1(model, &feedback, &DiscreteDistribution::point_mass(x0), steps, usize::MAX);
    Ok(overtaking_margin(&reference_costs[..steps], &ensemble.expected_costs, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_cost_fits_exactly() {
        let s = PerformanceSeries::from_expected_costs(&[2.5; 60], 2.0);
        let (slope, r2) = linear_growth_check(&s, 20).unwrap();
        assert!((slope - 2.5).abs() < 1e-12);
        assert_eq!(r2, 1.0);
        assert!(linear_growth_check(&s, 31).is_err());
    }

    #[test]
    fn self_comparison_margin_is_delta_times_k() {
        let l = [5.0, 3.0, 2.0];
        assert_eq!(overtaking_margin(&l, &l, 0.5), vec![0.5, 1.0, 1.5]);
    }

    #[test]
    fn report_orders_and_compares_horizons() {
        let a = PerformanceSeries::from_expected_costs(&[12.0; 40], 10.0);
        let b = PerformanceSeries::from_expected_costs(&[11.0; 40], 10.0);
        let r = averaged_performance(&[(5, &b), (3, &a)], 10.0, 20).unwrap();
        assert_eq!(r.horizons[0].horizon, 3);
        assert!((r.horizons[0].delta_estimate - 2.0).abs() < 1e-12);
        assert!(r.delta_strictly_decreasing());
        assert!(r.horizons.iter().all(HorizonPerformance::operates_optimally));
    }

    #[test]
    fn stationary_start_has_no_transient() {
        let s = PerformanceSeries::from_expected_costs(&[9.5; 50], 9.5);
        assert_eq!(optimal_operation_slack(&s), 0.0);
        let r = averaged_performance(&[(1, &s)], 9.5, 20).unwrap();
        assert_eq!(r.horizons[0].delta_estimate, 0.0);
    }
}
