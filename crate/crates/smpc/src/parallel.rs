//! Rayon drivers for the embarrassingly parallel stages.
//!
//! Every driver produces bit-identical results to its sequential counterpart:
//! work items are independent and results are collected in index order
//! before any reduction.

use rayon::prelude::*;
use smpc_core::distribution::Atom;
use smpc_core::dp::Decision;
use smpc_core::mpc::{
    aggregate_traces, propagate_atoms, run_algorithm1_with, run_algorithm2, EnsembleTrace, MonteCarloResult,
};
use smpc_core::scalar::ScalarSearch;
use smpc_core::{DiscreteDistribution, Policy, StateFeedback, SystemModel, ValueTable};

const ATOM_CHUNK: usize = 2048;

/// Runs `f` on a pool of `workers` threads (0: the global pool).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}

pub fn backward_induction(
    model: &SystemModel,
    grid_size: usize,
    horizon: usize,
    search: ScalarSearch,
) -> smpc_core::Result<ValueTable> {
    let mut table = ValueTable::empty(model, grid_size, search)?;
    for _ in 0..horizon {
        let stage: Vec<Decision> = (0..grid_size).into_par_iter().map(|i| table.solve_node(i)).collect();
        table.push_stage(&stage);
    }
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    model: &SystemModel,
    policy: &(impl Policy + ?Sized),
    x0: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    stationary_cost: f64,
    retain_traces: bool,
) -> MonteCarloResult {
    let traces = (0..paths as u64)
        .into_par_iter()
        .map(|p| run_algorithm2(model, policy, x0, steps, seed, p))
        .collect();
    aggregate_traces(traces, stationary_cost, retain_traces)
}

pub fn run_algorithm1(
    model: &SystemModel,
    feedback: &(impl StateFeedback + ?Sized),
    x0: &DiscreteDistribution,
    steps: usize,
    support_cap: usize,
) -> EnsembleTrace {
    run_algorithm1_with(model, x0, steps, support_cap, |atoms: &[Atom]| {
        let parts: Vec<(Vec<f64>, Vec<(f64, f64)>)> =
            atoms.par_chunks(ATOM_CHUNK).map(|c| propagate_atoms(model, feedback, c)).collect();
        let mut terms = Vec::with_capacity(atoms.len());
        let mut successors = Vec::with_capacity(atoms.len() * model.noise().len());
        for (t, s) in parts {
            terms.extend(t);
            successors.extend(s);
        }
        (terms, successors)
    })
}
