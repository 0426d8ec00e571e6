//! Stochastic economic MPC for systems driven by finite-support disturbances.
//!
//! The crate solves the finite-horizon stochastic optimal control problem in
//! two independent ways, exactly on a disturbance-history scenario tree
//! ([`ocp::solve`]) and by dynamic programming on an interpolated state grid
//! ([`dp::backward_induction`]). It then runs receding-horizon control on
//! top of them, both on sampled realizations ([`mpc::run_algorithm2`],
//! [`mpc::monte_carlo`]) and by exact propagation of the closed-loop state law
//! ([`mpc::run_algorithm1`]). The [`turnpike`] and [`performance`] modules turn
//! the resulting laws and cost series into measurable diagnostics.
//!
//! Everything here is `no_std` + `alloc`; IO, configuration and parallel
//! execution live in the `smpc` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod distribution;
pub mod dp;
pub mod error;
pub mod model;
pub mod mpc;
pub mod ocp;
pub mod performance;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tree;
pub mod turnpike;

mod lbfgs;

pub use distribution::{Atom, DiscreteDistribution};
pub use dp::{backward_induction, Decision, ValueTable};
pub use error::{Error, Result};
pub use model::{
    make_paper_example, ControlSystem, Interval, PaperExample, StateControlAtom,
    StationaryEstimate, SystemModel,
};
pub use mpc::{
    ClosedLoopTrace, EnsembleTrace, GridFeedback, PerformanceSeries, Policy, StateFeedback,
};
pub use ocp::{solve, OcpSolution, SolveOptions};
pub use tree::{build_tree, ControlTree, InitialState, ScenarioTree};
pub use turnpike::{wasserstein1, TurnpikeProfile};
