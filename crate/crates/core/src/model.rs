//! Controlled stochastic systems `x⁺ = f(x, u, w)` with pointwise cost `g(x, u)`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Dynamics and pointwise stage cost of a scalar system.
///
/// Implementations must be pure: identical inputs give bit-identical outputs.
/// The optional partial derivatives enable exact reverse-mode gradients on
/// scenario trees; without them gradients fall back to central differences.
pub trait ControlSystem: fmt::Debug + Send + Sync {
    fn dynamics(&self, state: f64, control: f64, noise: f64) -> f64;

    fn stage_cost(&self, state: f64, control: f64) -> f64;

    /// `(∂f/∂x, ∂f/∂u)` at `(state, control, noise)`.
    fn dynamics_partials(&self, _state: f64, _control: f64, _noise: f64) -> Option<(f64, f64)> {
        None
    }

    /// `(∂g/∂x, ∂g/∂u)` at `(state, control)`.
    fn stage_cost_partials(&self, _state: f64, _control: f64) -> Option<(f64, f64)> {
        None
    }
}

/// `x⁺ = (u − x)² + w`, `g(x, u) = q·x² + r·u²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperExample {
    pub state_weight: f64,
    pub control_weight: f64,
}

impl ControlSystem for PaperExample {
    fn dynamics(&self, state: f64, control: f64, noise: f64) -> f64 {
        let d = control - state;
        d * d + noise
    }

    fn stage_cost(&self, state: f64, control: f64) -> f64 {
        self.state_weight * state * state + self.control_weight * control * control
    }

    fn dynamics_partials(&self, state: f64, control: f64, _noise: f64) -> Option<(f64, f64)> {
        let d = 2.0 * (control - state);
        Some((-d, d))
    }

    fn stage_cost_partials(&self, state: f64, control: f64) -> Option<(f64, f64)> {
        Some((2.0 * self.state_weight * state, 2.0 * self.control_weight * control))
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// The interval scaled by `factor` about its midpoint.
    pub fn widened(&self, factor: f64) -> Self {
        let mid = 0.5 * (self.lo + self.hi);
        let half = 0.5 * self.width() * factor;
        Self { lo: mid - half, hi: mid + half }
    }
}

/// One atom of a joint `(state, control)` law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateControlAtom {
    pub state: f64,
    pub control: f64,
    pub probability: f64,
}

/// A [`ControlSystem`] together with its noise law and the boxes used by the
/// numerical methods. Cheap to clone; the system itself is shared.
#[derive(Debug, Clone)]
pub struct SystemModel {
    name: String,
    system: Arc<dyn ControlSystem>,
    noise: DiscreteDistribution,
    control_bounds: Interval,
    state_domain: Interval,
}

impl SystemModel {
    /// Validates the model. The stage cost is sampled on a 41×41 grid over
    /// `state_domain × control_bounds` and must be finite everywhere there.
    pub fn new(
        name: impl Into<String>,
        system: Arc<dyn ControlSystem>,
        noise: DiscreteDistribution,
        control_bounds: Interval,
        state_domain: Interval,
    ) -> Result<Self> {
        let name = name.into();
        if (noise.total_mass() - 1.0).abs() > crate::distribution::MASS_TOL {
            return Err(Error::InvalidModel(format!("{name}: noise law does not sum to one")));
        }
        const SAMPLES: usize = 41;
        for i in 0..SAMPLES {
            let x = state_domain.lo + state_domain.width() * i as f64 / (SAMPLES - 1) as f64;
            for j in 0..SAMPLES {
                let u = control_bounds.lo + control_bounds.width() * j as f64 / (SAMPLES - 1) as f64;
                let g = system.stage_cost(x, u);
                if !g.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "{name}: stage cost is not finite at ({x}, {u})"
                    )));
                }
            }
        }
        Ok(Self { name, system, noise, control_bounds, state_domain })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn system(&self) -> &dyn ControlSystem {
        &*self.system
    }

    pub fn noise(&self) -> &DiscreteDistribution {
        &self.noise
    }

    pub fn control_bounds(&self) -> Interval {
        self.control_bounds
    }

    pub fn state_domain(&self) -> Interval {
        self.state_domain
    }

    pub fn with_control_bounds(mut self, bounds: Interval) -> Self {
        self.control_bounds = bounds;
        self
    }

    pub fn with_state_domain(mut self, domain: Interval) -> Self {
        self.state_domain = domain;
        self
    }

    #[inline]
    pub fn dynamics(&self, state: f64, control: f64, noise: f64) -> f64 {
        self.system.dynamics(state, control, noise)
    }

    #[inline]
    pub fn stage_cost(&self, state: f64, control: f64) -> f64 {
        self.system.stage_cost(state, control)
    }

    /// `ℓ(X, U) = E[g(X, U)]` for a joint law given by its atoms.
    pub fn expected_stage_cost(&self, joint: &[StateControlAtom]) -> f64 {
        let terms: alloc::vec::Vec<f64> = joint
            .iter()
            .map(|a| a.probability * self.stage_cost(a.state, a.control))
            .collect();
        pairwise_sum(&terms)
    }
}

pub const DEFAULT_CONTROL_BOUNDS: Interval = Interval { lo: -10.0, hi: 10.0 };
pub const DEFAULT_STATE_DOMAIN: Interval = Interval { lo: 0.0, hi: 12.0 };

/// The scalar benchmark `x⁺ = (u − x)² + w`, `g = q·x² + r·u²` with
/// two-point noise `w = a` w.p. `p_a`, `w = b` otherwise.
pub fn make_paper_example(
    a: f64,
    b: f64,
    p_a: f64,
    state_weight: f64,
    control_weight: f64,
) -> Result<SystemModel> {
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::InvalidModel(format!("p_a = {p_a} must lie in (0, 1)")));
    }
    if !(state_weight > 0.0 && control_weight > 0.0) {
        return Err(Error::InvalidModel("cost weights must be positive".into()));
    }
    let noise = DiscreteDistribution::new([(a, p_a), (b, 1.0 - p_a)])?;
    SystemModel::new(
        "paper_example",
        Arc::new(PaperExample { state_weight, control_weight }),
        noise,
        DEFAULT_CONTROL_BOUNDS,
        DEFAULT_STATE_DOMAIN,
    )
}

/// Where a stationary estimate was read off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryProvenance {
    pub horizon: usize,
    pub time_index: usize,
    /// Whether the tree solve behind the estimate met its gradient tolerance.
    pub solver_converged: bool,
}

/// Estimated optimal stationary state law and its stage cost `ℓ(Xˢ, Uˢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    pub state_distribution: DiscreteDistribution,
    pub stationary_cost: f64,
    /// Cross-check `V_{N+1}(x₀) − V_N(x₀)` from grid DP, when available.
    pub marginal_cost: Option<f64>,
    pub provenance: StationaryProvenance,
}

impl StationaryEstimate {
    /// Relative disagreement between the two estimators, if both exist.
    pub fn estimator_disagreement(&self) -> Option<f64> {
        self.marginal_cost
            .map(|m| (self.stationary_cost - m).abs() / self.stationary_cost.abs().max(m.abs()))
    }

    /// Warns when the estimators disagree by more than 2%.
    pub fn estimators_disagree(&self) -> bool {
        self.estimator_disagreement().is_some_and(|d| d > 0.02)
    }
}
