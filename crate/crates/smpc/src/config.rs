//! Experiment configuration (one JSON document per experiment).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smpc_core::model::{make_paper_example, Interval};
use smpc_core::scalar::ScalarSearch;
use smpc_core::tree::DEFAULT_NODE_CAP;
use smpc_core::{SolveOptions, SystemModel};

/// A rejected configuration, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Built-in model registry, selected by the `model` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    PaperExample {
        a: f64,
        b: f64,
        p_a: f64,
        state_weight: f64,
        control_weight: f64,
        #[serde(default = "default_control_bounds")]
        control_bounds: [f64; 2],
        #[serde(default = "default_state_domain")]
        state_domain: [f64; 2],
    },
}

fn default_control_bounds() -> [f64; 2] {
    [-10.0, 10.0]
}

fn default_state_domain() -> [f64; 2] {
    [0.0, 12.0]
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::PaperExample {
            a: 1.0,
            b: 0.25,
            p_a: 0.7,
            state_weight: 1.0,
            control_weight: 25.0,
            control_bounds: default_control_bounds(),
            state_domain: default_state_domain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub grid_size: usize,
    pub control_scan_points: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub node_cap: usize,
    /// Worker threads for parallel stages; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_size: 2001,
            control_scan_points: 201,
            grad_tol: 1e-8,
            max_iters: 500,
            node_cap: DEFAULT_NODE_CAP,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub x0: f64,
    pub horizons: Vec<usize>,
    #[serde(rename = "K_max", alias = "k_max")]
    pub k_max: usize,
    pub paths: usize,
    pub seed: u64,
    pub support_cap: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { x0: 3.0, horizons: vec![3, 4, 5], k_max: 100, paths: 1000, seed: 42, support_cap: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnpikeConfig {
    #[serde(rename = "N_long", alias = "n_long")]
    pub n_long: usize,
    pub mid_fraction: f64,
    pub thresholds: Vec<f64>,
    /// Horizons of the optimal-trajectory plots and turnpike profiles.
    pub horizons: Vec<usize>,
}

impl Default for TurnpikeConfig {
    fn default() -> Self {
        Self { n_long: 15, mid_fraction: 0.5, thresholds: vec![0.05, 0.1, 0.2], horizons: (3..=15).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerformanceConfig {
    /// Start of the slope-fit window.
    #[serde(rename = "K_min", alias = "k_min")]
    pub k_min: usize,
    /// MPC horizon of the exact-propagation and overtaking experiments.
    pub mpc_horizon: usize,
    /// Steps compared between exact propagation and Monte Carlo.
    pub equivalence_steps: usize,
    pub overtaking_steps: usize,
    pub reference_horizon: usize,
    /// Largest horizon of the tree/DP oracle comparison and DPP residuals.
    pub oracle_max_horizon: usize,
    pub dpp_states: Vec<f64>,
    /// Offset amplitude of the randomized policy.
    pub random_amplitude: f64,
}

impl Default for PerformanceConfig {
    fn default() -> Self {
        Self {
            k_min: 20,
            mpc_horizon: 5,
            equivalence_steps: 50,
            overtaking_steps: 8,
            reference_horizon: 15,
            oracle_max_horizon: 10,
            dpp_states: vec![1.0, 3.0, 5.0],
            random_amplitude: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub emit_svg: bool,
    /// Also write per-path traces (always written for single-path runs).
    pub traces: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), emit_svg: true, traces: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub turnpike: TurnpikeConfig,
    #[serde(default)]
    pub performance: PerformanceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn ensure(ok: bool, field: &str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(field, message))
    }
}

fn interval(v: [f64; 2], field: &str) -> Result<Interval, ConfigError> {
    Interval::new(v[0], v[1]).map_err(|_| ConfigError::new(field, "must be [lo, hi] with finite lo < hi"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new(json_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.build()?;
        let s = &self.solver;
        ensure(s.grid_size >= 2, "solver.grid_size", "must be at least 2")?;
        ensure(s.control_scan_points >= 2, "solver.control_scan_points", "must be at least 2")?;
        ensure(s.grad_tol > 0.0 && s.grad_tol.is_finite(), "solver.grad_tol", "must be positive")?;
        ensure(s.max_iters >= 1, "solver.max_iters", "must be at least 1")?;
        ensure(s.node_cap >= 1, "solver.node_cap", "must be at least 1")?;

        let m = &self.mpc;
        ensure(m.x0.is_finite(), "mpc.x0", "must be finite")?;
        ensure(!m.horizons.is_empty(), "mpc.horizons", "must not be empty")?;
        ensure(m.horizons.iter().all(|&n| n >= 1), "mpc.horizons", "every horizon must be at least 1")?;
        ensure(m.k_max >= 1, "mpc.K_max", "must be at least 1")?;
        ensure(m.paths >= 1, "mpc.paths", "must be at least 1")?;
        ensure(m.support_cap >= 1, "mpc.support_cap", "must be at least 1")?;

        let t = &self.turnpike;
        ensure(t.n_long >= 10, "turnpike.N_long", "must be at least 10")?;
        ensure(t.mid_fraction > 0.0 && t.mid_fraction < 1.0, "turnpike.mid_fraction", "must lie in (0, 1)")?;
        ensure(!t.thresholds.is_empty(), "turnpike.thresholds", "must not be empty")?;
        ensure(
            t.thresholds.iter().all(|&e| e > 0.0 && e.is_finite()),
            "turnpike.thresholds",
            "every threshold must be positive",
        )?;
        ensure(!t.horizons.is_empty(), "turnpike.horizons", "must not be empty")?;
        ensure(t.horizons.iter().all(|&n| n >= 1), "turnpike.horizons", "every horizon must be at least 1")?;

        let p = &self.performance;
        ensure(p.k_min >= 1, "performance.K_min", "must be at least 1")?;
        ensure(p.mpc_horizon >= 1, "performance.mpc_horizon", "must be at least 1")?;
        ensure(p.equivalence_steps >= 1, "performance.equivalence_steps", "must be at least 1")?;
        ensure(p.overtaking_steps >= 1, "performance.overtaking_steps", "must be at least 1")?;
        ensure(
            p.reference_horizon >= p.overtaking_steps + p.mpc_horizon,
            "performance.reference_horizon",
            "must be at least overtaking_steps + mpc_horizon",
        )?;
        ensure(p.oracle_max_horizon >= 1, "performance.oracle_max_horizon", "must be at least 1")?;
        ensure(p.dpp_states.iter().all(|x| x.is_finite()), "performance.dpp_states", "must be finite")?;
        ensure(
            p.random_amplitude >= 0.0 && p.random_amplitude.is_finite(),
            "performance.random_amplitude",
            "must be nonnegative",
        )?;
        Ok(())
    }

    pub fn search(&self) -> ScalarSearch {
        ScalarSearch { scan_points: self.solver.control_scan_points, ..ScalarSearch::default() }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.solver.max_iters,
            grad_tol: self.solver.grad_tol,
            node_cap: self.solver.node_cap,
            ..SolveOptions::default()
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<SystemModel, ConfigError> {
        match *self {
            ModelConfig::PaperExample { a, b, p_a, state_weight, control_weight, control_bounds, state_domain } => {
                ensure(a.is_finite() && b.is_finite(), "model.a/b", "must be finite")?;
                ensure(p_a > 0.0 && p_a < 1.0, "model.p_a", "must lie in (0, 1)")?;
                ensure(state_weight > 0.0 && state_weight.is_finite(), "model.state_weight", "must be positive")?;
                ensure(
                    control_weight > 0.0 && control_weight.is_finite(),
                    "model.control_weight",
                    "must be positive",
                )?;
                let bounds = interval(control_bounds, "model.control_bounds")?;
                let domain = interval(state_domain, "model.state_domain")?;
                let model = make_paper_example(a, b, p_a, state_weight, control_weight)
                    .map_err(|e| ConfigError::new("model", e.to_string()))?;
                Ok(model.with_control_bounds(bounds).with_state_domain(domain))
            }
        }
    }
}

/// Best-effort field name from a serde error message.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "(document)".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: &str = r#"{"model": {"model":"paper_example","a":1.0,"b":0.25,"p_a":0.7,"state_weight":1.0,"control_weight":25.0,"control_bounds":[-10,10],"state_domain":[0,12]}}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = ExperimentConfig::from_json(PAPER).unwrap();
        assert_eq!(cfg.mpc.horizons, vec![3, 4, 5]);
        assert_eq!(cfg.turnpike.horizons.len(), 13);
        let m = cfg.model.build().unwrap();
        assert_eq!(m.stage_cost(3.0, 0.0), 9.0);
    }

    #[test]
    fn rejections_name_the_field() {
        let mut cfg = ExperimentConfig::from_json(PAPER).unwrap();
        cfg.mpc.horizons.clear();
        assert_eq!(cfg.validate().unwrap_err().field, "mpc.horizons");

        let mut cfg = ExperimentConfig::default();
        cfg.mpc.paths = 0;
        assert_eq!(cfg.validate().unwrap_err().field, "mpc.paths");

        let mut cfg = ExperimentConfig::default();
        cfg.solver.grad_tol = 0.0;
        assert_eq!(cfg.validate().unwrap_err().field, "solver.grad_tol");

        let mut cfg = ExperimentConfig::default();
        let ModelConfig::PaperExample { p_a, .. } = &mut cfg.model;
        *p_a = 1.0;
        assert_eq!(cfg.validate().unwrap_err().field, "model.p_a");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = PAPER.replace(r#""p_a":0.7"#, r#""p_a":0.7,"pa":1"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(err.field, "pa");
        let err = ExperimentConfig::from_json(r#"{"mpc": {}}"#).unwrap_err();
        assert_eq!(err.field, "model");
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
