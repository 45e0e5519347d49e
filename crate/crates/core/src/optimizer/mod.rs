//! Penalized normalized gradient descent over `(π, φ)`.
//!
//! The stationarity, normalization and box constraints are moved into the
//! objective as leaky-ReLU penalties with fixed large weights, and both blocks
//! of variables take fixed-length steps along their normalized gradients.

mod descend;
mod init;
mod objective;

use serde::{Deserialize, Serialize};

use crate::chain::{ModelOptions, Policy, StateDist};

pub use descend::descend;
pub use init::{
    calibrate_tau, optimize_policy, scale_tau, seed_init, threshold_policy, Checkpoint, PipelineResult, ThresholdInit,
};
pub use objective::{leaky_relu, Evaluator, Gradient, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Quadratic penalty on network load above a cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyPenalty {
    pub weight: f64,
    pub load_cap: f64,
}

impl Default for EnergyPenalty {
    fn default() -> Self {
        EnergyPenalty { weight: 1e5, load_cap: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Weights of the stationarity, policy-box, normalization and
    /// distribution-box penalties.
    pub penalty_weights: [f64; 4],
    /// Tolerances below which each penalty only leaks.
    pub tolerances: [f64; 4],
    /// Slope of the leaky ReLU on the negative side.
    pub leak: f64,
    pub alpha_pi: f64,
    pub alpha_phi: f64,
    pub max_steps: usize,
    pub energy_penalty: Option<EnergyPenalty>,
    pub grad_mode: GradMode,
    pub model: ModelOptions,
    /// Network load `N Σ π φ` the seeded initial policy is scaled to.
    pub target_load: f64,
    /// Relative multiplicative noise applied to the seeded initial policy.
    pub init_jitter: f64,
    /// Steps between the checkpoints the pipeline picks its policy from; 0
    /// keeps only the final iterate.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            penalty_weights: [1e8, 1e11, 1e10, 1e11],
            tolerances: [1e-3, 1e-6, 1e-5, 1e-6],
            leak: 1e-6,
            alpha_pi: 1e-3,
            alpha_phi: 1e-4,
            max_steps: 50_000,
            energy_penalty: None,
            grad_mode: GradMode::Analytic,
            model: ModelOptions::default(),
            target_load: 0.9,
            init_jitter: 0.0,
            checkpoint_every: 1000,
            seed: 0,
        }
    }
}

impl OptimConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail every check
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |msg: &str| Err(crate::Error::InvalidParams(msg.to_string()));
        if self.penalty_weights.iter().any(|k| !(*k >= 0.0)) {
            return bad("penalty weights must be non-negative");
        }
        if self.tolerances.iter().any(|e| !(*e >= 0.0)) {
            return bad("tolerances must be non-negative");
        }
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return bad("leaky ReLU slope must lie in (0,1)");
        }
        if !(self.alpha_pi >= 0.0 && self.alpha_phi >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        if !(self.model.q_floor > 0.0) {
            return bad("q_floor must be positive");
        }
        if !(self.target_load > 0.0) {
            return bad("target load must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub objective: f64,
    pub bound: f64,
    pub penalties: [f64; 4],
    pub ell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub records: Vec<TraceRecord>,
    /// Last iterate before clamping.
    pub raw_policy: Policy,
    /// Deployable policy: clamped to `[0,1]` with `π(0,0) = 0`.
    pub policy: Policy,
    pub dist: StateDist,
    /// Objective at the last (unclamped) iterate.
    pub last: Objective,
    /// True when the descent stopped on a zero gradient.
    pub converged: bool,
}
