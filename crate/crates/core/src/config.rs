//! Solver configuration.

use serde::{Deserialize, Serialize};

use crate::error::{ForumError, Result};

/// Momentum coefficient `beta_k = (k + 1)^(-exponent)`.
///
/// For `exponent` in `(0, 1]` this is `1` at `k = 0`, strictly decreasing and
/// stays in `(0, 1]`.
pub fn beta_schedule(k: usize, exponent: f64) -> f64 {
    (k as f64 + 1.0).powf(-exponent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpConfig {
    pub max_iters: usize,
    /// Stopping threshold on the norm of the projected-gradient mapping.
    pub tolerance: f64,
    /// Constraint gradients shorter than this are treated as zero.
    pub grad_floor: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tolerance: 1e-10,
            grad_floor: 1e-12,
        }
    }
}

/// Separate upper-level step sizes for the `alpha` and `omega` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSteps {
    pub alpha: f64,
    pub omega: f64,
}

/// Optional early exit. Without it the driver runs the full iteration budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    /// Converged once both the stationarity measure and the exact constraint value drop below this.
    pub tol: f64,
    pub stall_tol: f64,
    pub stall_window: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            stall_tol: 1e-12,
            stall_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForumConfig {
    /// Upper-level iterations.
    pub iterations: usize,
    /// Lower-level gradient steps per upper-level iteration.
    pub ll_steps: usize,
    /// Upper-level step size.
    pub mu: f64,
    /// Lower-level step size.
    pub eta: f64,
    /// Constraint-decrease coefficient; the margin is `rho/2 * |grad q|^2`.
    pub rho: f64,
    pub beta_exponent: f64,
    /// Start each lower-level solve from the current `omega` instead of the initial one.
    pub warm_start: bool,
    pub block_steps: Option<BlockSteps>,
    pub seed: u64,
    pub qp: QpConfig,
    /// Compute the exact-metric columns every `metrics_stride` iterations.
    pub metrics_stride: usize,
    /// Lower-level steps used for metrics on problems without an exact solution,
    /// as a multiple of `ll_steps`.
    pub metrics_ll_factor: usize,
    pub stop: Option<StopConfig>,
}

impl Default for ForumConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            ll_steps: 50,
            mu: 0.3,
            eta: 0.05,
            rho: 0.3,
            beta_exponent: 0.75,
            warm_start: true,
            block_steps: None,
            seed: 0,
            qp: QpConfig::default(),
            metrics_stride: 1,
            metrics_ll_factor: 10,
            stop: None,
        }
    }
}

impl ForumConfig {
    /// Full validation, including `iterations >= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(ForumError::Config("iterations must be >= 1".into()));
        }
        self.validate_steps()
    }

    /// Everything except the iteration budget.
    pub fn validate_steps(&self) -> Result<()> {
        let bad = |msg: &str| Err(ForumError::Config(msg.to_string()));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be > 0");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be > 0");
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be >= 0");
        }
        if !(self.beta_exponent > 0.0 && self.beta_exponent <= 1.0) {
            return bad("beta_exponent must lie in (0, 1]");
        }
        if let Some(b) = self.block_steps {
            if !(b.alpha >= 0.0 && b.omega >= 0.0 && b.alpha.is_finite() && b.omega.is_finite()) {
                return bad("block_steps must be finite and >= 0");
            }
        }
        if self.qp.max_iters == 0
            || self.qp.tolerance.is_nan()
            || self.qp.tolerance <= 0.0
            || self.qp.grad_floor.is_nan()
            || self.qp.grad_floor < 0.0
        {
            return bad("qp needs max_iters >= 1, tolerance > 0, grad_floor >= 0");
        }
        if self.metrics_stride == 0 {
            return bad("metrics_stride must be >= 1");
        }
        if self.metrics_ll_factor == 0 {
            return bad("metrics_ll_factor must be >= 1");
        }
        Ok(())
    }

    /// `(step_alpha, step_omega)`.
    pub fn steps(&self) -> (f64, f64) {
        match self.block_steps {
            Some(b) => (b.alpha, b.omega),
            None => (self.mu, self.mu),
        }
    }
}
