//! The shared data model: decision points, simplex weights and the problem oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ForumError, Result};
use crate::linalg;

/// Joint variable `z = (alpha, omega)`: upper-level block `alpha` (length n)
/// and lower-level block `omega` (length p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
}

impl DecisionPoint {
    pub fn new(alpha: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if !linalg::all_finite(&alpha) || !linalg::all_finite(&omega) {
            return Err(ForumError::Config("decision point has non-finite entries".into()));
        }
        Ok(Self { alpha, omega })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            alpha: vec![0.0; dims.n],
            omega: vec![0.0; dims.p],
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        self.omega.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        linalg::concat(&self.alpha, &self.omega)
    }

    pub fn from_flat(n: usize, flat: &[f64]) -> Self {
        Self {
            alpha: flat[..n].to_vec(),
            omega: flat[n..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.alpha) && linalg::all_finite(&self.omega)
    }

    /// `alpha += step_alpha * d_alpha`, `omega += step_omega * d_omega` for a flat direction `d`.
    pub fn step(&mut self, direction: &[f64], step_alpha: f64, step_omega: f64) {
        let n = self.n();
        linalg::axpy(step_alpha, &direction[..n], &mut self.alpha);
        linalg::axpy(step_omega, &direction[n..], &mut self.omega);
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.n() != dims.n {
            return Err(ForumError::Dimension {
                oracle: "decision_point.alpha",
                expected: dims.n,
                got: self.n(),
            });
        }
        if self.p() != dims.p {
            return Err(ForumError::Dimension {
                oracle: "decision_point.omega",
                expected: dims.p,
                got: self.p(),
            });
        }
        Ok(())
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub const NONNEG_TOL: f64 = 1e-12;
    pub const SUM_TOL: f64 = 1e-10;

    /// Validating constructor. Use [`crate::direction::project_simplex`] to map
    /// arbitrary vectors onto the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(ForumError::Config("simplex weights must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -Self::NONNEG_TOL) {
            return Err(ForumError::Config(format!("negative simplex weight in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(ForumError::Config(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|w| *w >= -Self::NONNEG_TOL) && (sum - 1.0).abs() <= Self::SUM_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Upper-level dimension.
    pub n: usize,
    /// Lower-level dimension.
    pub p: usize,
    /// Number of upper-level objectives.
    pub m: usize,
}

impl Dims {
    pub fn z_len(&self) -> usize {
        self.n + self.p
    }
}

/// Smoothness and convexity constants of a problem, when analytically known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// Lipschitz constant of every upper-level gradient.
    pub ul_lipschitz: f64,
    /// Bound on upper-level values and gradient norms; `None` when unbounded.
    pub ul_bound: Option<f64>,
    /// Strong-convexity modulus of the lower-level objective in `omega`.
    pub ll_strong_convexity: f64,
    /// Lipschitz constant of the full lower-level gradient with respect to `z`.
    pub ll_lipschitz: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub exact_solution: bool,
    pub solution_jacobian: bool,
    pub hvp: bool,
    pub constants: bool,
    pub optimality_gap: bool,
}

/// Multi-objective bi-level problem exposed through first-order oracles.
///
/// All vector-valued oracles over `z` return length `n + p` with the `alpha`
/// block first. Optional oracles return `None` unless the matching flag in
/// [`Capabilities`] is set. Implementations must be deterministic and safe to
/// evaluate from several threads at once.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    /// `F_i(z)`.
    fn ul_value(&self, i: usize, alpha: &[f64], omega: &[f64]) -> f64;

    /// `grad_z F_i(z)`.
    fn ul_grad(&self, i: usize, alpha: &[f64], omega: &[f64]) -> Vec<f64>;

    /// `f(z)`.
    fn ll_value(&self, alpha: &[f64], omega: &[f64]) -> f64;

    /// `grad_z f(z)`.
    fn ll_grad(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64>;

    /// `grad_omega f(z)`. Override when the omega block is cheaper than the full gradient.
    fn ll_grad_omega(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut g = self.ll_grad(alpha, omega);
        g.drain(..alpha.len());
        g
    }

    /// `grad_alpha f(z)`.
    fn ll_grad_alpha(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut g = self.ll_grad(alpha, omega);
        g.truncate(alpha.len());
        g
    }

    /// `omega*(alpha)`, the unique lower-level minimizer.
    fn exact_ll_solution(&self, _alpha: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `d omega*/d alpha` as a p x n matrix.
    fn ll_solution_jacobian(&self, _alpha: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// `grad^2_{omega omega} f(z) v` for `v` of length p.
    fn ll_hvp_ww(&self, _alpha: &[f64], _omega: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Mixed second derivative applied to a length-p vector:
    /// `out_j = sum_k d^2 f / (d alpha_j d omega_k) v_k`, length n.
    fn ll_hvp_aw(&self, _alpha: &[f64], _omega: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn assumption_constants(&self) -> Option<AssumptionConstants> {
        None
    }

    /// Distance from `z` to the known Pareto-optimal set.
    fn optimality_gap(&self, _alpha: &[f64], _omega: &[f64]) -> Option<f64> {
        None
    }
}

pub(crate) fn expect_len(oracle: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(ForumError::Dimension {
            oracle,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}
