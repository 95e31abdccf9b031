use nalgebra::DMatrix;

use crate::error::{ForumError, Result};
use crate::problem::{AssumptionConstants, Capabilities, DecisionPoint, Dims, Problem};

/// Two-objective toy problem with `alpha` in R and `omega` in R^2:
///
/// ```text
/// F_1 = |omega - (1, alpha)|^2,  F_2 = |omega - (2, alpha)|^2
/// f   = |omega - (alpha, alpha)|^2
/// ```
///
/// The lower-level solution is `omega* = (alpha, alpha)` and the Pareto set is
/// `{alpha = omega_1 = omega_2 = c, c in [1, 2]}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticMoblo;

const TARGETS: [f64; 2] = [1.0, 2.0];

impl Problem for SyntheticMoblo {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn dims(&self) -> Dims {
        Dims { n: 1, p: 2, m: 2 }
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            exact_solution: true,
            solution_jacobian: true,
            hvp: true,
            constants: true,
            optimality_gap: true,
        }
    }

    fn ul_value(&self, i: usize, alpha: &[f64], omega: &[f64]) -> f64 {
        (omega[0] - TARGETS[i]).powi(2) + (omega[1] - alpha[0]).powi(2)
    }

    fn ul_grad(&self, i: usize, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let r2 = omega[1] - alpha[0];
        vec![-2.0 * r2, 2.0 * (omega[0] - TARGETS[i]), 2.0 * r2]
    }

    fn ll_value(&self, alpha: &[f64], omega: &[f64]) -> f64 {
        (omega[0] - alpha[0]).powi(2) + (omega[1] - alpha[0]).powi(2)
    }

    fn ll_grad(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let (e1, e2) = (omega[0] - alpha[0], omega[1] - alpha[0]);
        vec![-2.0 * (e1 + e2), 2.0 * e1, 2.0 * e2]
    }

    fn ll_grad_omega(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        vec![2.0 * (omega[0] - alpha[0]), 2.0 * (omega[1] - alpha[0])]
    }

    fn exact_ll_solution(&self, alpha: &[f64]) -> Option<Vec<f64>> {
        Some(vec![alpha[0], alpha[0]])
    }

    fn ll_solution_jacobian(&self, _alpha: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(2, 1, 1.0))
    }

    fn ll_hvp_ww(&self, _alpha: &[f64], _omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0 * v[0], 2.0 * v[1]])
    }

    fn ll_hvp_aw(&self, _alpha: &[f64], _omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![-2.0 * (v[0] + v[1])])
    }

    fn assumption_constants(&self) -> Option<AssumptionConstants> {
        // Hessian of f in z is 2 [[2,-1,-1],[-1,1,0],[-1,0,1]] (eigenvalues 6, 2, 0);
        // Hessian of each F_i has eigenvalues 4, 2, 0.
        Some(AssumptionConstants {
            ul_lipschitz: 4.0,
            ul_bound: None,
            ll_strong_convexity: 2.0,
            ll_lipschitz: 6.0,
        })
    }

    fn optimality_gap(&self, alpha: &[f64], omega: &[f64]) -> Option<f64> {
        Some(pareto_distance(alpha[0], omega[0], omega[1]))
    }
}

/// Euclidean distance from `z` to the synthetic problem's Pareto set.
pub fn dist_to_pareto(z: &DecisionPoint) -> Result<f64> {
    if z.n() != 1 || z.p() != 2 {
        return Err(ForumError::Dimension {
            oracle: "dist_to_pareto",
            expected: 3,
            got: z.n() + z.p(),
        });
    }
    Ok(pareto_distance(z.alpha[0], z.omega[0], z.omega[1]))
}

fn pareto_distance(a: f64, w1: f64, w2: f64) -> f64 {
    // Mean taken relative to `a` so that points on the segment map to themselves exactly.
    let c = (a + ((w1 - a) + (w2 - a)) / 3.0).clamp(1.0, 2.0);
    ((a - c).powi(2) + (w1 - c).powi(2) + (w2 - c).powi(2)).sqrt()
}
