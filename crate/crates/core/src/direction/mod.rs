//! The per-iteration direction subproblem.
//!
//! The update direction is `d = -(sum_i lambda_i grad F_i + nu(lambda) grad q)`,
//! where `nu(lambda) = max(sum_i lambda_i pi_i, 0)` is the closed-form multiplier
//! of the constraint `<grad q, d> <= -phi` and the weights come from the dual
//! problem in [`qp`].

mod qp;
mod simplex;

use serde::{Deserialize, Serialize};

pub use qp::{mgda_direction, solve_dual_qp, solve_dual_qp_gram, GramData, MgdaSolution, QpSolution};
pub use simplex::project_simplex;

use crate::linalg;
use crate::problem::SimplexWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSolution {
    pub lambda: SimplexWeights,
    pub nu: f64,
    pub direction: Vec<f64>,
    pub dual_objective: f64,
    /// `-phi - <grad q, d>`; nonnegative when the direction is feasible.
    pub constraint_slack: f64,
}

/// `nu(lambda)`. Zero when `|grad_q| < grad_floor`.
pub fn compute_nu(lambda: &SimplexWeights, grads: &[Vec<f64>], grad_q: &[f64], phi: f64, grad_floor: f64) -> f64 {
    let qq = linalg::norm_sq(grad_q);
    if qq.sqrt() < grad_floor {
        return 0.0;
    }
    let weighted: f64 = lambda
        .as_slice()
        .iter()
        .zip(grads)
        .map(|(w, g)| w * (2.0 * phi - linalg::dot(grad_q, g)) / qq)
        .sum();
    weighted.max(0.0)
}

/// `(1 - beta) * prev + beta * current`.
pub fn momentum_update(prev: &SimplexWeights, current: &SimplexWeights, beta: f64) -> SimplexWeights {
    debug_assert!(beta > 0.0 && beta <= 1.0);
    let mixed = prev
        .as_slice()
        .iter()
        .zip(current.as_slice())
        .map(|(p, c)| (1.0 - beta) * p + beta * c)
        .collect();
    SimplexWeights::from_raw(mixed)
}

/// Builds the direction for fixed weights. When `|grad_q| < grad_floor` the
/// constraint is dropped (`nu = 0`, `phi = 0`).
pub fn assemble_direction(
    lambda: &SimplexWeights,
    grads: &[Vec<f64>],
    grad_q: &[f64],
    phi: f64,
    grad_floor: f64,
) -> DirectionSolution {
    let degenerate = linalg::norm(grad_q) < grad_floor;
    let phi = if degenerate { 0.0 } else { phi };
    let nu = compute_nu(lambda, grads, grad_q, phi, grad_floor);
    let mut combined = vec![0.0; grad_q.len()];
    for (w, g) in lambda.as_slice().iter().zip(grads) {
        linalg::axpy(*w, g, &mut combined);
    }
    linalg::axpy(nu, grad_q, &mut combined);
    let direction: Vec<f64> = combined.iter().map(|v| -v).collect();
    let dual_objective = 0.5 * linalg::norm_sq(&combined) - nu * phi;
    let constraint_slack = -phi - linalg::dot(grad_q, &direction);
    DirectionSolution {
        lambda: lambda.clone(),
        nu,
        direction,
        dual_objective,
        constraint_slack,
    }
}
