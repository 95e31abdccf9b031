//! Lower-level solve and the value-function constraint.
//!
//! The constraint is `q(z) = f(z) - f(alpha, omega*(alpha)) <= 0`. Its gradient
//! needs no Jacobian of `omega*`: the omega-derivative of the optimal value
//! vanishes, so `grad q = grad_z f(z) - (grad_alpha f(alpha, omega*), 0)`.
//! The approximate form replaces `omega*` with `T` gradient steps.

use serde::{Deserialize, Serialize};

use crate::error::{ForumError, Result};
use crate::linalg;
use crate::problem::{expect_len, DecisionPoint, Problem};
use crate::workspace::Workspace;

/// Tolerance below zero for `q_tilde` before it is reported as a lower-level divergence.
pub const NEGATIVE_Q_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEval {
    /// Lower-level iterate after `T` steps.
    pub omega_t: Vec<f64>,
    pub q_tilde: f64,
    pub grad_q_tilde: Vec<f64>,
    /// Decrease margin `rho/2 * |grad q_tilde|^2`.
    pub phi: f64,
}

impl ConstraintEval {
    /// True when `q_tilde` is negative beyond [`NEGATIVE_Q_TOL`], which means the
    /// lower-level iterate ended above `f(z)`.
    pub fn lower_level_overshoot(&self) -> bool {
        self.q_tilde < -NEGATIVE_Q_TOL
    }
}

/// Exactly `steps` iterations of `omega <- omega - eta * grad_omega f(alpha, omega)`.
pub fn solve_ll(problem: &dyn Problem, alpha: &[f64], omega_init: &[f64], steps: usize, eta: f64) -> Result<Vec<f64>> {
    solve_ll_tracked(problem, alpha, omega_init, steps, eta, &Workspace::new())
}

pub fn solve_ll_tracked(
    problem: &dyn Problem,
    alpha: &[f64],
    omega_init: &[f64],
    steps: usize,
    eta: f64,
    ws: &Workspace,
) -> Result<Vec<f64>> {
    let p = problem.dims().p;
    expect_len("omega_init", omega_init, p)?;
    let mut omega = omega_init.to_vec();
    let _iterate = ws.hold(omega.len());
    for t in 0..steps {
        let g = problem.ll_grad_omega(alpha, &omega);
        let _g = ws.hold(g.len());
        expect_len("ll_grad_omega", &g, p)?;
        linalg::axpy(-eta, &g, &mut omega);
        if !linalg::all_finite(&omega) {
            return Err(ForumError::LowerLevelDivergence { step: t + 1 });
        }
    }
    Ok(omega)
}

/// `q_tilde`, its gradient and the margin `phi` at `z` given the lower-level iterate `omega_t`.
pub fn constraint_eval(
    problem: &dyn Problem,
    z: &DecisionPoint,
    omega_t: Vec<f64>,
    rho: f64,
) -> Result<ConstraintEval> {
    constraint_eval_tracked(problem, z, omega_t, rho, &Workspace::new())
}

pub fn constraint_eval_tracked(
    problem: &dyn Problem,
    z: &DecisionPoint,
    omega_t: Vec<f64>,
    rho: f64,
    ws: &Workspace,
) -> Result<ConstraintEval> {
    let (q_tilde, grad_q_tilde) = value_gap(problem, z, &omega_t, ws)?;
    if q_tilde < -NEGATIVE_Q_TOL {
        log::warn!("q_tilde = {q_tilde:e} is below -{NEGATIVE_Q_TOL:e}; the lower-level solve overshot f(z)");
    }
    let phi = 0.5 * rho * linalg::norm_sq(&grad_q_tilde);
    Ok(ConstraintEval {
        omega_t,
        q_tilde,
        grad_q_tilde,
        phi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactConstraint {
    pub q: f64,
    pub grad_q: Vec<f64>,
}

/// `q(z)` and `grad q(z)` using the exact lower-level solution.
pub fn exact_constraint(problem: &dyn Problem, z: &DecisionPoint) -> Result<ExactConstraint> {
    let omega_star = problem
        .exact_ll_solution(&z.alpha)
        .ok_or_else(|| ForumError::capability(problem.name(), "exact_ll_solution"))?;
    expect_len("exact_ll_solution", &omega_star, problem.dims().p)?;
    let (q, grad_q) = value_gap(problem, z, &omega_star, &Workspace::new())?;
    Ok(ExactConstraint { q, grad_q })
}

fn value_gap(problem: &dyn Problem, z: &DecisionPoint, omega_ref: &[f64], ws: &Workspace) -> Result<(f64, Vec<f64>)> {
    let dims = problem.dims();
    let q = problem.ll_value(&z.alpha, &z.omega) - problem.ll_value(&z.alpha, omega_ref);
    let mut grad = problem.ll_grad(&z.alpha, &z.omega);
    let _grad = ws.hold(grad.len());
    expect_len("ll_grad", &grad, dims.z_len())?;
    let ga = problem.ll_grad_alpha(&z.alpha, omega_ref);
    let _ga = ws.hold(ga.len());
    expect_len("ll_grad_alpha", &ga, dims.n)?;
    for (g, a) in grad[..dims.n].iter_mut().zip(&ga) {
        *g -= a;
    }
    Ok((q, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientErrorRow {
    pub ll_steps: usize,
    /// `|grad q_tilde(z; T) - grad q(z)|`.
    pub measured: f64,
    /// `L_f (1 - c eta / 2)^T |omega^0 - omega*|`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientErrorReport {
    pub rows: Vec<GradientErrorRow>,
    pub holds: bool,
}

/// Slack added to the bound when deciding whether it holds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Tabulates the approximation error of `grad q_tilde` against its geometric
/// bound for `T = 0..=t_max`, starting the lower-level solve at `z.omega`.
pub fn gradient_error_bound_check(
    problem: &dyn Problem,
    z: &DecisionPoint,
    eta: f64,
    t_max: usize,
) -> Result<GradientErrorReport> {
    let constants = problem
        .assumption_constants()
        .ok_or_else(|| ForumError::capability(problem.name(), "assumption_constants"))?;
    let c = constants.ll_strong_convexity;
    let l_f = constants.ll_lipschitz;
    if !(eta > 0.0 && eta <= 2.0 / (l_f + c)) {
        return Err(ForumError::Config(format!(
            "eta = {eta} violates eta <= 2/(L_f + c) = {}",
            2.0 / (l_f + c)
        )));
    }
    let exact = exact_constraint(problem, z)?;
    let omega_star = problem
        .exact_ll_solution(&z.alpha)
        .ok_or_else(|| ForumError::capability(problem.name(), "exact_ll_solution"))?;
    let init_dist = linalg::norm(&linalg::sub(&z.omega, &omega_star));
    let rate = 1.0 - c * eta / 2.0;

    let mut rows = Vec::with_capacity(t_max + 1);
    let mut omega = z.omega.clone();
    for t in 0..=t_max {
        if t > 0 {
            omega = solve_ll(problem, &z.alpha, &omega, 1, eta)?;
        }
        let approx = constraint_eval(problem, z, omega.clone(), 0.0)?;
        let measured = linalg::norm(&linalg::sub(&approx.grad_q_tilde, &exact.grad_q));
        let bound = l_f * rate.powi(t as i32) * init_dist;
        rows.push(GradientErrorRow {
            ll_steps: t,
            measured,
            bound,
        });
    }
    let holds = rows.iter().all(|r| r.measured <= r.bound + BOUND_SLACK);
    Ok(GradientErrorReport { rows, holds })
}
