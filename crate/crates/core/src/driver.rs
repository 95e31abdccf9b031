//! The outer loop: lower-level solve, constraint, weights, direction, update.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{beta_schedule, ForumConfig, StopConfig};
use crate::direction::{assemble_direction, momentum_update, solve_dual_qp};
use crate::error::{ForumError, Result};
use crate::linalg;
use crate::lower_level::{constraint_eval_tracked, exact_constraint, solve_ll, solve_ll_tracked};
use crate::problem::{expect_len, DecisionPoint, Problem, SimplexWeights};
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    /// `F_i(z_k)` for every objective.
    pub f_values: Vec<f64>,
    pub q_tilde: f64,
    pub q_exact: Option<f64>,
    /// `|sum_i lambda_tilde_i grad F_i + nu grad q|^2`.
    pub kkt_residual: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub lambda_tilde: SimplexWeights,
    pub nu: f64,
    pub direction_norm: f64,
    /// Step time only; metric evaluation is excluded.
    pub wall_time_seconds: f64,
    /// Peak workspace floats held during the step.
    pub workspace_floats: usize,
    /// Set when `q_exact` and `kkt_residual` come from a longer lower-level solve
    /// instead of the exact solution.
    pub approximate_metrics: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<IterateRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Largest recorded `q_exact`, for checking a boundedness assumption after the fact.
    pub fn max_q_exact(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.q_exact).reduce(f64::max)
    }

    pub fn total_wall_time(&self) -> f64 {
        self.records.iter().map(|r| r.wall_time_seconds).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopVerdict {
    Continue,
    Converged,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub final_point: DecisionPoint,
    pub final_lambda: SimplexWeights,
    pub trace: Trace,
    /// `Continue` when the iteration budget ran out.
    pub verdict: StopVerdict,
}

/// Result of one step; the record has no metric columns yet.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub next: DecisionPoint,
    pub lambda_tilde: SimplexWeights,
    pub record: IterateRecord,
    /// Quantities at `z_k` reused by the metric pass.
    pub grads: Vec<Vec<f64>>,
    pub omega_t: Vec<f64>,
}

/// One iteration at `z`. `omega0` is the cold-start lower-level initialization.
///
/// The step's error is `Divergence` (with an empty partial trace) when `z_{k+1}`
/// is non-finite, or `LowerLevelDivergence` from the lower-level solve.
pub fn forum_step(
    problem: &dyn Problem,
    z: &DecisionPoint,
    lambda_prev: &SimplexWeights,
    k: usize,
    cfg: &ForumConfig,
    omega0: &[f64],
    ws: &Workspace,
) -> Result<StepOutput> {
    let dims = problem.dims();
    z.check_dims(dims)?;
    let start = Instant::now();
    ws.reset_peak();

    let init = if cfg.warm_start { &z.omega[..] } else { omega0 };
    let omega_t = solve_ll_tracked(problem, &z.alpha, init, cfg.ll_steps, cfg.eta, ws)?;
    let constraint = constraint_eval_tracked(problem, z, omega_t, cfg.rho, ws)?;
    let _gq = ws.hold(constraint.grad_q_tilde.len());

    let grads: Vec<Vec<f64>> = (0..dims.m)
        .map(|i| {
            let g = problem.ul_grad(i, &z.alpha, &z.omega);
            expect_len("ul_grad", &g, dims.z_len()).map(|_| g)
        })
        .collect::<Result<_>>()?;
    let _grads = ws.hold(dims.m * dims.z_len());
    let _gram = ws.hold((dims.m + 1) * (dims.m + 1));

    let qp = solve_dual_qp(&grads, &constraint.grad_q_tilde, constraint.phi, &cfg.qp);
    if !qp.converged {
        log::debug!("k = {k}: direction subproblem hit max_iters");
    }
    let lambda_tilde = momentum_update(lambda_prev, &qp.lambda, beta_schedule(k, cfg.beta_exponent));
    let dir = assemble_direction(
        &lambda_tilde,
        &grads,
        &constraint.grad_q_tilde,
        constraint.phi,
        cfg.qp.grad_floor,
    );
    let _dir = ws.hold(dir.direction.len());

    let mut next = z.clone();
    let (step_alpha, step_omega) = cfg.steps();
    next.step(&dir.direction, step_alpha, step_omega);
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let record = IterateRecord {
        k,
        f_values: (0..dims.m).map(|i| problem.ul_value(i, &z.alpha, &z.omega)).collect(),
        q_tilde: constraint.q_tilde,
        q_exact: None,
        kkt_residual: None,
        optimality_gap: None,
        lambda_tilde: lambda_tilde.clone(),
        nu: dir.nu,
        direction_norm: linalg::norm(&dir.direction),
        wall_time_seconds,
        workspace_floats: ws.peak(),
        approximate_metrics: false,
    };
    if !next.is_finite() {
        return Err(ForumError::Divergence {
            iteration: k,
            partial: Box::new(Trace { records: vec![record] }),
        });
    }
    Ok(StepOutput {
        next,
        lambda_tilde,
        record,
        grads,
        omega_t: constraint.omega_t,
    })
}

/// `|sum_i lambda_i grad F_i + nu grad q|^2`.
pub fn kkt_residual(lambda: &SimplexWeights, nu: f64, grads: &[Vec<f64>], grad_q: &[f64]) -> f64 {
    let mut combined = linalg::scale(nu, grad_q);
    for (w, g) in lambda.as_slice().iter().zip(grads) {
        linalg::axpy(*w, g, &mut combined);
    }
    linalg::norm_sq(&combined)
}

/// Converged when the newest record has exact `kkt_residual` and `q_exact`
/// below `tol`; stalled when the last `stall_window` records all have
/// `direction_norm < stall_tol`.
pub fn stopping_check(records: &[IterateRecord], cfg: &StopConfig) -> StopVerdict {
    let Some(last) = records.last() else {
        return StopVerdict::Continue;
    };
    if !last.approximate_metrics {
        if let (Some(kkt), Some(q)) = (last.kkt_residual, last.q_exact) {
            if kkt < cfg.tol && q < cfg.tol {
                return StopVerdict::Converged;
            }
        }
    }
    if cfg.stall_window > 0
        && records.len() >= cfg.stall_window
        && records[records.len() - cfg.stall_window..]
            .iter()
            .all(|r| r.direction_norm < cfg.stall_tol)
    {
        return StopVerdict::Stalled;
    }
    StopVerdict::Continue
}

/// Fills the metric columns of `record` for the point `z` it describes.
pub(crate) fn fill_metrics(
    problem: &dyn Problem,
    z: &DecisionPoint,
    record: &mut IterateRecord,
    grads: &[Vec<f64>],
    omega_t: &[f64],
    cfg: &ForumConfig,
) -> Result<()> {
    let caps = problem.capabilities();
    let (q, grad_q) = if caps.exact_solution {
        let ex = exact_constraint(problem, z)?;
        (ex.q, ex.grad_q)
    } else {
        // Continue from omega_t up to T_eval = factor * max(T, 1) total steps.
        let extra = cfg.metrics_ll_factor * cfg.ll_steps.max(1) - cfg.ll_steps;
        let omega_eval = solve_ll(problem, &z.alpha, omega_t, extra, cfg.eta)?;
        let ev = crate::lower_level::constraint_eval(problem, z, omega_eval, 0.0)?;
        record.approximate_metrics = true;
        (ev.q_tilde, ev.grad_q_tilde)
    };
    record.q_exact = Some(q);
    record.kkt_residual = Some(kkt_residual(&record.lambda_tilde, record.nu, grads, &grad_q));
    record.optimality_gap = problem.optimality_gap(&z.alpha, &z.omega);
    Ok(())
}

/// Runs `cfg.iterations` steps from `z0` (fewer when `cfg.stop` triggers).
///
/// Divergence is reported as [`ForumError::Divergence`] carrying every record
/// produced so far.
pub fn run_forum(problem: &dyn Problem, z0: &DecisionPoint, cfg: &ForumConfig) -> Result<RunOutput> {
    cfg.validate_steps()?;
    let dims = problem.dims();
    z0.check_dims(dims)?;
    let ws = Workspace::new();
    let mut z = z0.clone();
    let mut lambda = SimplexWeights::uniform(dims.m);
    let mut trace = Trace::default();
    let mut verdict = StopVerdict::Continue;

    for k in 0..cfg.iterations {
        let step = match forum_step(problem, &z, &lambda, k, cfg, &z0.omega, &ws) {
            Ok(s) => s,
            Err(ForumError::Divergence { partial, .. }) => {
                trace.records.extend(partial.records);
                return Err(ForumError::Divergence {
                    iteration: k,
                    partial: Box::new(trace),
                });
            }
            Err(ForumError::LowerLevelDivergence { step }) => {
                log::warn!("lower-level solve diverged at step {step} of iteration {k}");
                return Err(ForumError::Divergence {
                    iteration: k,
                    partial: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        let mut record = step.record;
        if k % cfg.metrics_stride == 0 || k + 1 == cfg.iterations {
            fill_metrics(problem, &z, &mut record, &step.grads, &step.omega_t, cfg)?;
        }
        trace.records.push(record);
        z = step.next;
        lambda = step.lambda_tilde;
        if let Some(stop) = &cfg.stop {
            verdict = stopping_check(&trace.records, stop);
            if verdict != StopVerdict::Continue {
                break;
            }
        }
    }
    Ok(RunOutput {
        final_point: z,
        final_lambda: lambda,
        trace,
        verdict,
    })
}
