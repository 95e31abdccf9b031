//! Hypergradient baselines: MGDA over exact or unrolled hypergradients.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ForumConfig;
use crate::direction::mgda_direction;
use crate::driver::{IterateRecord, RunOutput, StopVerdict, Trace};
use crate::error::{ForumError, Result};
use crate::linalg;
use crate::lower_level::exact_constraint;
use crate::problem::{expect_len, DecisionPoint, Problem, SimplexWeights};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomlMode {
    /// Hypergradients through the exact solution and its Jacobian.
    Exact,
    /// Reverse-mode differentiation through `T` lower-level gradient steps.
    Unrolled,
}

/// `dF_i(alpha, omega(alpha)) / d alpha` for every objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypergradients {
    pub per_objective: Vec<Vec<f64>>,
}

/// Checks the oracles a mode needs before any compute.
pub fn require_capabilities(problem: &dyn Problem, mode: MomlMode) -> Result<()> {
    let caps = problem.capabilities();
    match mode {
        MomlMode::Exact => {
            if !caps.exact_solution {
                return Err(ForumError::capability(problem.name(), "exact_ll_solution"));
            }
            if !caps.solution_jacobian {
                return Err(ForumError::capability(problem.name(), "ll_solution_jacobian"));
            }
        }
        MomlMode::Unrolled => {
            if !caps.hvp {
                return Err(ForumError::capability(problem.name(), "ll_hvp"));
            }
        }
    }
    Ok(())
}

/// `grad_alpha F_i + J^T grad_omega F_i` at `(alpha, omega*(alpha))`.
pub fn exact_hypergradients(problem: &dyn Problem, alpha: &[f64]) -> Result<Hypergradients> {
    require_capabilities(problem, MomlMode::Exact)?;
    let dims = problem.dims();
    expect_len("alpha", alpha, dims.n)?;
    let omega = problem
        .exact_ll_solution(alpha)
        .ok_or_else(|| ForumError::capability(problem.name(), "exact_ll_solution"))?;
    let jac = problem
        .ll_solution_jacobian(alpha)
        .ok_or_else(|| ForumError::capability(problem.name(), "ll_solution_jacobian"))?;
    let per_objective = (0..dims.m)
        .map(|i| {
            let g = problem.ul_grad(i, alpha, &omega);
            expect_len("ul_grad", &g, dims.z_len())?;
            let gw = nalgebra::DVector::from_column_slice(&g[dims.n..]);
            let chain = jac.tr_mul(&gw);
            Ok(g[..dims.n].iter().zip(chain.iter()).map(|(a, c)| a + c).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Hypergradients { per_objective })
}

/// Hypergradients of `F_i(alpha, omega^T(alpha))` where `omega^T` comes from
/// `T` gradient steps of size `eta` started at `omega_init`.
pub fn unrolled_hypergradients(
    problem: &dyn Problem,
    alpha: &[f64],
    omega_init: &[f64],
    steps: usize,
    eta: f64,
) -> Result<Hypergradients> {
    unrolled_hypergradients_tracked(problem, alpha, omega_init, steps, eta, &Workspace::new()).map(|(h, _)| h)
}

/// As [`unrolled_hypergradients`], also returning `omega^T`.
pub fn unrolled_hypergradients_tracked(
    problem: &dyn Problem,
    alpha: &[f64],
    omega_init: &[f64],
    steps: usize,
    eta: f64,
    ws: &Workspace,
) -> Result<(Hypergradients, Vec<f64>)> {
    require_capabilities(problem, MomlMode::Unrolled)?;
    let dims = problem.dims();
    expect_len("alpha", alpha, dims.n)?;
    expect_len("omega_init", omega_init, dims.p)?;

    // Forward pass keeps all T + 1 iterates.
    let mut trajectory: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let _traj = ws.hold((steps + 1) * dims.p);
    trajectory.push(omega_init.to_vec());
    for t in 0..steps {
        let prev = &trajectory[t];
        let g = problem.ll_grad_omega(alpha, prev);
        expect_len("ll_grad_omega", &g, dims.p)?;
        let mut next = prev.clone();
        linalg::axpy(-eta, &g, &mut next);
        if !linalg::all_finite(&next) {
            return Err(ForumError::LowerLevelDivergence { step: t + 1 });
        }
        trajectory.push(next);
    }
    let omega_t = trajectory[steps].clone();

    let _out = ws.hold(dims.m * dims.n);
    let _adjoint = ws.hold(dims.n + dims.z_len());
    let mut per_objective = Vec::with_capacity(dims.m);
    for i in 0..dims.m {
        let g = problem.ul_grad(i, alpha, &omega_t);
        expect_len("ul_grad", &g, dims.z_len())?;
        let mut g_alpha = g[..dims.n].to_vec();
        let mut g_omega = g[dims.n..].to_vec();
        for omega in trajectory[..steps].iter().rev() {
            let haw = problem
                .ll_hvp_aw(alpha, omega, &g_omega)
                .ok_or_else(|| ForumError::capability(problem.name(), "ll_hvp_aw"))?;
            expect_len("ll_hvp_aw", &haw, dims.n)?;
            let hww = problem
                .ll_hvp_ww(alpha, omega, &g_omega)
                .ok_or_else(|| ForumError::capability(problem.name(), "ll_hvp_ww"))?;
            expect_len("ll_hvp_ww", &hww, dims.p)?;
            linalg::axpy(-eta, &haw, &mut g_alpha);
            linalg::axpy(-eta, &hww, &mut g_omega);
        }
        per_objective.push(g_alpha);
    }
    Ok((Hypergradients { per_objective }, omega_t))
}

#[derive(Debug, Clone)]
pub struct MomlStep {
    /// `(alpha_{k+1}, omega_k)`: the lower-level block keeps the iterate used at step `k`.
    pub next: DecisionPoint,
    pub lambda: SimplexWeights,
    pub record: IterateRecord,
}

/// One baseline step at `z = (alpha_k, omega_{k-1})`.
///
/// The lower-level block is first replaced by `omega*(alpha_k)` (exact) or by
/// `T` warm-started gradient steps (unrolled); the record describes that point.
/// The upper-level update is `alpha += mu * d` with `d` the MGDA direction over
/// the hypergradients.
pub fn moml_step(
    problem: &dyn Problem,
    z: &DecisionPoint,
    mode: MomlMode,
    k: usize,
    cfg: &ForumConfig,
    ws: &Workspace,
) -> Result<MomlStep> {
    let dims = problem.dims();
    z.check_dims(dims)?;
    let start = Instant::now();
    ws.reset_peak();
    let (hyper, omega) = match mode {
        MomlMode::Exact => {
            let omega = problem
                .exact_ll_solution(&z.alpha)
                .ok_or_else(|| ForumError::capability(problem.name(), "exact_ll_solution"))?;
            let _omega = ws.hold(dims.p);
            let _jac = ws.hold(dims.p * dims.n);
            let _out = ws.hold(dims.m * dims.n);
            (exact_hypergradients(problem, &z.alpha)?, omega)
        }
        MomlMode::Unrolled => unrolled_hypergradients_tracked(problem, &z.alpha, &z.omega, cfg.ll_steps, cfg.eta, ws)?,
    };
    let _gram = ws.hold(dims.m * dims.m);
    let mgda = mgda_direction(&hyper.per_objective, &cfg.qp);
    let _dir = ws.hold(dims.n);

    let (step_alpha, _) = cfg.steps();
    let mut alpha = z.alpha.clone();
    linalg::axpy(step_alpha, &mgda.direction, &mut alpha);
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let direction_norm = linalg::norm(&mgda.direction);
    let record = IterateRecord {
        k,
        f_values: (0..dims.m).map(|i| problem.ul_value(i, &z.alpha, &omega)).collect(),
        q_tilde: 0.0,
        q_exact: None,
        kkt_residual: Some(direction_norm * direction_norm),
        optimality_gap: None,
        lambda_tilde: mgda.lambda.clone(),
        nu: 0.0,
        direction_norm,
        wall_time_seconds,
        workspace_floats: ws.peak(),
        approximate_metrics: false,
    };
    let next = DecisionPoint { alpha, omega };
    if !next.is_finite() {
        return Err(ForumError::Divergence {
            iteration: k,
            partial: Box::new(Trace { records: vec![record] }),
        });
    }
    Ok(MomlStep {
        next,
        lambda: mgda.lambda,
        record,
    })
}

/// Runs `cfg.iterations` baseline steps. Records use the hypergradient
/// min-norm value `|d|^2` as the stationarity column and the exact constraint
/// when available.
pub fn run_moml(problem: &dyn Problem, z0: &DecisionPoint, mode: MomlMode, cfg: &ForumConfig) -> Result<RunOutput> {
    cfg.validate_steps()?;
    require_capabilities(problem, mode)?;
    z0.check_dims(problem.dims())?;
    let ws = Workspace::new();
    let mut z = z0.clone();
    let mut lambda = SimplexWeights::uniform(problem.dims().m);
    let mut trace = Trace::default();
    for k in 0..cfg.iterations {
        let step = match moml_step(problem, &z, mode, k, cfg, &ws) {
            Ok(s) => s,
            Err(ForumError::Divergence { partial, .. }) => {
                trace.records.extend(partial.records);
                return Err(ForumError::Divergence {
                    iteration: k,
                    partial: Box::new(trace),
                });
            }
            Err(ForumError::LowerLevelDivergence { .. }) => {
                return Err(ForumError::Divergence {
                    iteration: k,
                    partial: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        let mut record = step.record;
        if k % cfg.metrics_stride == 0 || k + 1 == cfg.iterations {
            let at = DecisionPoint {
                alpha: z.alpha.clone(),
                omega: step.next.omega.clone(),
            };
            if problem.capabilities().exact_solution {
                record.q_exact = Some(exact_constraint(problem, &at)?.q);
            }
            record.optimality_gap = problem.optimality_gap(&at.alpha, &at.omega);
        }
        trace.records.push(record);
        z = step.next;
        lambda = step.lambda;
    }
    // The returned point pairs the final alpha with its own lower-level iterate.
    if let MomlMode::Exact = mode {
        if let Some(w) = problem.exact_ll_solution(&z.alpha) {
            z.omega = w;
        }
    }
    Ok(RunOutput {
        final_point: z,
        final_lambda: lambda,
        trace,
        verdict: StopVerdict::Continue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{QuadraticSpec, RandomQuadratic, SyntheticMoblo};

    #[test]
    fn synthetic_exact_hypergradients() {
        for a in [-1.0, 0.0, 1.0, 1.7, 4.0] {
            let h = exact_hypergradients(&SyntheticMoblo, &[a]).unwrap();
            assert!((h.per_objective[0][0] - 2.0 * (a - 1.0)).abs() < 1e-12);
            assert!((h.per_objective[1][0] - 2.0 * (a - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_unroll_is_partial_gradient() {
        let p = SyntheticMoblo;
        let h = unrolled_hypergradients(&p, &[0.7], &[0.0, 3.0], 0, 0.05).unwrap();
        assert_eq!(h.per_objective[0], vec![p.ul_grad(0, &[0.7], &[0.0, 3.0])[0]]);
    }

    #[test]
    fn unrolled_gap_contracts_by_point_nine() {
        let p = SyntheticMoblo;
        let exact = exact_hypergradients(&p, &[0.5]).unwrap().per_objective[0][0];
        // Started at omega*(alpha), the gap is exactly 2 (1 - alpha) 0.9^T; elsewhere 0.81^T terms mix in.
        let gap = |t| {
            (unrolled_hypergradients(&p, &[0.5], &[0.5, 0.5], t, 0.05)
                .unwrap()
                .per_objective[0][0]
                - exact)
                .abs()
        };
        for t in 0..30 {
            assert!((gap(t + 1) / gap(t) - 0.9).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn unrolled_converges_on_quadratics() {
        let q = RandomQuadratic::random(QuadraticSpec {
            seed: 4,
            n: 3,
            p: 5,
            m: 2,
        });
        let eta = 1.0 / q.assumption_constants().unwrap().ll_lipschitz;
        let alpha = [0.3, -0.2, 1.0];
        let exact = exact_hypergradients(&q, &alpha).unwrap();
        let err = |t| {
            let h = unrolled_hypergradients(&q, &alpha, &[0.0; 5], t, eta).unwrap();
            linalg::norm(&linalg::sub(&h.per_objective[0], &exact.per_objective[0]))
        };
        let (e10, e20, e40) = (err(10), err(20), err(40));
        assert!(e20 < e10 && e40 < e20);
        assert!(e40 / e20 < e20 / e10 * 1.01 + 1e-12);
    }

    #[test]
    fn moml_step_examples() {
        let p = SyntheticMoblo;
        let cfg = ForumConfig::default();
        let ws = Workspace::new();
        let at = |a: f64| DecisionPoint::new(vec![a], vec![a, a]).unwrap();
        let s = moml_step(&p, &at(1.4), MomlMode::Exact, 0, &cfg, &ws).unwrap();
        assert!((s.next.alpha[0] - 1.4).abs() < 1e-9);
        let s = moml_step(&p, &at(0.0), MomlMode::Exact, 0, &cfg, &ws).unwrap();
        assert!((s.next.alpha[0] - 0.6).abs() < 1e-9);
        let s = moml_step(&p, &at(3.0), MomlMode::Exact, 0, &cfg, &ws).unwrap();
        assert!(s.next.alpha[0] < 3.0);
    }

    #[test]
    fn missing_oracles_are_capability_errors() {
        let h = crate::problems::Hyperclean::generate(crate::problems::HypercleanSpec {
            train_size: 6,
            val_size: 3,
            test_size: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            exact_hypergradients(&h, &[0.0; 12]),
            Err(ForumError::Capability { .. })
        ));
    }
}
