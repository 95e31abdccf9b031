//! The weight subproblem over the simplex.
//!
//! With `Lambda = (g_1, ..., g_m, g_q)` and `R = (lambda, gamma)` the dual is
//!
//! ```text
//! min  1/2 R^T (Lambda^T Lambda) R - gamma * phi
//! s.t. lambda in simplex, gamma >= 0, gamma >= sum_i lambda_i pi_i
//! ```
//!
//! For fixed `lambda` the optimal `gamma` is `nu(lambda) = max(pi^T lambda, 0)`,
//! so the minimizer in `lambda` is the minimizer of the substituted objective.
//! Only the `(m+1) x (m+1)` Gram matrix is touched. Up to [`EXACT_FACE_LIMIT`]
//! objectives the minimizer is found exactly by enumerating the faces of the
//! feasible polytope; beyond that, accelerated projected gradient on `R` is used.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::project_simplex_raw;
use crate::config::QpConfig;
use crate::linalg;
use crate::problem::SimplexWeights;

/// Gram matrix of the stacked gradients `(g_1, ..., g_m, g_q)` and the margin `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramData {
    /// Number of objectives.
    pub m: usize,
    /// Row-major `(m+1) x (m+1)`; the last row and column belong to `g_q`.
    pub matrix: Vec<f64>,
    pub phi: f64,
}

impl GramData {
    pub fn new(grads: &[Vec<f64>], grad_q: &[f64], phi: f64) -> Self {
        let m = grads.len();
        let k = m + 1;
        let col = |i: usize| -> &[f64] {
            if i < m {
                &grads[i]
            } else {
                grad_q
            }
        };
        let mut matrix = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = linalg::dot(col(i), col(j));
                matrix[i * k + j] = v;
                matrix[j * k + i] = v;
            }
        }
        Self { m, matrix, phi }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * (self.m + 1) + j]
    }

    pub fn grad_q_norm_sq(&self) -> f64 {
        self.entry(self.m, self.m)
    }

    /// `pi_i = (2 phi - <g_q, g_i>) / |g_q|^2`.
    pub fn pi(&self) -> Vec<f64> {
        let qq = self.grad_q_norm_sq();
        (0..self.m)
            .map(|i| (2.0 * self.phi - self.entry(self.m, i)) / qq)
            .collect()
    }

    /// `nu(lambda)`, or zero when the constraint gradient is below `grad_floor`.
    pub fn nu(&self, lambda: &[f64], grad_floor: f64) -> f64 {
        if self.degenerate(grad_floor) {
            return 0.0;
        }
        linalg::dot(&self.pi(), lambda).max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && linalg::all_finite(&self.matrix)
    }

    pub fn degenerate(&self, grad_floor: f64) -> bool {
        self.grad_q_norm_sq().sqrt() < grad_floor
    }

    /// `1/2 |sum lambda_i g_i + gamma g_q|^2 - gamma phi`.
    pub fn objective(&self, lambda: &[f64], gamma: f64) -> f64 {
        let k = self.m + 1;
        let mut r = lambda.to_vec();
        r.push(gamma);
        let mut quad = 0.0;
        for i in 0..k {
            for j in 0..k {
                quad += r[i] * self.entry(i, j) * r[j];
            }
        }
        0.5 * quad - gamma * self.phi
    }

    /// The dual objective with `nu(lambda)` substituted.
    pub fn dual_objective(&self, lambda: &[f64], grad_floor: f64) -> f64 {
        if self.degenerate(grad_floor) {
            self.objective(lambda, 0.0)
        } else {
            self.objective(lambda, self.nu(lambda, grad_floor))
        }
    }

    fn trace(&self, with_q: bool) -> f64 {
        let k = if with_q { self.m + 1 } else { self.m };
        (0..k).map(|i| self.entry(i, i)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub lambda: SimplexWeights,
    pub dual_objective: f64,
    /// False when `max_iters` ran out before the gradient-mapping norm reached the tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes the dual over the simplex. Falls back to the min-norm problem over
/// the objective gradients when `|g_q| < grad_floor`.
pub fn solve_dual_qp(grads: &[Vec<f64>], grad_q: &[f64], phi: f64, cfg: &QpConfig) -> QpSolution {
    solve_dual_qp_gram(&GramData::new(grads, grad_q, phi), cfg)
}

pub fn solve_dual_qp_gram(gram: &GramData, cfg: &QpConfig) -> QpSolution {
    let m = gram.m;
    assert!(m >= 1, "need at least one objective");
    if !gram.is_finite() {
        return unsolved(gram);
    }
    if gram.degenerate(cfg.grad_floor) {
        return min_norm_gram(gram, cfg);
    }
    if m == 1 {
        return QpSolution {
            lambda: SimplexWeights::uniform(1),
            dual_objective: gram.dual_objective(&[1.0], cfg.grad_floor),
            converged: true,
            iterations: 0,
        };
    }

    let k = m + 1;
    let hess = gram.matrix.clone();
    let mut lin = vec![0.0; k];
    lin[m] = -gram.phi;
    let pi = gram.pi();
    if m <= EXACT_FACE_LIMIT {
        if let Some((x, faces)) = solve_by_faces(&hess, &lin, m, Some(&pi)) {
            let lambda = clean_simplex(&x[..m]);
            return QpSolution {
                dual_objective: gram.dual_objective(&lambda, cfg.grad_floor),
                lambda: SimplexWeights::from_raw(lambda),
                converged: true,
                iterations: faces,
            };
        }
    }
    let lipschitz = gram.trace(true);

    let mut x0 = vec![1.0 / m as f64; m];
    x0.push(linalg::dot(&pi, &x0).max(0.0));
    let project = |v: &[f64]| project_with_multiplier(v, &pi);
    let eval = |x: &[f64]| gram.dual_objective(&x[..m], cfg.grad_floor);
    let run = accelerated_projected_gradient(&hess, &lin, x0, lipschitz, project, eval, cfg);

    let lambda = run.x[..m].to_vec();
    QpSolution {
        dual_objective: gram.dual_objective(&lambda, cfg.grad_floor),
        lambda: SimplexWeights::from_raw(lambda),
        converged: run.converged,
        iterations: run.iterations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgdaSolution {
    pub lambda: SimplexWeights,
    /// `-sum lambda_i g_i`, the negated min-norm element of the convex hull.
    pub direction: Vec<f64>,
    pub converged: bool,
}

/// Min-norm point of the convex hull of `grads`.
pub fn mgda_direction(grads: &[Vec<f64>], cfg: &QpConfig) -> MgdaSolution {
    assert!(!grads.is_empty(), "need at least one gradient");
    let len = grads[0].len();
    let gram = GramData::new(grads, &vec![0.0; len], 0.0);
    let sol = min_norm_gram(&gram, cfg);
    let mut direction = vec![0.0; len];
    for (w, g) in sol.lambda.as_slice().iter().zip(grads) {
        linalg::axpy(-w, g, &mut direction);
    }
    MgdaSolution {
        lambda: sol.lambda,
        direction,
        converged: sol.converged,
    }
}

fn min_norm_gram(gram: &GramData, cfg: &QpConfig) -> QpSolution {
    let m = gram.m;
    if !gram.is_finite() {
        return unsolved(gram);
    }
    if m == 1 {
        return QpSolution {
            lambda: SimplexWeights::uniform(1),
            dual_objective: gram.objective(&[1.0], 0.0),
            converged: true,
            iterations: 0,
        };
    }
    let hess: Vec<f64> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| gram.entry(i, j))
        .collect();
    let lin = vec![0.0; m];
    if m <= EXACT_FACE_LIMIT {
        if let Some((x, faces)) = solve_by_faces(&hess, &lin, m, None) {
            let lambda = clean_simplex(&x);
            return QpSolution {
                dual_objective: gram.objective(&lambda, 0.0),
                lambda: SimplexWeights::from_raw(lambda),
                converged: true,
                iterations: faces,
            };
        }
    }
    let x0 = vec![1.0 / m as f64; m];
    let eval = |x: &[f64]| gram.objective(x, 0.0);
    let run = accelerated_projected_gradient(&hess, &lin, x0, gram.trace(false), project_simplex_raw, eval, cfg);
    QpSolution {
        dual_objective: gram.objective(&run.x, 0.0),
        lambda: SimplexWeights::from_raw(run.x),
        converged: run.converged,
        iterations: run.iterations,
    }
}

/// Largest `m` solved by face enumeration (`4 (2^m - 1)` small linear systems).
pub const EXACT_FACE_LIMIT: usize = 6;

#[derive(Clone, Copy)]
enum GammaFace {
    Free,
    Zero,
    Coupled,
    ZeroAndCoupled,
}

/// Exact minimizer of `1/2 x^T H x + lin^T x` with the first `m` coordinates on
/// the simplex and, when `pi` is given, a last coordinate `gamma >= max(0, pi^T lambda)`.
///
/// The minimizer lies in the relative interior of some face, where it solves the
/// equality-constrained KKT system of that face. Every face is tried (larger
/// supports first, so ties keep the most spread-out weights) and the best
/// feasible stationary point is returned with the number of faces examined.
fn solve_by_faces(hess: &[f64], lin: &[f64], m: usize, pi: Option<&[f64]>) -> Option<(Vec<f64>, usize)> {
    let k = lin.len();
    let scale = hess
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(lin.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let objective = |x: &[f64]| -> f64 {
        let mut val = linalg::dot(lin, x);
        for i in 0..k {
            val += 0.5 * x[i] * linalg::dot(&hess[i * k..(i + 1) * k], x);
        }
        val
    };
    let mut masks: Vec<u32> = (1..(1u32 << m)).collect();
    masks.sort_by_key(|mask| std::cmp::Reverse(mask.count_ones()));
    let gamma_faces: &[Option<GammaFace>] = if pi.is_some() {
        &[
            Some(GammaFace::Free),
            Some(GammaFace::Coupled),
            Some(GammaFace::Zero),
            Some(GammaFace::ZeroAndCoupled),
        ]
    } else {
        &[None]
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut faces = 0;
    for &mask in &masks {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        for &gf in gamma_faces {
            faces += 1;
            // Free variables: the support, then gamma when present.
            let mut vars = support.clone();
            if pi.is_some() {
                vars.push(m);
            }
            let nv = vars.len();
            let mut rows: Vec<(Vec<f64>, f64)> =
                vec![(vars.iter().map(|&v| if v < m { 1.0 } else { 0.0 }).collect(), 1.0)];
            if let (Some(pi), Some(gf)) = (pi, gf) {
                if matches!(gf, GammaFace::Zero | GammaFace::ZeroAndCoupled) {
                    rows.push((vars.iter().map(|&v| if v == m { 1.0 } else { 0.0 }).collect(), 0.0));
                }
                if matches!(gf, GammaFace::Coupled | GammaFace::ZeroAndCoupled) {
                    rows.push((vars.iter().map(|&v| if v == m { 1.0 } else { -pi[v] }).collect(), 0.0));
                }
            }
            let nc = rows.len();
            let dim = nv + nc;
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for (a, &va) in vars.iter().enumerate() {
                for (b, &vb) in vars.iter().enumerate() {
                    kkt[(a, b)] = hess[va * k + vb];
                }
                rhs[a] = -lin[va];
            }
            for (r, (coeffs, b)) in rows.iter().enumerate() {
                for (a, c) in coeffs.iter().enumerate() {
                    kkt[(nv + r, a)] = *c;
                    kkt[(a, nv + r)] = *c;
                }
                rhs[nv + r] = *b;
            }
            let svd = kkt.clone().svd(true, true);
            let eps = 1e-12 * svd.singular_values.max().max(1.0);
            let Ok(sol) = svd.solve(&rhs, eps) else {
                continue;
            };
            let resid = (&kkt * &sol - &rhs).norm();
            if resid.is_nan() || resid > 1e-9 * (1.0 + scale) * (1.0 + sol.norm()) {
                continue;
            }
            let mut x = vec![0.0; k];
            for (a, &v) in vars.iter().enumerate() {
                x[v] = sol[a];
            }
            if !feasible(&x, m, pi) {
                continue;
            }
            let val = objective(&x);
            let better = match &best {
                None => true,
                Some((b, _)) => val < *b - 1e-13 * (1.0 + b.abs()),
            };
            if better {
                best = Some((val, x));
            }
        }
    }
    best.map(|(_, x)| (x, faces))
}

fn feasible(x: &[f64], m: usize, pi: Option<&[f64]>) -> bool {
    const TOL: f64 = 1e-10;
    if x[..m].iter().any(|v| *v < -TOL || !v.is_finite()) {
        return false;
    }
    match pi {
        None => true,
        Some(pi) => {
            let gamma = x[m];
            gamma >= -TOL && gamma >= linalg::dot(pi, &x[..m]) - TOL * (1.0 + gamma.abs())
        }
    }
}

/// Uniform weights flagged as not converged; the caller sees the non-finite
/// inputs again when it forms the direction.
fn unsolved(gram: &GramData) -> QpSolution {
    QpSolution {
        lambda: SimplexWeights::uniform(gram.m),
        dual_objective: f64::NAN,
        converged: false,
        iterations: 0,
    }
}

/// Clamps rounding-level negatives and renormalizes.
fn clean_simplex(lambda: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = lambda.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    clamped.iter().map(|v| v / sum).collect()
}

/// Projection of `(a, b)` onto `{lambda in simplex, gamma >= max(0, pi^T lambda)}`.
///
/// With multiplier `theta >= 0` on `pi^T lambda <= gamma` the projection is
/// `lambda = P(a - theta pi)`, `gamma = max(b + theta, 0)`; the coupling residual
/// is nonincreasing in `theta`, so `theta` is found by bracketing and bisection.
pub(crate) fn project_with_multiplier(v: &[f64], pi: &[f64]) -> Vec<f64> {
    let m = pi.len();
    let (a, b) = (&v[..m], v[m]);
    let at = |theta: f64| -> (Vec<f64>, f64, f64) {
        let shifted: Vec<f64> = a.iter().zip(pi).map(|(x, p)| x - theta * p).collect();
        let lambda = project_simplex_raw(&shifted);
        let gamma = (b + theta).max(0.0);
        let resid = linalg::dot(pi, &lambda) - gamma;
        (lambda, gamma, resid)
    };
    let (lambda, gamma, resid) = at(0.0);
    if resid <= 0.0 {
        return finish(lambda, gamma);
    }
    let mut lo = 0.0;
    let mut hi = 1.0_f64.max(b.abs());
    while hi.is_finite() && at(hi).2 > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if !hi.is_finite() {
        hi = f64::MAX;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).2 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (lambda, gamma, _) = at(hi);
    let coupled = linalg::dot(pi, &lambda);
    finish(lambda, gamma.max(coupled))
}

fn finish(mut lambda: Vec<f64>, gamma: f64) -> Vec<f64> {
    lambda.push(gamma.max(0.0));
    lambda
}

struct ApgRun {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// FISTA with gradient-based restart on `1/2 x^T H x + lin^T x` over a convex
/// set given by its projection. Returns the best iterate seen under `eval`.
fn accelerated_projected_gradient(
    hess: &[f64],
    lin: &[f64],
    x0: Vec<f64>,
    lipschitz: f64,
    project: impl Fn(&[f64]) -> Vec<f64>,
    eval: impl Fn(&[f64]) -> f64,
    cfg: &QpConfig,
) -> ApgRun {
    let k = lin.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| linalg::dot(&hess[i * k..(i + 1) * k], x) + lin[i])
            .collect()
    };
    let mut x = project(&x0);
    if !lipschitz.is_finite() || lipschitz <= 0.0 {
        return ApgRun {
            x,
            converged: true,
            iterations: 0,
        };
    }
    let step = 1.0 / lipschitz;
    let mut best = (eval(&x), x.clone());
    let mut y = x.clone();
    let mut t = 1.0_f64;

    for iter in 1..=cfg.max_iters {
        let gx = grad(&x);
        let mapped = project(&linalg::sub(&x, &linalg::scale(step, &gx)));
        let mapping_norm = lipschitz * linalg::norm(&linalg::sub(&x, &mapped));
        if mapping_norm <= cfg.tolerance {
            let val = eval(&x);
            if val <= best.0 {
                best = (val, x.clone());
            }
            return ApgRun {
                x: best.1,
                converged: true,
                iterations: iter - 1,
            };
        }

        let gy = grad(&y);
        let x_next = project(&linalg::sub(&y, &linalg::scale(step, &gy)));
        let restart = linalg::dot(&linalg::sub(&y, &x_next), &linalg::sub(&x_next, &x)) > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = x_next
            .iter()
            .zip(&x)
            .map(|(xn, xo)| xn + momentum * (xn - xo))
            .collect();
        if restart {
            y.clone_from(&x_next);
        }
        x = x_next;
        t = t_next;

        let val = eval(&x);
        if val < best.0 {
            best = (val, x.clone());
        }
    }
    ApgRun {
        x: best.1,
        converged: false,
        iterations: cfg.max_iters,
    }
}
