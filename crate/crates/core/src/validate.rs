//! Finite-difference and structural checks for problem oracles.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::problem::{expect_len, Dims, Problem};
use crate::rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Tolerance on `|fd - g| / max(1, |g|, |fd|)`.
pub const FD_REL_TOL: f64 = 1e-4;
pub const STATIONARITY_TOL: f64 = 1e-8;
pub const SYMMETRY_REL_TOL: f64 = 1e-8;
/// Above this `n + p`, gradients are checked on sampled coordinates and directions.
pub const FULL_FD_LIMIT: usize = 64;
const SAMPLED_COORDS: usize = 32;
const SAMPLED_DIRECTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest error seen, in the units of the check's own tolerance.
    pub worst_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Check {
    name: &'static str,
    worst: f64,
    tol: f64,
    finite: bool,
}

impl Check {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            worst: 0.0,
            tol,
            finite: true,
        }
    }

    fn record(&mut self, err: f64) {
        if !err.is_finite() {
            self.finite = false;
        } else if err > self.worst {
            self.worst = err;
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: self.finite && self.worst <= self.tol,
            worst_error: if self.finite { self.worst } else { f64::INFINITY },
            tolerance: self.tol,
        }
    }
}

fn rel_err(fd: f64, g: f64) -> f64 {
    (fd - g).abs() / 1f64.max(fd.abs()).max(g.abs())
}

/// Runs every applicable check at `samples` seeded standard-normal points.
///
/// Oracle outputs with the wrong length are a hard error naming the oracle;
/// numerical disagreements are reported as failed checks.
pub fn validate_problem(problem: &dyn Problem, samples: usize, seed: u64) -> Result<ValidationReport> {
    let dims = problem.dims();
    let caps = problem.capabilities();
    let mut r = rng::seeded(rng::derive_seed(seed, 0x5641_4c49));

    let mut finite = Check::new("finite_gradients", 0.0);
    let mut ul_fd = Check::new("ul_grad_finite_difference", FD_REL_TOL);
    let mut ll_fd = Check::new("ll_grad_finite_difference", FD_REL_TOL);
    let mut stationarity = Check::new("ll_stationarity_at_exact_solution", STATIONARITY_TOL);
    let mut symmetry = Check::new("hvp_symmetry", SYMMETRY_REL_TOL);
    let mut hvp_fd = Check::new("hvp_finite_difference", FD_REL_TOL);
    let mut jac_fd = Check::new("solution_jacobian_finite_difference", FD_REL_TOL);

    for _ in 0..samples {
        let alpha = rng::normal_vec(&mut r, dims.n);
        let omega = rng::normal_vec(&mut r, dims.p);
        let z = linalg::concat(&alpha, &omega);
        let directions = probe_directions(&mut r, dims);

        let ll_g = problem.ll_grad(&alpha, &omega);
        expect_len("ll_grad", &ll_g, dims.z_len())?;
        expect_len("ll_grad_omega", &problem.ll_grad_omega(&alpha, &omega), dims.p)?;
        expect_len("ll_grad_alpha", &problem.ll_grad_alpha(&alpha, &omega), dims.n)?;
        finite.record(if linalg::all_finite(&ll_g) { 0.0 } else { f64::INFINITY });
        let ll = |x: &[f64]| problem.ll_value(&x[..dims.n], &x[dims.n..]);
        fd_gradient(&ll, &z, &ll_g, &directions, &mut ll_fd);

        for i in 0..dims.m {
            let g = problem.ul_grad(i, &alpha, &omega);
            expect_len("ul_grad", &g, dims.z_len())?;
            finite.record(if linalg::all_finite(&g) { 0.0 } else { f64::INFINITY });
            let ul = |x: &[f64]| problem.ul_value(i, &x[..dims.n], &x[dims.n..]);
            fd_gradient(&ul, &z, &g, &directions, &mut ul_fd);
        }

        if caps.exact_solution {
            if let Some(w) = problem.exact_ll_solution(&alpha) {
                expect_len("exact_ll_solution", &w, dims.p)?;
                let gw = problem.ll_grad_omega(&alpha, &w);
                stationarity.record(linalg::norm(&gw));
            }
        }

        if caps.solution_jacobian {
            if let Some(jac) = problem.ll_solution_jacobian(&alpha) {
                if jac.nrows() != dims.p || jac.ncols() != dims.n {
                    return Err(crate::error::ForumError::Dimension {
                        oracle: "ll_solution_jacobian",
                        expected: dims.p * dims.n,
                        got: jac.nrows() * jac.ncols(),
                    });
                }
                let cols = sampled(&mut r, dims.n);
                for j in cols {
                    let mut ap = alpha.clone();
                    let mut am = alpha.clone();
                    ap[j] += FD_STEP;
                    am[j] -= FD_STEP;
                    if let (Some(wp), Some(wm)) = (problem.exact_ll_solution(&ap), problem.exact_ll_solution(&am)) {
                        for row in 0..dims.p {
                            let fd = (wp[row] - wm[row]) / (2.0 * FD_STEP);
                            jac_fd.record(rel_err(fd, jac[(row, j)]));
                        }
                    }
                }
            }
        }

        if caps.hvp {
            let u = rng::normal_vec(&mut r, dims.p);
            let v = rng::normal_vec(&mut r, dims.p);
            let (Some(hu), Some(hv)) = (
                problem.ll_hvp_ww(&alpha, &omega, &u),
                problem.ll_hvp_ww(&alpha, &omega, &v),
            ) else {
                continue;
            };
            expect_len("ll_hvp_ww", &hu, dims.p)?;
            let (vhu, uhv) = (linalg::dot(&v, &hu), linalg::dot(&u, &hv));
            symmetry.record(rel_err(vhu, uhv));

            let wp: Vec<f64> = omega.iter().zip(&v).map(|(w, d)| w + FD_STEP * d).collect();
            let wm: Vec<f64> = omega.iter().zip(&v).map(|(w, d)| w - FD_STEP * d).collect();
            let dgw = linalg::sub(&problem.ll_grad_omega(&alpha, &wp), &problem.ll_grad_omega(&alpha, &wm));
            for (fd, h) in dgw.iter().zip(&hv) {
                hvp_fd.record(rel_err(fd / (2.0 * FD_STEP), *h));
            }
            if let Some(haw) = problem.ll_hvp_aw(&alpha, &omega, &v) {
                expect_len("ll_hvp_aw", &haw, dims.n)?;
                let dga = linalg::sub(&problem.ll_grad_alpha(&alpha, &wp), &problem.ll_grad_alpha(&alpha, &wm));
                for (fd, h) in dga.iter().zip(&haw) {
                    hvp_fd.record(rel_err(fd / (2.0 * FD_STEP), *h));
                }
            }
        }
    }

    let mut checks = vec![finite.finish(), ul_fd.finish(), ll_fd.finish()];
    if caps.exact_solution {
        checks.push(stationarity.finish());
    }
    if caps.solution_jacobian {
        checks.push(jac_fd.finish());
    }
    if caps.hvp {
        checks.push(symmetry.finish());
        checks.push(hvp_fd.finish());
    }
    Ok(ValidationReport {
        problem: problem.name().to_string(),
        samples,
        seed,
        checks,
    })
}

/// Unit coordinate directions (all of them, or a sample for large `z`) plus
/// random unit directions in the large case.
fn probe_directions(r: &mut rng::ForumRng, dims: Dims) -> Vec<Vec<f64>> {
    let len = dims.z_len();
    let mut dirs: Vec<Vec<f64>> = sampled(r, len)
        .into_iter()
        .map(|j| {
            let mut e = vec![0.0; len];
            e[j] = 1.0;
            e
        })
        .collect();
    if len > FULL_FD_LIMIT {
        for _ in 0..SAMPLED_DIRECTIONS {
            let d = rng::normal_vec(r, len);
            dirs.push(linalg::scale(1.0 / linalg::norm(&d), &d));
        }
    }
    dirs
}

fn sampled(r: &mut rng::ForumRng, len: usize) -> Vec<usize> {
    if len <= FULL_FD_LIMIT {
        (0..len).collect()
    } else {
        let mut idx = index::sample(r, len, SAMPLED_COORDS).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, z: &[f64], grad: &[f64], dirs: &[Vec<f64>], check: &mut Check) {
    for d in dirs {
        let zp: Vec<f64> = z.iter().zip(d).map(|(x, e)| x + FD_STEP * e).collect();
        let zm: Vec<f64> = z.iter().zip(d).map(|(x, e)| x - FD_STEP * e).collect();
        let fd = (f(&zp) - f(&zm)) / (2.0 * FD_STEP);
        check.record(rel_err(fd, linalg::dot(grad, d)));
    }
}
