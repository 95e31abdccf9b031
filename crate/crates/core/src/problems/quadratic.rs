use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::problem::{AssumptionConstants, Capabilities, Dims, Problem};
use crate::rng;

/// Strongly convex quadratic family:
///
/// ```text
/// f(alpha, omega) = |omega - A alpha - b|^2 + kappa |omega|^2
/// F_i(z)          = |z - t_i|^2
/// ```
///
/// with `omega*(alpha) = (A alpha + b) / (1 + kappa)`.
#[derive(Debug, Clone)]
pub struct RandomQuadratic {
    a: DMatrix<f64>,
    b: Vec<f64>,
    kappa: f64,
    targets: Vec<Vec<f64>>,
    constants: AssumptionConstants,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub m: usize,
}

impl RandomQuadratic {
    /// Seeded instance: `A` has N(0, 1/p) entries, `b` and the targets are standard
    /// normal and `kappa` is uniform on `[0.1, 1)`.
    pub fn random(spec: QuadraticSpec) -> Self {
        let QuadraticSpec { seed, n, p, m } = spec;
        assert!(n >= 1 && p >= 1 && m >= 1, "dimensions must be positive");
        let mut r = rng::seeded(rng::derive_seed(seed, 0x5155_4144));
        let scale = 1.0 / (p as f64).sqrt();
        let a_entries: Vec<f64> = rng::normal_vec(&mut r, p * n).iter().map(|v| v * scale).collect();
        let a = DMatrix::from_row_slice(p, n, &a_entries);
        let b = rng::normal_vec(&mut r, p);
        let kappa = rng::uniform_vec(&mut r, 1, 0.1, 1.0)[0];
        let targets = (0..m).map(|_| rng::normal_vec(&mut r, n + p)).collect();
        Self::from_parts(a, b, kappa, targets)
    }

    pub fn from_parts(a: DMatrix<f64>, b: Vec<f64>, kappa: f64, targets: Vec<Vec<f64>>) -> Self {
        assert_eq!(a.nrows(), b.len(), "A rows must match b");
        assert!(kappa >= 0.0, "kappa must be nonnegative");
        assert!(!targets.is_empty(), "need at least one objective");
        let z_len = a.nrows() + a.ncols();
        assert!(
            targets.iter().all(|t| t.len() == z_len),
            "targets must have length n + p"
        );

        let s = 1.0 + kappa;
        let ata = a.tr_mul(&a);
        let sigma_sq = SymmetricEigen::new(ata).eigenvalues.max().max(0.0);
        let t = sigma_sq + s;
        let ll_lipschitz = t + (t * t - 4.0 * sigma_sq * kappa).max(0.0).sqrt();
        let constants = AssumptionConstants {
            ul_lipschitz: 2.0,
            ul_bound: None,
            ll_strong_convexity: 2.0 * s,
            ll_lipschitz,
        };
        Self {
            a,
            b,
            kappa,
            targets,
            constants,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `omega - A alpha - b`.
    fn residual(&self, alpha: &[f64], omega: &[f64]) -> DVector<f64> {
        let a_alpha = &self.a * DVector::from_column_slice(alpha);
        DVector::from_iterator(
            omega.len(),
            omega
                .iter()
                .zip(a_alpha.iter())
                .zip(&self.b)
                .map(|((w, aa), b)| w - aa - b),
        )
    }
}

impl Problem for RandomQuadratic {
    fn name(&self) -> &str {
        "random_quadratic"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: self.a.ncols(),
            p: self.a.nrows(),
            m: self.targets.len(),
        }
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            exact_solution: true,
            solution_jacobian: true,
            hvp: true,
            constants: true,
            optimality_gap: false,
        }
    }

    fn ul_value(&self, i: usize, alpha: &[f64], omega: &[f64]) -> f64 {
        let t = &self.targets[i];
        let n = alpha.len();
        linalg::norm_sq(&linalg::sub(alpha, &t[..n])) + linalg::norm_sq(&linalg::sub(omega, &t[n..]))
    }

    fn ul_grad(&self, i: usize, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let t = &self.targets[i];
        alpha.iter().chain(omega).zip(t).map(|(z, t)| 2.0 * (z - t)).collect()
    }

    fn ll_value(&self, alpha: &[f64], omega: &[f64]) -> f64 {
        self.residual(alpha, omega).norm_squared() + self.kappa * linalg::norm_sq(omega)
    }

    fn ll_grad(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let r = self.residual(alpha, omega);
        let mut g: Vec<f64> = self.a.tr_mul(&r).iter().map(|v| -2.0 * v).collect();
        g.extend(r.iter().zip(omega).map(|(ri, w)| 2.0 * ri + 2.0 * self.kappa * w));
        g
    }

    fn ll_grad_omega(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let r = self.residual(alpha, omega);
        r.iter()
            .zip(omega)
            .map(|(ri, w)| 2.0 * ri + 2.0 * self.kappa * w)
            .collect()
    }

    fn ll_grad_alpha(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let r = self.residual(alpha, omega);
        self.a.tr_mul(&r).iter().map(|v| -2.0 * v).collect()
    }

    fn exact_ll_solution(&self, alpha: &[f64]) -> Option<Vec<f64>> {
        let a_alpha = &self.a * DVector::from_column_slice(alpha);
        Some(
            a_alpha
                .iter()
                .zip(&self.b)
                .map(|(aa, b)| (aa + b) / (1.0 + self.kappa))
                .collect(),
        )
    }

    fn ll_solution_jacobian(&self, _alpha: &[f64]) -> Option<DMatrix<f64>> {
        Some(&self.a / (1.0 + self.kappa))
    }

    fn ll_hvp_ww(&self, _alpha: &[f64], _omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(2.0 * (1.0 + self.kappa), v))
    }

    fn ll_hvp_aw(&self, _alpha: &[f64], _omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let out = self.a.tr_mul(&DVector::from_column_slice(v));
        Some(out.iter().map(|x| -2.0 * x).collect())
    }

    fn assumption_constants(&self) -> Option<AssumptionConstants> {
        Some(self.constants)
    }
}
