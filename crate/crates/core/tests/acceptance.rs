//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use forum_core::baselines::{exact_hypergradients, unrolled_hypergradients};
use forum_core::direction::{assemble_direction, mgda_direction, solve_dual_qp};
use forum_core::harness::{benchmark_complexity, BenchmarkConfig, Method};
use forum_core::lower_level::{constraint_eval, exact_constraint, gradient_error_bound_check, solve_ll};
use forum_core::problems::{
    dist_to_pareto, Hyperclean, HypercleanSpec, QuadraticSpec, RandomQuadratic, SyntheticMoblo,
};
use forum_core::workspace::Workspace;
use forum_core::{
    beta_schedule, forum_step, linalg, rng, run_forum, BlockSteps, DecisionPoint, ForumConfig, Problem, QpConfig,
    SimplexWeights,
};

type Criterion = fn() -> Outcome;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn synthetic_config() -> ForumConfig {
    ForumConfig {
        iterations: 2000,
        ll_steps: 50,
        mu: 0.3,
        eta: 0.05,
        rho: 0.3,
        beta_exponent: 0.75,
        ..ForumConfig::default()
    }
}

fn point(a: f64, w1: f64, w2: f64) -> DecisionPoint {
    DecisionPoint::new(vec![a], vec![w1, w2]).unwrap()
}

fn criterion_1() -> Outcome {
    let cfg = synthetic_config();
    let mut passed = true;
    let mut parts = Vec::new();
    for z0 in [point(0.0, 0.0, 3.0), point(2.0, 0.0, 3.0), point(2.0, 3.0, 3.0)] {
        let start = Instant::now();
        let out = run_forum(&SyntheticMoblo, &z0, &cfg).unwrap();
        let elapsed = start.elapsed();
        let e = dist_to_pareto(&out.final_point).unwrap();
        let q = exact_constraint(&SyntheticMoblo, &out.final_point).unwrap().q;
        let k = out.trace.last().unwrap().kkt_residual.unwrap();
        let ok = e < 1e-2 && q < 1e-3 && k < 1e-3 && within(elapsed, 5.0);
        passed &= ok;
        parts.push(format!(
            "z0=({},{},{}) E={e:.2e} q={q:.2e} K={k:.2e} {:.2}s",
            z0.alpha[0],
            z0.omega[0],
            z0.omega[1],
            elapsed.as_secs_f64()
        ));
    }
    outcome(passed, parts.join("; "))
}

/// Worst ratio of measured error to `l_f * 0.95^T * |omega^0 - omega*|` over 20 random points.
fn gradient_error_sweep(l_f: f64) -> (bool, f64, usize) {
    let mut r = rng::seeded(2024);
    let mut holds = true;
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..20 {
        let v: Vec<f64> = rng::normal_vec(&mut r, 3).iter().map(|x| 2.0 * x).collect();
        let z = point(v[0], v[1], v[2]);
        let report = gradient_error_bound_check(&SyntheticMoblo, &z, 0.05, 100).unwrap();
        let omega_star = SyntheticMoblo.exact_ll_solution(&z.alpha).unwrap();
        let dist = linalg::norm(&linalg::sub(&z.omega, &omega_star));
        for row in &report.rows {
            let bound = l_f * 0.95f64.powi(row.ll_steps as i32) * dist;
            if row.measured > bound + 1e-9 {
                holds = false;
                violations += 1;
            }
            if bound > 0.0 {
                worst = worst.max(row.measured / bound);
            }
        }
    }
    (holds, worst, violations)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (holds, worst, violations) = gradient_error_sweep(2.0);
    let elapsed = start.elapsed();
    outcome(
        holds && within(elapsed, 1.0),
        format!(
            "constant 2: {violations} violations over 20 points x T=0..100, worst measured/bound = {worst:.3} ({:.3}s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2_true_constant() -> Outcome {
    let start = Instant::now();
    let l_f = SyntheticMoblo.assumption_constants().unwrap().ll_lipschitz;
    let (holds, worst, violations) = gradient_error_sweep(l_f);
    let elapsed = start.elapsed();
    outcome(
        holds && within(elapsed, 1.0),
        format!(
            "L_f = {l_f}: {violations} violations, worst measured/bound = {worst:.3} ({:.3}s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// Dual objective from raw vectors: `1/2 |sum lambda_i g_i + nu g_q|^2 - nu phi`
/// with `nu = max(sum_i lambda_i (2 phi - <g_q, g_i>) / |g_q|^2, 0)`.
struct GridOracle {
    gg: Vec<Vec<f64>>,
    gq: Vec<f64>,
    qq: f64,
    phi: f64,
}

impl GridOracle {
    fn new(grads: &[Vec<f64>], grad_q: &[f64], phi: f64) -> Self {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Self {
            gg: grads
                .iter()
                .map(|a| grads.iter().map(|b| dot(a, b)).collect())
                .collect(),
            gq: grads.iter().map(|a| dot(a, grad_q)).collect(),
            qq: dot(grad_q, grad_q),
            phi,
        }
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        let nu = lambda
            .iter()
            .zip(&self.gq)
            .map(|(l, c)| l * (2.0 * self.phi - c) / self.qq)
            .sum::<f64>()
            .max(0.0);
        let mut quad = nu * nu * self.qq;
        for (i, li) in lambda.iter().enumerate() {
            quad += 2.0 * nu * li * self.gq[i];
            for (j, lj) in lambda.iter().enumerate() {
                quad += li * lj * self.gg[i][j];
            }
        }
        0.5 * quad - nu * self.phi
    }

    /// Best value on the simplex grid of spacing `h` within `radius` grid
    /// cells of `center`, or over the whole simplex when `center` is `None`.
    fn search(&self, m: usize, h: f64, center: Option<&[f64]>, radius: i64) -> (f64, Vec<f64>) {
        let steps = (1.0 / h).round() as i64;
        let range = |i: usize| match center {
            None => (0, steps),
            Some(c) => {
                let mid = (c[i] / h).round() as i64;
                ((mid - radius).max(0), (mid + radius).min(steps))
            }
        };
        let mut best = (f64::INFINITY, Vec::new());
        let mut consider = |lambda: Vec<f64>| {
            let v = self.value(&lambda);
            if v < best.0 {
                best = (v, lambda);
            }
        };
        let (a0, a1) = range(0);
        for a in a0..=a1 {
            let l0 = a as f64 * h;
            if m == 2 {
                consider(vec![l0, (steps - a) as f64 * h]);
                continue;
            }
            let (b0, b1) = range(1);
            for b in b0..=b1.min(steps - a) {
                consider(vec![l0, b as f64 * h, (steps - a - b) as f64 * h]);
            }
        }
        best
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = QpConfig::default();
    let mut r = rng::seeded(3);
    let mut worst_gap: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    let mut passed = true;
    for inst in 0..100 {
        let m = 2 + inst % 2;
        let grads: Vec<Vec<f64>> = (0..m).map(|_| rng::normal_vec(&mut r, 5)).collect();
        let grad_q = rng::normal_vec(&mut r, 5);
        let phi = 0.5 * 0.5 * linalg::norm_sq(&grad_q);

        let sol = solve_dual_qp(&grads, &grad_q, phi, &cfg);
        let oracle = GridOracle::new(&grads, &grad_q, phi);
        let (coarse, at) = oracle.search(m, 1e-3, None, 0);
        let (fine, _) = oracle.search(m, 1e-5, Some(&at), 100);
        let reference = coarse.min(fine);
        let gap = (sol.dual_objective - reference).abs();
        worst_gap = worst_gap.max(gap);
        passed &= gap <= 1e-4;

        if linalg::norm(&grad_q) >= cfg.grad_floor {
            let dir = assemble_direction(&sol.lambda, &grads, &grad_q, phi, cfg.grad_floor);
            let lhs = linalg::dot(&grad_q, &dir.direction);
            worst_slack = worst_slack.min(-phi + 1e-8 - lhs);
            passed &= lhs <= -phi + 1e-8;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        passed && within(elapsed, 10.0),
        format!(
            "100 instances: worst |qp - grid| = {worst_gap:.2e}, min constraint slack = {worst_slack:.2e} ({:.2}s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst_pair: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for seed in 0..20 {
        let q = RandomQuadratic::random(QuadraticSpec { seed, n: 3, p: 4, m: 2 });
        let eta = 1.0 / q.assumption_constants().unwrap().ll_lipschitz;
        let alpha = rng::normal_vec(&mut rng::seeded(1000 + seed), 3);
        let omega0 = vec![0.0; 4];
        let exact = exact_hypergradients(&q, &alpha).unwrap();
        let unrolled = unrolled_hypergradients(&q, &alpha, &omega0, 200, eta).unwrap();
        for i in 0..2 {
            let diff = linalg::sub(&exact.per_objective[i], &unrolled.per_objective[i]);
            worst_pair = worst_pair.max(diff.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
            for j in 0..3 {
                let mut ap = alpha.clone();
                let mut am = alpha.clone();
                ap[j] += h;
                am[j] -= h;
                let through_exact = |a: &[f64]| q.ul_value(i, a, &q.exact_ll_solution(a).unwrap());
                let through_unroll = |a: &[f64]| q.ul_value(i, a, &solve_ll(&q, a, &omega0, 200, eta).unwrap());
                let fd_exact = (through_exact(&ap) - through_exact(&am)) / (2.0 * h);
                let fd_unroll = (through_unroll(&ap) - through_unroll(&am)) / (2.0 * h);
                worst_fd = worst_fd
                    .max((fd_exact - exact.per_objective[i][j]).abs())
                    .max((fd_unroll - unrolled.per_objective[i][j]).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_pair <= 1e-6 && worst_fd <= 1e-5 && within(elapsed, 5.0),
        format!(
            "20 draws: max |exact - unrolled| = {worst_pair:.2e}, max |fd - analytic| = {worst_fd:.2e} ({:.2}s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = BenchmarkConfig {
        p_values: vec![10_000],
        m: 2,
        ..BenchmarkConfig::default()
    };
    let report = benchmark_complexity(&cfg).unwrap();
    let forum: Vec<usize> = cfg
        .t_values
        .iter()
        .map(|&t| report.row(Method::Forum, t, 10_000).unwrap().peak_workspace_floats)
        .collect();
    let (fmin, fmax) = (*forum.iter().min().unwrap() as f64, *forum.iter().max().unwrap() as f64);
    let forum_spread = (fmax - fmin) / fmin;
    let unrolled_1 = report.row(Method::MomlUnrolled, 1, 10_000).unwrap();
    let unrolled_256 = report.row(Method::MomlUnrolled, 256, 10_000).unwrap();
    let growth = unrolled_256.peak_workspace_floats as f64 / unrolled_1.peak_workspace_floats as f64;
    let forum_64 = report.row(Method::Forum, 64, 10_000).unwrap().mean_time_s;
    let unrolled_64 = report.row(Method::MomlUnrolled, 64, 10_000).unwrap().mean_time_s;
    outcome(
        forum_spread < 0.05 && growth >= 10.0 && forum_64 < unrolled_64,
        format!(
            "forum workspace spread {:.2}%, unrolled growth T=1->256 {growth:.1}x, time at T=64: forum {forum_64:.2e}s vs unrolled {unrolled_64:.2e}s",
            100.0 * forum_spread
        ),
    )
}

fn hyperclean_config(alpha_step: f64) -> ForumConfig {
    ForumConfig {
        iterations: 500,
        ll_steps: 16,
        eta: 0.3,
        rho: 0.5,
        block_steps: Some(BlockSteps {
            alpha: alpha_step,
            omega: 0.3,
        }),
        metrics_stride: 500,
        ..ForumConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut weights_ok = true;
    let mut forum_acc = Vec::new();
    let mut base_acc = Vec::new();
    let mut parts = Vec::new();
    for seed in [1, 2, 3] {
        let h = Hyperclean::generate(HypercleanSpec {
            seed,
            ..HypercleanSpec::default()
        })
        .unwrap();
        let z0 = DecisionPoint::zeros(h.dims());
        let out = run_forum(&h, &z0, &hyperclean_config(10.0)).unwrap();
        // Uniform-weight baseline: the same run with alpha frozen at 0.
        let base = run_forum(&h, &z0, &hyperclean_config(0.0)).unwrap();
        let rep = h.report(&out.final_point);
        let rep_base = h.report(&base.final_point);
        weights_ok &= rep.mean_weight_corrupt < rep.mean_weight_clean;
        forum_acc.push(rep.mean_test_accuracy());
        base_acc.push(rep_base.mean_test_accuracy());
        parts.push(format!(
            "seed {seed}: w_clean {:.3} w_corrupt {:.3} acc {:.4} vs {:.4}",
            rep.mean_weight_clean,
            rep.mean_weight_corrupt,
            rep.mean_test_accuracy(),
            rep_base.mean_test_accuracy()
        ));
    }
    let elapsed = start.elapsed();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let lift = mean(&forum_acc) - mean(&base_acc);
    outcome(
        weights_ok && lift >= 0.02 && within(elapsed, 60.0),
        format!(
            "{}; mean accuracy lift {:.2} pp ({:.1}s)",
            parts.join("; "),
            100.0 * lift,
            elapsed.as_secs_f64()
        ),
    )
}

fn stripped(trace: &forum_core::Trace) -> Vec<forum_core::IterateRecord> {
    trace
        .records
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_time_seconds = 0.0;
            r
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(PropConfig {
        cases: 200,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (0u64..10_000, 1usize..4, 1usize..4, 1usize..4, 0.0f64..1.0, 0.3f64..1.0);
    let result = runner.run(&strategy, |(seed, n, p, m, rho, b)| {
        let q = RandomQuadratic::random(QuadraticSpec { seed, n, p, m });
        let eta = 1.0 / q.assumption_constants().unwrap().ll_lipschitz;
        let cfg = ForumConfig {
            iterations: 15,
            ll_steps: 5,
            mu: 0.05,
            eta,
            rho,
            beta_exponent: b,
            ..ForumConfig::default()
        };
        let flat = rng::normal_vec(&mut rng::seeded(seed ^ 0xabc), n + p);
        let z0 = DecisionPoint::from_flat(n, &flat);
        let ws = Workspace::new();

        let mut z = z0.clone();
        let mut lambda = SimplexWeights::uniform(m);
        for k in 0..cfg.iterations {
            let step = forum_step(&q, &z, &lambda, k, &cfg, &z0.omega, &ws).unwrap();
            let lt = &step.lambda_tilde;
            prop_assert!(lt.is_valid(), "lambda_tilde left the simplex: {:?}", lt);
            if k >= 1 {
                let moved = linalg::l1_dist(lt.as_slice(), lambda.as_slice());
                prop_assert!(moved <= 2.0 * beta_schedule(k, b) + 1e-12);
            }
            // direction_norm = |sum lambda_tilde_i grad F_i + nu grad q_tilde|, recomputed here.
            let ev = constraint_eval(&q, &z, step.omega_t.clone(), rho).unwrap();
            let mut combined = linalg::scale(step.record.nu, &ev.grad_q_tilde);
            for (w, g) in lt.as_slice().iter().zip(&step.grads) {
                linalg::axpy(*w, g, &mut combined);
            }
            prop_assert!(
                (linalg::norm(&combined) - step.record.direction_norm).abs()
                    <= 1e-12 * (1.0 + step.record.direction_norm)
            );

            // MGDA common descent: <g_i, d> <= -|d|^2 for every objective.
            let mg = mgda_direction(&step.grads, &cfg.qp);
            let dd = linalg::norm_sq(&mg.direction);
            for g in &step.grads {
                prop_assert!(linalg::dot(g, &mg.direction) <= -dd + 1e-9 * (1.0 + dd));
            }
            lambda = step.lambda_tilde;
            z = step.next;
        }

        let a = run_forum(&q, &z0, &cfg).unwrap();
        let b2 = run_forum(&q, &z0, &cfg).unwrap();
        prop_assert_eq!(stripped(&a.trace), stripped(&b2.trace));
        prop_assert_eq!(a.final_point, b2.final_point);
        Ok(())
    });
    let elapsed = start.elapsed();
    let detail = match &result {
        Ok(()) => format!("200 cases ({:.1}s)", elapsed.as_secs_f64()),
        Err(e) => format!("{e}"),
    };
    outcome(result.is_ok() && within(elapsed, 30.0), detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("1 synthetic convergence", criterion_1),
        ("2 gradient-error bound (stated constant 2)", criterion_2),
        (
            "2' gradient-error bound (L_f of the problem)",
            criterion_2_true_constant,
        ),
        ("3 QP vs grid oracle", criterion_3),
        ("4 hypergradient agreement", criterion_4),
        ("5 complexity scaling", criterion_5),
        ("6 hyper-cleaning", criterion_6),
        ("7 invariant suite", criterion_7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let out = run();
        println!(
            "{} criterion {name}: {}",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
        if !out.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion check(s) failed");
        ExitCode::FAILURE
    }
}
