use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{moml_step, MomlMode};
use crate::config::ForumConfig;
use crate::driver::forum_step;
use crate::error::{ForumError, Result};
use crate::linalg;
use crate::problem::{DecisionPoint, Problem, SimplexWeights};
use crate::problems::{QuadraticSpec, RandomQuadratic};
use crate::rng;
use crate::workspace::Workspace;

use super::experiment::Method;
use super::output::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub t_values: Vec<usize>,
    pub p_values: Vec<usize>,
    /// Upper-level dimension of the quadratic instances.
    pub n: usize,
    pub m: usize,
    pub methods: Vec<Method>,
    pub warmup: usize,
    pub timed: usize,
    pub seed: u64,
    /// Step sizes and subproblem settings; `ll_steps` is overridden by the grid.
    pub solver: ForumConfig,
    pub output_name: String,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            t_values: vec![1, 4, 16, 64, 256],
            p_values: vec![100, 1_000, 10_000],
            n: 10,
            m: 2,
            methods: vec![Method::Forum, Method::MomlUnrolled],
            warmup: 2,
            timed: 5,
            seed: 0,
            solver: ForumConfig {
                mu: 0.01,
                eta: 0.1,
                ..ForumConfig::default()
            },
            output_name: "complexity".to_string(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() || self.p_values.is_empty() || self.methods.is_empty() {
            return Err(ForumError::Config(
                "benchmark grid and method list must be non-empty".into(),
            ));
        }
        if self.warmup < 2 || self.timed < 5 {
            return Err(ForumError::Config("benchmark needs warmup >= 2 and timed >= 5".into()));
        }
        if self.n == 0 || self.m == 0 || self.p_values.contains(&0) {
            return Err(ForumError::Config("benchmark dimensions must be >= 1".into()));
        }
        self.solver.validate_steps()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub method: Method,
    pub ll_steps: usize,
    pub p: usize,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub peak_workspace_floats: usize,
    pub timed_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySlope {
    pub method: Method,
    pub p: usize,
    /// Least-squares slope of mean time per iteration against `T`.
    pub time_per_step: f64,
    /// Least-squares slope of peak workspace floats against `T`.
    pub floats_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<ComplexityRow>,
    pub slopes: Vec<ComplexitySlope>,
}

impl ComplexityReport {
    pub fn row(&self, method: Method, ll_steps: usize, p: usize) -> Option<&ComplexityRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.ll_steps == ll_steps && r.p == p)
    }
}

/// Times `warmup + timed` upper-level iterations for every grid cell.
pub fn benchmark_complexity(cfg: &BenchmarkConfig) -> Result<ComplexityReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.p_values {
        let problem = RandomQuadratic::random(QuadraticSpec {
            seed: cfg.seed,
            n: cfg.n,
            p,
            m: cfg.m,
        });
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, p as u64));
        let z0 = DecisionPoint::from_flat(cfg.n, &rng::normal_vec(&mut r, cfg.n + p));
        for &method in &cfg.methods {
            for &t in &cfg.t_values {
                let solver = ForumConfig {
                    ll_steps: t,
                    ..cfg.solver.clone()
                };
                let (times, peak) = time_cell(&problem, &z0, method, &solver, cfg.warmup, cfg.timed)?;
                let (mean_time_s, std_time_s) = linalg::mean_std(&times);
                rows.push(ComplexityRow {
                    method,
                    ll_steps: t,
                    p,
                    mean_time_s,
                    std_time_s,
                    peak_workspace_floats: peak,
                    timed_iterations: times.len(),
                });
            }
        }
    }
    let mut slopes = Vec::new();
    for &p in &cfg.p_values {
        for &method in &cfg.methods {
            let cell: Vec<&ComplexityRow> = rows.iter().filter(|r| r.p == p && r.method == method).collect();
            let ts: Vec<f64> = cell.iter().map(|r| r.ll_steps as f64).collect();
            let time: Vec<f64> = cell.iter().map(|r| r.mean_time_s).collect();
            let mem: Vec<f64> = cell.iter().map(|r| r.peak_workspace_floats as f64).collect();
            slopes.push(ComplexitySlope {
                method,
                p,
                time_per_step: linalg::ols_slope(&ts, &time),
                floats_per_step: linalg::ols_slope(&ts, &mem),
            });
        }
    }
    Ok(ComplexityReport {
        config: cfg.clone(),
        rows,
        slopes,
    })
}

/// Per-iteration wall times of the timed iterations and the peak workspace over all of them.
fn time_cell(
    problem: &dyn Problem,
    z0: &DecisionPoint,
    method: Method,
    cfg: &ForumConfig,
    warmup: usize,
    timed: usize,
) -> Result<(Vec<f64>, usize)> {
    let ws = Workspace::new();
    let mut z = z0.clone();
    let mut lambda = SimplexWeights::uniform(problem.dims().m);
    let mut times = Vec::with_capacity(timed);
    let mut peak = 0;
    for k in 0..warmup + timed {
        let (time, floats) = match method {
            Method::Forum => {
                let s = forum_step(problem, &z, &lambda, k, cfg, &z0.omega, &ws)?;
                z = s.next;
                lambda = s.lambda_tilde;
                (s.record.wall_time_seconds, s.record.workspace_floats)
            }
            Method::MomlExact | Method::MomlUnrolled => {
                let mode = if method == Method::MomlExact {
                    MomlMode::Exact
                } else {
                    MomlMode::Unrolled
                };
                let s = moml_step(problem, &z, mode, k, cfg, &ws)?;
                z = s.next;
                (s.record.wall_time_seconds, s.record.workspace_floats)
            }
        };
        if k >= warmup {
            times.push(time);
            peak = peak.max(floats);
        }
    }
    Ok((times, peak))
}

/// Writes `<name>.csv` (one row per cell) and `<name>.json` (full report) into `out_dir`.
pub fn write_complexity_report(report: &ComplexityReport, out_dir: &Path) -> Result<()> {
    let name = &report.config.output_name;
    let config_json = serde_json::to_string(&report.config)?;
    let mut buf = format!("# config: {config_json}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "method",
            "T",
            "p",
            "mean_time_s",
            "std_time_s",
            "peak_workspace_floats",
            "timed_iterations",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.method.as_str().to_string(),
                r.ll_steps.to_string(),
                r.p.to_string(),
                r.mean_time_s.to_string(),
                r.std_time_s.to_string(),
                r.peak_workspace_floats.to_string(),
                r.timed_iterations.to_string(),
            ])?;
        }
        w.flush().map_err(|e| ForumError::io("<benchmark buffer>", e))?;
    }
    write_atomic(&out_dir.join(format!("{name}.csv")), &buf)?;
    write_atomic(
        &out_dir.join(format!("{name}.json")),
        &serde_json::to_vec_pretty(report)?,
    )
}
