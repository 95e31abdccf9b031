use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::IterateRecord;
use crate::error::{ForumError, Result};

use super::experiment::{final_metrics, run_single, ExperimentConfig, Method, RunId};
use super::output::write_atomic;

/// Written in the iterations column when the threshold is never met.
pub const NOT_REACHED: &str = "not reached";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default = "default_name")]
    pub output_name: String,
}

fn default_name() -> String {
    "compare".to_string()
}

impl CompareConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ForumError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| ForumError::Config(format!("{}: {e}", path.display())))?;
        for e in &cfg.experiments {
            e.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub final_optimality_gap: Option<f64>,
    pub final_kkt_residual: Option<f64>,
    pub final_q_exact: Option<f64>,
    /// First iteration whose record meets the threshold.
    pub iterations_to_threshold: Option<usize>,
    pub total_wall_time_s: f64,
}

/// Threshold test for one record: the optimality gap when known, otherwise
/// `max(kkt_residual, q_exact)`.
fn meets(record: &IterateRecord, threshold: f64) -> bool {
    match (record.optimality_gap, record.kkt_residual, record.q_exact) {
        (Some(e), _, _) => e < threshold,
        (None, Some(k), Some(q)) => k.max(q) < threshold,
        _ => false,
    }
}

/// Runs the first seed and initialization of every config; all configs must
/// share the problem and the initialization.
pub fn compare_methods(configs: &[ExperimentConfig]) -> Result<Vec<CompareRow>> {
    let Some(first) = configs.first() else {
        return Err(ForumError::Config("compare needs at least one experiment".into()));
    };
    for c in configs {
        if c.problem != first.problem || c.init != first.init || c.seeds.first() != first.seeds.first() {
            return Err(ForumError::Config(
                "compared experiments must share problem, initialization and first seed".into(),
            ));
        }
    }
    let id = RunId {
        seed: first.seeds[0],
        init: 0,
    };
    // Capability problems surface before any run starts.
    for c in configs {
        let built = super::experiment::BuiltProblem::build(&c.problem, id.seed)?;
        super::experiment::check_method(built.as_dyn(), c.method)?;
    }
    configs
        .iter()
        .map(|c| {
            let (built, out) = run_single(c, id)?;
            let fm = final_metrics(&built, &out)?;
            Ok(CompareRow {
                method: c.method,
                final_optimality_gap: fm.optimality_gap,
                final_kkt_residual: fm.kkt_residual,
                final_q_exact: fm.q_exact,
                iterations_to_threshold: out.trace.records.iter().find(|r| meets(r, c.threshold)).map(|r| r.k),
                total_wall_time_s: fm.total_wall_time_s,
            })
        })
        .collect()
}

pub fn write_compare_csv(rows: &[CompareRow], path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "method",
            "final_optimality_gap",
            "final_kkt_residual",
            "final_q_exact",
            "iterations_to_threshold",
            "total_wall_time_s",
        ])?;
        for r in rows {
            w.write_record([
                r.method.as_str().to_string(),
                opt(r.final_optimality_gap),
                opt(r.final_kkt_residual),
                opt(r.final_q_exact),
                r.iterations_to_threshold
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| NOT_REACHED.to_string()),
                r.total_wall_time_s.to_string(),
            ])?;
        }
        w.flush().map_err(|e| ForumError::io(path, e))?;
    }
    write_atomic(path, &buf)
}
