use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::{RunOutput, StopVerdict, Trace};
use crate::error::{ForumError, Result};
use crate::linalg;

use super::experiment::{final_metrics, run_single, ExperimentConfig, FinalMetrics, RunId};

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| ForumError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ForumError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| ForumError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| ForumError::io(path, e.error))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header lines starting with `#` that carry provenance.
pub fn provenance_header(cfg: &ExperimentConfig, id: RunId) -> String {
    format!(
        "# config_sha256: {}\n# seed: {}\n# init: {}\n# config: {}\n",
        cfg.sha256(),
        id.seed,
        id.init,
        cfg.to_json_line()
    )
}

/// Trace columns: `k, F_1..F_m, q_tilde, q_exact, kkt_residual, optimality_gap,
/// nu, direction_norm, wall_time_s, workspace_floats`. Missing metrics are empty.
pub fn trace_columns(m: usize) -> Vec<String> {
    let mut cols = vec!["k".to_string()];
    cols.extend((1..=m).map(|i| format!("F_{i}")));
    cols.extend(
        [
            "q_tilde",
            "q_exact",
            "kkt_residual",
            "optimality_gap",
            "nu",
            "direction_norm",
            "wall_time_s",
            "workspace_floats",
        ]
        .map(String::from),
    );
    cols
}

pub fn trace_csv(cfg: &ExperimentConfig, id: RunId, m: usize, trace: &Trace) -> Result<Vec<u8>> {
    let mut buf = provenance_header(cfg, id).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(trace_columns(m))?;
        for r in &trace.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.f_values.iter().map(|v| v.to_string()));
            row.extend([
                r.q_tilde.to_string(),
                opt(r.q_exact),
                opt(r.kkt_residual),
                opt(r.optimality_gap),
                r.nu.to_string(),
                r.direction_norm.to_string(),
                r.wall_time_seconds.to_string(),
                r.workspace_floats.to_string(),
            ]);
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| ForumError::io("<trace buffer>", e))?;
    }
    Ok(buf)
}

/// A trace file read back with its provenance.
#[derive(Debug, Clone)]
pub struct TraceFile {
    pub config_sha256: String,
    pub id: RunId,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_trace_csv(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| ForumError::io(path, e))?;
    let mut sha = None;
    let mut seed = None;
    let mut init = None;
    let mut config = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("config_sha256:") {
            sha = Some(v.trim().to_string());
        } else if let Some(v) = body.strip_prefix("seed:") {
            seed = v.trim().parse::<u64>().ok();
        } else if let Some(v) = body.strip_prefix("init:") {
            init = v.trim().parse::<usize>().ok();
        } else if let Some(v) = body.strip_prefix("config:") {
            config = Some(ExperimentConfig::from_json(v.trim())?);
        }
    }
    let missing = |what: &str| ForumError::Config(format!("{}: missing `{what}` header", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns = reader.headers()?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(TraceFile {
        config_sha256: sha.ok_or_else(|| missing("config_sha256"))?,
        id: RunId {
            seed: seed.ok_or_else(|| missing("seed"))?,
            init: init.ok_or_else(|| missing("init"))?,
        },
        config: config.ok_or_else(|| missing("config"))?,
        columns,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = linalg::mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub init: usize,
    pub trace_path: PathBuf,
    pub verdict: StopVerdict,
    /// Final optimality gap below the configured threshold; `None` when the gap is unavailable.
    pub reached_threshold: Option<bool>,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub problem: String,
    pub method: String,
    pub runs: Vec<RunSummary>,
    /// Mean and sample standard deviation over runs, keyed by metric name.
    pub aggregates: std::collections::BTreeMap<String, MeanStd>,
}

impl ExperimentSummary {
    pub fn all_reached_threshold(&self) -> Option<bool> {
        self.runs
            .iter()
            .map(|r| r.reached_threshold)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.iter().all(|b| *b))
    }
}

pub fn trace_path(cfg: &ExperimentConfig, out_dir: &Path, id: RunId) -> PathBuf {
    out_dir.join(format!("{}_seed{}_init{}.csv", cfg.output.name, id.seed, id.init))
}

pub fn summary_path(cfg: &ExperimentConfig, out_dir: &Path) -> PathBuf {
    out_dir.join(format!("{}_summary.json", cfg.output.name))
}

/// Runs every `(seed, init)` pair on its own thread and writes one trace CSV
/// per run plus the summary JSON into `out_dir`.
///
/// A diverged run still gets its partial trace written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    // Capability and dimension checks for every run happen before any compute.
    for &seed in &cfg.seeds {
        let built = super::experiment::BuiltProblem::build(&cfg.problem, seed)?;
        super::experiment::check_method(built.as_dyn(), cfg.method)?;
        for init in 0..cfg.init_count() {
            super::experiment::initial_point(cfg, built.as_dyn(), seed, init)?;
        }
    }
    let ids: Vec<RunId> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| (0..cfg.init_count()).map(move |init| RunId { seed, init }))
        .collect();
    let results: Vec<Result<(super::experiment::BuiltProblem, RunOutput)>> = std::thread::scope(|s| {
        let handles: Vec<_> = ids.iter().map(|&id| s.spawn(move || run_single(cfg, id))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });

    let mut runs = Vec::with_capacity(ids.len());
    let mut problem_name = String::new();
    for (id, result) in ids.iter().zip(results) {
        let path = trace_path(cfg, out_dir, *id);
        let (built, out) = match result {
            Ok(v) => v,
            Err(ForumError::Divergence { iteration, partial }) => {
                let m = partial.records.first().map(|r| r.f_values.len()).unwrap_or(0);
                write_atomic(&path, &trace_csv(cfg, *id, m, &partial)?)?;
                return Err(ForumError::Divergence { iteration, partial });
            }
            Err(e) => return Err(e),
        };
        let problem = built.as_dyn();
        problem_name = problem.name().to_string();
        write_atomic(&path, &trace_csv(cfg, *id, problem.dims().m, &out.trace)?)?;
        let final_metrics = final_metrics(&built, &out)?;
        runs.push(RunSummary {
            seed: id.seed,
            init: id.init,
            trace_path: path,
            verdict: out.verdict,
            reached_threshold: final_metrics.optimality_gap.map(|e| e < cfg.threshold),
            final_metrics,
        });
    }

    let summary = ExperimentSummary {
        config: cfg.clone(),
        config_sha256: cfg.sha256(),
        problem: problem_name,
        method: cfg.method.as_str().to_string(),
        aggregates: aggregates(&runs),
        runs,
    };
    let json = serde_json::to_vec_pretty(&summary)?;
    write_atomic(&summary_path(cfg, out_dir), &json)?;
    Ok(summary)
}

fn aggregates(runs: &[RunSummary]) -> std::collections::BTreeMap<String, MeanStd> {
    let mut out = std::collections::BTreeMap::new();
    let mut add = |name: String, values: Vec<f64>| {
        if !values.is_empty() && values.len() == runs.len() {
            out.insert(name, MeanStd::of(&values));
        }
    };
    let fm: Vec<&FinalMetrics> = runs.iter().map(|r| &r.final_metrics).collect();
    if let Some(first) = fm.first() {
        for i in 0..first.f_values.len() {
            add(format!("F_{}", i + 1), fm.iter().map(|f| f.f_values[i]).collect());
        }
    }
    add("q_exact".into(), fm.iter().filter_map(|f| f.q_exact).collect());
    add(
        "kkt_residual".into(),
        fm.iter().filter_map(|f| f.kkt_residual).collect(),
    );
    add(
        "optimality_gap".into(),
        fm.iter().filter_map(|f| f.optimality_gap).collect(),
    );
    add(
        "total_wall_time_s".into(),
        fm.iter().map(|f| f.total_wall_time_s).collect(),
    );
    let reports: Vec<_> = fm.iter().filter_map(|f| f.hyperclean.as_ref()).collect();
    add(
        "mean_test_accuracy".into(),
        reports.iter().map(|r| r.mean_test_accuracy()).collect(),
    );
    add(
        "mean_weight_clean".into(),
        reports.iter().map(|r| r.mean_weight_clean).collect(),
    );
    add(
        "mean_weight_corrupt".into(),
        reports.iter().map(|r| r.mean_weight_corrupt).collect(),
    );
    add(
        "mean_test_macro_f1".into(),
        reports
            .iter()
            .map(|r| r.test_macro_f1.iter().sum::<f64>() / r.test_macro_f1.len() as f64)
            .collect(),
    );
    out
}
