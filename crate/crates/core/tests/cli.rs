use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forum_core::harness::{
    compare_methods, read_trace_csv, run_single, trace_columns, trace_csv, write_compare_csv, ExperimentConfig,
    ExperimentSummary, RunId, EXIT_CAPABILITY, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, NOT_REACHED,
};

fn forum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forum"))
        .args(args)
        .output()
        .expect("failed to launch forum binary")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn synthetic_json(method: &str, iterations: usize, mu: f64) -> String {
    format!(
        r#"{{
  "problem": {{ "kind": "synthetic" }},
  "method": "{method}",
  "solver": {{ "iterations": {iterations}, "ll_steps": 50, "mu": {mu}, "eta": 0.05, "rho": 0.3 }},
  "init": {{ "kind": "points", "points": [
    {{ "alpha": [0.0], "omega": [0.0, 3.0] }},
    {{ "alpha": [2.0], "omega": [3.0, 3.0] }}
  ] }},
  "output": {{ "name": "syn" }}
}}"#
    )
}

fn hyperclean_json(method: &str, seeds: &str) -> String {
    format!(
        r#"{{
  "problem": {{ "kind": "hyperclean", "train_size": 40, "val_size": 20, "test_size": 20 }},
  "method": "{method}",
  "solver": {{ "iterations": 20, "ll_steps": 4, "eta": 0.3, "rho": 0.5,
               "block_steps": {{ "alpha": 10.0, "omega": 0.3 }} }},
  "seeds": {seeds},
  "output": {{ "name": "hc" }}
}}"#
    )
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn run_writes_traces_with_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "syn.json", &synthetic_json("forum", 200, 0.3));
    let out = forum(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    for init in 0..2 {
        let trace = read_trace_csv(&dir.path().join(format!("syn_seed0_init{init}.csv"))).unwrap();
        assert_eq!(trace.columns, trace_columns(2));
        assert_eq!(
            trace.columns.join(","),
            "k,F_1,F_2,q_tilde,q_exact,kkt_residual,optimality_gap,nu,direction_norm,wall_time_s,workspace_floats"
        );
        assert_eq!(trace.rows.len(), 200);
        assert_eq!(trace.id, RunId { seed: 0, init });
        assert_eq!(trace.config_sha256, trace.config.sha256());
    }
    let summary: ExperimentSummary =
        serde_json::from_slice(&std::fs::read(dir.path().join("syn_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.runs.len(), 2);
    assert_eq!(summary.method, "forum");
    assert!(summary.aggregates.contains_key("optimality_gap"));
}

#[test]
fn embedded_config_reproduces_the_trace_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "syn.json", &synthetic_json("forum", 100, 0.3));
    let out = forum(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK);

    let stored = read_trace_csv(&dir.path().join("syn_seed0_init1.csv")).unwrap();
    let (_, rerun) = run_single(&stored.config, stored.id).unwrap();
    let bytes = trace_csv(&stored.config, stored.id, 2, &rerun.trace).unwrap();
    let fresh_path = dir.path().join("rerun.csv");
    std::fs::write(&fresh_path, bytes).unwrap();
    let fresh = read_trace_csv(&fresh_path).unwrap();

    let wall = stored.columns.iter().position(|c| c == "wall_time_s").unwrap();
    assert_eq!(stored.config_sha256, fresh.config_sha256);
    assert_eq!(stored.rows.len(), fresh.rows.len());
    for (a, b) in stored.rows.iter().zip(&fresh.rows) {
        for (col, (x, y)) in a.iter().zip(b).enumerate() {
            if col != wall {
                assert_eq!(x, y, "column {}", stored.columns[col]);
            }
        }
    }
}

#[test]
fn workspace_counts_are_identical_across_runs() {
    let cfg = ExperimentConfig::from_json(&hyperclean_json("forum", "[5]")).unwrap();
    let id = RunId { seed: 5, init: 0 };
    let (_, a) = run_single(&cfg, id).unwrap();
    let (_, b) = run_single(&cfg, id).unwrap();
    let floats = |t: &forum_core::Trace| t.records.iter().map(|r| r.workspace_floats).collect::<Vec<_>>();
    assert_eq!(floats(&a.trace), floats(&b.trace));
}

#[test]
fn hyperclean_seeds_aggregate_into_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hc.json", &hyperclean_json("forum", "[1, 2, 3]"));
    let out = forum(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: ExperimentSummary =
        serde_json::from_slice(&std::fs::read(dir.path().join("hc_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    let acc = summary.aggregates["mean_test_accuracy"];
    assert!(acc.mean > 0.0 && acc.mean <= 1.0);
    assert!(acc.std >= 0.0);
    // Hyperclean has no optimality gap, so no threshold verdict exists.
    assert_eq!(summary.all_reached_threshold(), None);
}

#[test]
fn seed_flag_overrides_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hc.json", &hyperclean_json("forum", "[1, 2, 3]"));
    let d = dir.path().to_str().unwrap();
    let out = forum(&["run", cfg.to_str().unwrap(), "--out-dir", d, "--seed", "9", "--quiet"]);
    assert_eq!(code(&out), EXIT_OK);
    assert!(dir.path().join("hc_seed9_init0.csv").exists());
    assert!(!dir.path().join("hc_seed1_init0.csv").exists());
}

#[test]
fn invalid_method_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &synthetic_json("gradient_magic", 10, 0.3));
    let out = forum(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_CONFIG);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gradient_magic") && err.contains("line"), "{err}");
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let json = synthetic_json("forum", 10, 0.3).replace("\"mu\"", "\"learning_rate\"");
    let cfg = write_config(dir.path(), "bad.json", &json);
    let out = forum(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn capability_mismatch_is_reported_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hc.json", &hyperclean_json("moml_exact", "[1]"));
    let out = forum(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_CAPABILITY);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exact_ll_solution"));
    let written: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(written, vec![std::ffi::OsString::from("hc.json")]);
}

#[test]
fn divergence_exits_with_code_three_and_keeps_the_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "syn.json", &synthetic_json("forum", 50, 1e300));
    let out = forum(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_DIVERGENCE, "{}", String::from_utf8_lossy(&out.stderr));
    let partial = read_trace_csv(&dir.path().join("syn_seed0_init0.csv")).unwrap();
    assert!(partial.rows.len() < 50);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = forum(&["run", "/nonexistent/forum.json"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_subcommand_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "syn.json", &synthetic_json("forum", 10, 0.3));
    let out = forum(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7, "{text}");
}

#[test]
fn bench_complexity_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bench.json",
        r#"{ "t_values": [1, 8], "p_values": [50], "output_name": "cx" }"#,
    );
    let out = forum(&[
        "bench-complexity",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cx.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: "));
    assert_eq!(
        lines.next().unwrap(),
        "method,T,p,mean_time_s,std_time_s,peak_workspace_floats,timed_iterations"
    );
    assert_eq!(lines.count(), 4);
    assert!(dir.path().join("cx.json").exists());
}

#[test]
fn bench_complexity_rejects_too_few_timed_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bench.json", r#"{ "timed": 3 }"#);
    let out = forum(&[
        "bench-complexity",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), EXIT_CONFIG);
}

#[test]
fn compare_forum_and_moml_exact_on_synthetic() {
    let configs: Vec<ExperimentConfig> = ["forum", "moml_exact"]
        .iter()
        .map(|m| ExperimentConfig::from_json(&synthetic_json(m, 2000, 0.3)).unwrap())
        .collect();
    let rows = compare_methods(&configs).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.final_optimality_gap.unwrap() < 1e-2, "{r:?}");
        assert!(r.iterations_to_threshold.is_some());
    }
}

#[test]
fn compare_single_config_gives_one_row_and_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&synthetic_json("forum", 3, 0.3)).unwrap();
    let rows = compare_methods(&[cfg]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].iterations_to_threshold, None);
    let path = dir.path().join("cmp.csv");
    write_compare_csv(&rows, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("forum,") && lines[1].contains(NOT_REACHED));
}

#[test]
fn compare_rejects_mismatched_problems() {
    let a = ExperimentConfig::from_json(&synthetic_json("forum", 3, 0.3)).unwrap();
    let b = ExperimentConfig::from_json(&hyperclean_json("forum", "[0]")).unwrap();
    let err = compare_methods(&[a, b]).unwrap_err();
    assert!(matches!(err, forum_core::ForumError::Config(_)));
}

#[test]
fn compare_subcommand_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let single = synthetic_json("moml_unrolled", 50, 0.3);
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        &format!(r#"{{ "output_name": "table", "experiments": [{single}] }}"#),
    );
    let out = forum(&[
        "compare",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}
