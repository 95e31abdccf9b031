use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use forum_core::harness::{
    self, benchmark_complexity, compare_methods, exit_code, run_experiment, write_compare_csv, write_complexity_report,
    BenchmarkConfig, BuiltProblem, CompareConfig, ExperimentConfig,
};
use forum_core::{validate_problem, ForumError, Result};

#[derive(Debug, Parser)]
#[command(name = "forum", version, about = "Multi-objective bi-level optimization experiments")]
struct Cli {
    /// Directory for every output file; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write trace CSVs plus a summary JSON.
    Run { config: PathBuf },
    /// Time per-iteration cost and workspace over a grid of T and p.
    BenchComplexity { config: PathBuf },
    /// Run several experiments on one problem and write a side-by-side CSV.
    Compare { config: PathBuf },
    /// Check the problem oracles against finite differences.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn apply_overrides(cli: &Cli, mut cfg: ExperimentConfig) -> ExperimentConfig {
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.clone();
    }
    cfg
}

fn say(cli: &Cli, text: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", text.as_ref());
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = apply_overrides(cli, ExperimentConfig::from_path(config)?);
            let summary = run_experiment(&cfg, &cfg.output.dir)?;
            for run in &summary.runs {
                say(cli, format!("wrote {}", run.trace_path.display()));
            }
            say(
                cli,
                format!("wrote {}", harness::summary_path(&cfg, &cfg.output.dir).display()),
            );
            say(cli, serde_json::to_string_pretty(&summary.aggregates)?);
            Ok(harness::EXIT_OK)
        }
        Command::BenchComplexity { config } => {
            let mut cfg: BenchmarkConfig = read_json(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let report = benchmark_complexity(&cfg)?;
            write_complexity_report(&report, &out_dir)?;
            for s in &report.slopes {
                say(
                    cli,
                    format!(
                        "{:<14} p={:<6} time/T={:.3e}s floats/T={:.1}",
                        s.method.as_str(),
                        s.p,
                        s.time_per_step,
                        s.floats_per_step
                    ),
                );
            }
            Ok(harness::EXIT_OK)
        }
        Command::Compare { config } => {
            let mut cfg = CompareConfig::from_path(config)?;
            cfg.experiments = cfg.experiments.into_iter().map(|e| apply_overrides(cli, e)).collect();
            let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let rows = compare_methods(&cfg.experiments)?;
            let path = out_dir.join(format!("{}.csv", cfg.output_name));
            write_compare_csv(&rows, &path)?;
            say(cli, format!("wrote {}", path.display()));
            Ok(harness::EXIT_OK)
        }
        Command::Validate { config } => {
            let cfg = apply_overrides(cli, ExperimentConfig::from_path(config)?);
            let mut all_passed = true;
            for &seed in &cfg.seeds {
                let built = BuiltProblem::build(&cfg.problem, seed)?;
                let report = validate_problem(built.as_dyn(), cfg.validate_samples, seed)?;
                for c in &report.checks {
                    say(
                        cli,
                        format!(
                            "{} {:<38} worst {:.3e} (tol {:.0e})",
                            if c.passed { "PASS" } else { "FAIL" },
                            c.name,
                            c.worst_error,
                            c.tolerance
                        ),
                    );
                }
                all_passed &= report.passed();
            }
            Ok(if all_passed {
                harness::EXIT_OK
            } else {
                harness::EXIT_OTHER
            })
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ForumError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| ForumError::Config(format!("{}: {e}", path.display())))
}
