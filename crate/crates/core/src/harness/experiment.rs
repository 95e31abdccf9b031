use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{require_capabilities, run_moml, MomlMode};
use crate::config::ForumConfig;
use crate::driver::{run_forum, RunOutput};
use crate::error::{ForumError, Result};
use crate::lower_level::exact_constraint;
use crate::problem::{DecisionPoint, Problem};
use crate::problems::{Hyperclean, HypercleanReport, HypercleanSpec, QuadraticSpec, RandomQuadratic, SyntheticMoblo};
use crate::rng;

/// Problem selector. Seeded problems take their seed from the run, not from the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Synthetic,
    RandomQuadratic { n: usize, p: usize, m: usize },
    Hyperclean(HypercleanSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Forum,
    MomlExact,
    MomlUnrolled,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Forum => "forum",
            Method::MomlExact => "moml_exact",
            Method::MomlUnrolled => "moml_unrolled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initialization {
    #[default]
    Zeros,
    /// Each point is a separate run.
    Points { points: Vec<DecisionPoint> },
    /// Standard normal entries times `scale`, drawn from the run seed.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File-name prefix for every output of the experiment.
    pub name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            name: "experiment".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: Method,
    #[serde(default)]
    pub solver: ForumConfig,
    #[serde(default)]
    pub init: Initialization,
    /// One repeat per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Optimality-gap threshold used for verdicts and iterations-to-threshold.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Points sampled by the `validate` subcommand.
    #[serde(default = "default_validate_samples")]
    pub validate_samples: usize,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_threshold() -> f64 {
    1e-2
}

fn default_validate_samples() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ForumError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ForumError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            ForumError::Config(msg) => ForumError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(ForumError::Config("seeds must be non-empty".into()));
        }
        if let Initialization::Points { points } = &self.init {
            if points.is_empty() {
                return Err(ForumError::Config("init.points must be non-empty".into()));
            }
            if points.iter().any(|p| !p.is_finite()) {
                return Err(ForumError::Config("init.points has non-finite entries".into()));
            }
        }
        if let Initialization::Random { scale } = self.init {
            if !(scale.is_finite() && scale >= 0.0) {
                return Err(ForumError::Config("init.scale must be finite and >= 0".into()));
            }
        }
        if let ProblemSpec::RandomQuadratic { n, p, m } = self.problem {
            if n == 0 || p == 0 || m == 0 {
                return Err(ForumError::Config("random_quadratic dimensions must be >= 1".into()));
            }
        }
        if let ProblemSpec::Hyperclean(spec) = &self.problem {
            spec.validate()?;
        }
        self.solver.validate_steps()
    }

    /// Compact JSON; its SHA-256 identifies the experiment.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_line().as_bytes()))
    }

    pub fn init_count(&self) -> usize {
        match &self.init {
            Initialization::Points { points } => points.len(),
            _ => 1,
        }
    }
}

/// A constructed problem instance.
#[derive(Debug, Clone)]
pub enum BuiltProblem {
    Synthetic(SyntheticMoblo),
    Quadratic(RandomQuadratic),
    Hyperclean(Hyperclean),
}

impl BuiltProblem {
    pub fn build(spec: &ProblemSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ProblemSpec::Synthetic => BuiltProblem::Synthetic(SyntheticMoblo),
            ProblemSpec::RandomQuadratic { n, p, m } => {
                BuiltProblem::Quadratic(RandomQuadratic::random(QuadraticSpec {
                    seed,
                    n: *n,
                    p: *p,
                    m: *m,
                }))
            }
            ProblemSpec::Hyperclean(spec) => {
                BuiltProblem::Hyperclean(Hyperclean::generate(HypercleanSpec { seed, ..spec.clone() })?)
            }
        })
    }

    pub fn as_dyn(&self) -> &dyn Problem {
        match self {
            BuiltProblem::Synthetic(p) => p,
            BuiltProblem::Quadratic(p) => p,
            BuiltProblem::Hyperclean(p) => p,
        }
    }
}

/// Fails before any compute when `method` needs oracles the problem lacks.
pub fn check_method(problem: &dyn Problem, method: Method) -> Result<()> {
    match method {
        Method::Forum => Ok(()),
        Method::MomlExact => require_capabilities(problem, MomlMode::Exact),
        Method::MomlUnrolled => require_capabilities(problem, MomlMode::Unrolled),
    }
}

pub fn initial_point(
    cfg: &ExperimentConfig,
    problem: &dyn Problem,
    seed: u64,
    init_index: usize,
) -> Result<DecisionPoint> {
    let dims = problem.dims();
    let z = match &cfg.init {
        Initialization::Zeros => DecisionPoint::zeros(dims),
        Initialization::Points { points } => points
            .get(init_index)
            .cloned()
            .ok_or_else(|| ForumError::Config(format!("no initialization with index {init_index}")))?,
        Initialization::Random { scale } => {
            let mut r = rng::seeded(rng::derive_seed(seed, 0x494e_4954));
            let flat: Vec<f64> = rng::normal_vec(&mut r, dims.z_len())
                .iter()
                .map(|v| v * scale)
                .collect();
            DecisionPoint::from_flat(dims.n, &flat)
        }
    };
    z.check_dims(dims)?;
    Ok(z)
}

/// Identifies one run inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunId {
    pub seed: u64,
    pub init: usize,
}

/// Runs `(seed, init)` of `cfg`; the solver seed is set to the run seed.
pub fn run_single(cfg: &ExperimentConfig, id: RunId) -> Result<(BuiltProblem, RunOutput)> {
    let built = BuiltProblem::build(&cfg.problem, id.seed)?;
    let problem = built.as_dyn();
    check_method(problem, cfg.method)?;
    let z0 = initial_point(cfg, problem, id.seed, id.init)?;
    let solver = ForumConfig {
        seed: id.seed,
        ..cfg.solver.clone()
    };
    let out = match cfg.method {
        Method::Forum => run_forum(problem, &z0, &solver)?,
        Method::MomlExact => run_moml(problem, &z0, MomlMode::Exact, &solver)?,
        Method::MomlUnrolled => run_moml(problem, &z0, MomlMode::Unrolled, &solver)?,
    };
    Ok((built, out))
}

/// Metrics at the returned point, plus the last record's stationarity value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub f_values: Vec<f64>,
    pub q_exact: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub iterations: usize,
    pub max_q_exact: Option<f64>,
    pub total_wall_time_s: f64,
    pub hyperclean: Option<HypercleanReport>,
}

pub fn final_metrics(built: &BuiltProblem, out: &RunOutput) -> Result<FinalMetrics> {
    let problem = built.as_dyn();
    let z = &out.final_point;
    let q_exact = if problem.capabilities().exact_solution {
        Some(exact_constraint(problem, z)?.q)
    } else {
        None
    };
    Ok(FinalMetrics {
        f_values: (0..problem.dims().m)
            .map(|i| problem.ul_value(i, &z.alpha, &z.omega))
            .collect(),
        q_exact,
        kkt_residual: out.trace.last().and_then(|r| r.kkt_residual),
        optimality_gap: problem.optimality_gap(&z.alpha, &z.omega),
        iterations: out.trace.len(),
        max_q_exact: out.trace.max_q_exact(),
        total_wall_time_s: out.trace.total_wall_time(),
        hyperclean: match built {
            BuiltProblem::Hyperclean(h) => Some(h.report(z)),
            _ => None,
        },
    })
}
