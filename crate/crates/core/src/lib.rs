//! Multi-objective bi-level optimization with a value-function constraint.
//!
//! The solver works on `z = (alpha, omega)`: it approximates the lower-level
//! solution with a few gradient steps, turns lower-level optimality into the
//! constraint `q(z) <= 0`, and moves `z` along a direction that decreases all
//! upper-level objectives while decreasing `q`.

pub mod baselines;
pub mod config;
pub mod direction;
pub mod driver;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lower_level;
pub mod problem;
pub mod problems;
pub mod rng;
pub mod validate;
pub mod workspace;

pub use config::{beta_schedule, BlockSteps, ForumConfig, QpConfig, StopConfig};
pub use driver::{forum_step, kkt_residual, run_forum, stopping_check, IterateRecord, RunOutput, StopVerdict, Trace};
pub use error::{ForumError, Result};
pub use problem::{AssumptionConstants, Capabilities, DecisionPoint, Dims, Problem, SimplexWeights};
pub use validate::{validate_problem, ValidationReport};
