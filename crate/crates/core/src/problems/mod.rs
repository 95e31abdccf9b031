//! Shipped problems.

mod hyperclean;
mod quadratic;
mod synthetic;

pub use hyperclean::{sigmoid, weight_summary, Hyperclean, HypercleanReport, HypercleanSpec, Split};
pub use quadratic::{QuadraticSpec, RandomQuadratic};
pub use synthetic::{dist_to_pareto, SyntheticMoblo};
