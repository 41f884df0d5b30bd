//! Mixed-variable batch Bayesian optimization.
//!
//! A single trust region drives the search. A GP surrogate with a mixture
//! kernel over continuous, integer and qualitative blocks ranks candidates,
//! an SVM partition of the history steers candidates and restarts toward the
//! promising region, and per-variable Thompson-sampling bandits pick
//! categories.

pub mod arp;
pub mod bandit;
pub mod bench;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod space;
pub mod surrogate;
pub mod turbo;

pub use error::{Error, Result};
pub use optimizer::{Optimizer, OptimizerConfig};
pub use space::{ParamSpec, Point, SearchSpace, Value};
