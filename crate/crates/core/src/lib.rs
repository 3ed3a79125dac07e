//! Stochastic bandits whose actions reveal a post-action context before the
//! reward.
//!
//! - [`environment`]: discrete environments, benign and worst-case generators
//! - [`stats`]: sufficient statistics and confidence indices
//! - [`policies`]: UCB, C-UCB, HAC-UCB and a Corral baseline
//! - [`harness`]: seeded Monte Carlo replicates and regret curves
//! - [`causal_graph`]: d-separation, mutilation and front-door checks

pub mod causal_graph;
pub mod environment;
pub mod error;
pub mod harness;
pub mod policies;
pub mod stats;

pub use environment::{Environment, MarginalTable, RewardLaw};
pub use error::{Error, Result};
pub use policies::{Policy, PolicySpec};
