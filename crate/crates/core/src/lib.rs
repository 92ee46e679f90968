//! Level-k driver models for highway merging: simulator, rule-based
//! level-0 drivers, deep Q-learning of level-1..3 and dynamic policies,
//! evaluation harness and trajectory statistics.

pub mod config;
pub mod dqn;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod level0;
pub mod nnet;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod stats;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use policy::PolicyId;
