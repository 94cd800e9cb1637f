//! Experiment harness for the `privlin-core` agents: JSON configs and MDP
//! files, seeded parallel runs, regret CSVs and cross-run summaries.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod mdp_json;

pub use config::{AgentKind, MdpSource, RegularizerSpec, RunConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_seed, RegretLog};
