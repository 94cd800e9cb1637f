//! Episodic reinforcement learning in linear mixture MDPs with a pluggable
//! regularizer, including a binary-tree Gaussian-noise privatizer.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
// Negated comparisons double as NaN rejection in argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod agents;
pub mod benchmark;
pub mod calib;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod mdp;
pub mod regularizer;
pub mod tree;

pub use agents::{run_po, run_vi, AgentConfig, RunOutcome};
pub use calib::{AccountingReport, NoiseCalibration, PrivacyBudget};
pub use error::{Error, Result};
pub use estimation::{ConfidenceParams, Regularity, StreamRegularity, Widths};
pub use mdp::{LinearMixtureMdp, MixtureParts, Policy, Trajectory};
pub use regularizer::{FixedRidge, Privatizer, Regularizer};
pub use tree::NoisyPSumTree;
