//! K-order ranking preference optimization over tabular softmax policies.
//!
//! A policy assigns each candidate of a query an unconstrained parameter and
//! normalizes them with a softmax. Rewards are β-scaled log-ratios against a
//! frozen reference policy, and the losses in [`loss`] turn ranked candidate
//! lists into training signal.

pub mod adaptive_k;
pub mod config;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod numeric;
pub mod policy;
pub mod prefmodel;
pub mod seed;
pub mod theory;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use policy::PolicyTable;
pub use seed::Seed;
pub use types::{Dataset, PreferenceSample, RankingInstance, Split};
