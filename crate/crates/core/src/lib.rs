//! Reward model, workload fitting and mining simulation for studying how
//! unrewarded block verification shifts mining income.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the simulator and file
//! formats use.

// NaN must fail validation, hence `!(x > 0)` rather than `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod gmm;
pub mod scalar;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GmmModel = gmm::GaussianMixture<f64>;
pub type ForestModel = forest::RandomForest<f64>;
pub type RegressionTree = forest::RegressionTree<f64>;
pub type PowerProfile = analytics::PowerProfile<f64>;
pub type MinerPower = analytics::MinerPower<f64>;
pub type VerificationParams = analytics::VerificationParams<f64>;
pub type RewardRow = analytics::RewardRow<f64>;
pub type RegressionMetrics = stats::RegressionMetrics<f64>;
