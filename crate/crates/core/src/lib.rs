//! Filtered prediction-powered inference.
//!
//! Semi-supervised estimators that combine a small labeled sample with
//! model predictions on a large unlabeled sample, using the predictions only
//! inside a region where they agree in sign with the (centered) regression
//! function. Covers mean estimation, canonical GLMs, region estimation and a
//! reproducible Monte Carlo harness.

pub mod cli;
pub mod csvio;
pub mod data;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod mean;
pub mod normal;
pub mod oracles;
pub mod region;
pub mod rng;
pub mod sim;

pub use data::{
    IntervalEstimate, LabeledDataset, PredictionSource, Region, RowFn, SemiSupervised, UnlabeledDataset,
};
pub use error::{FppiError, Result};
pub use glm::{GlmFamily, GlmFppiResult, OptimizerOptions};
pub use linalg::Matrix;
pub use mean::{MeanDiagnostics, MeanFppiResult};
pub use oracles::OracleSpec;
