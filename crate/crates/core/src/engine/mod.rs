//! Hyperparameter fitting and prediction.

pub mod config;
pub mod dataset;
pub mod model;
pub mod optimize;

pub use config::{OptConfig, OptMethod, Param, TrendConfig, TrendMode};
pub use dataset::{Dataset, Standardization, Standardize};
pub use model::{fit, log_pseudo_likelihood, Prediction, RestartRecord, TrainedModel, TrendFit};
