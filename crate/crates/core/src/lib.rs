//! Unsupervised representation learning for surgical activity recognition.
//!
//! A sequence model is first fit to unlabeled robot kinematics; its hidden
//! states then feed a bidirectional LSTM that labels every frame. The crate
//! provides the numerical kernels, the models with exact gradients, the
//! evaluation protocol and metrics, and a synthetic data generator.

pub mod cli;
pub mod data;
pub mod error;
pub mod lstm;
pub mod math;
pub mod mdn;
pub mod metrics;
pub mod models;
pub mod optim;

pub use error::{Error, Result};
