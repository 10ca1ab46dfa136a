//! End-to-end trainable global-minimum-variance estimation.
//!
//! A learnable lag transform, a bidirectional LSTM over the sorted sample
//! spectrum and a per-asset volatility MLP are assembled into an inverse
//! covariance estimate whose GMV weights are trained on out-of-sample
//! realized variance. Classical cleaners, a frictionless backtester and a
//! broker-account simulator share the same data model.

pub mod autodiff;
pub mod backtest;
pub mod broker;
pub mod cleaner;
pub mod error;
pub mod estimators;
pub mod gmv;
pub mod lag;
pub mod linalg;
pub mod model;
pub mod panel;
pub mod rng;
pub mod strategy;
pub mod train;
pub mod volnet;

pub use autodiff::{Tape, Tensor, Var};
pub use cleaner::BiLstmParams;
pub use error::{Error, Result};
pub use gmv::{Constraint, PortfolioWeights, PrecisionEstimate};
pub use lag::LagParams;
pub use linalg::SpectralDecomp;
pub use model::ModelParams;
pub use volnet::VolMlpParams;
