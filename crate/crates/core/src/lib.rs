//! Non-intrusive reduced-order forecasting of structured-grid scalar fields.
//!
//! The pipeline compresses snapshot time series with a convolutional
//! autoencoder (plain CAE or the extended E-CAE with stacked conv blocks and
//! dense layers), learns the latent dynamics with a leaky echo-state network
//! whose readout is trained by closed-form ridge regression, and forecasts
//! future fields autoregressively. Errors are reported as per-time relative
//! L2 percentages split into reconstruction and prediction phases.

pub mod bench;
pub mod binio;
pub mod cae;
pub mod config;
pub mod error;
pub mod esn;
pub mod grid;
pub mod nn;
pub mod pipeline;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
