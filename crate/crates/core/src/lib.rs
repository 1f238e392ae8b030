//! Predicting 40-band EQ curves from semantic descriptors.
//!
//! A word is turned into a frozen pre-trained embedding (or a one-hot
//! vector for the baseline) and fed to a fixed dense network whose sigmoid
//! outputs are the band gains mapped from ±4 dB onto [0, 1]. The crate also
//! covers dataset ingestion and word-disjoint folds, curve metrics
//! (mean absolute error and Partial Curve Mapping), the cross-validation
//! experiment, and rendering predicted curves onto audio.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod fsutil;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type EmbeddingTable = embedding::EmbeddingTable<f64>;
pub type EmbeddingTable32 = embedding::EmbeddingTable<f32>;
pub type EmbeddingVector = embedding::EmbeddingVector<f64>;
pub type Curve2D = metrics::Curve2D<f64>;
pub type Prediction = nn::Prediction<f64>;
pub type Sample = nn::Sample<f64>;
