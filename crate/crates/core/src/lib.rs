//! Event-based electrical appliance recognition.
//!
//! The crate covers the whole chain from a per-appliance power trace to a
//! benchmark report:
//!
//! - [`events`] finds switch-on/off events with hysteresis thresholds and cuts
//!   fixed-length startup segments out of a high-rate aggregate waveform.
//! - [`ingest`] reads and writes segment files and synthesizes appliance-like
//!   startup transients for desk-scale experiments.
//! - [`features`] computes hand-crafted electrical features, the per-cycle RMS
//!   vector and random sub-sampling of the raw current.
//! - [`transform`] holds the normalizers and PCA, fitted on training data only.
//! - [`classify`] implements KNN, LDA, a linear one-vs-one SVM and a Gini
//!   decision tree.
//! - [`nn`] is a small neural network engine with the autoencoder,
//!   convolutional autoencoder and end-to-end CNN builders.
//! - [`eval`] splits datasets, computes macro metrics and confusion matrices,
//!   and drives the seven-model benchmark.
//!
//! Every stochastic step takes an explicit [`Rng`], so a seed pins a run.

pub mod classify;
pub mod domain;
pub mod error;
pub mod eval;
pub mod events;
pub mod features;
pub mod ingest;
mod linalg;
pub mod nn;
pub mod rng;
pub mod transform;

pub use domain::{EventSegment, LabeledDataset, SamplingContext};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use rng::Rng;
