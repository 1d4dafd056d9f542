//! Simulation engine for federated class-incremental continual learning on
//! human-activity signals.
//!
//! The crate models a FedAvg loop in which each client walks through a
//! private sequence of class-disjoint tasks. Local training can run plain
//! fine-tuning or distillation against one teacher (the client's previous
//! round model) or two teachers (previous model plus the current server
//! model). Everything is driven by a single master seed: data partitioning,
//! weight initialization, batch order, dropout masks and exemplar sampling
//! all derive from it, so a run is reproducible byte for byte.
//!
//! Modules map onto the moving parts:
//!
//! - [`nn`] — the fixed 1D CNN (196 conv filters of length 16, 1x4 max
//!   pooling, 1024-unit dense layer, 6-way output) with analytic
//!   backpropagation and SGD.
//! - [`losses`] — softmax cross-entropy, temperature-scaled distillation and
//!   their weighted combinations, each with gradients on the student logits.
//! - [`federated`] — client updates, dataset-size-weighted aggregation, the
//!   round loop and the full experiment driver.
//! - [`continual`] — task sequences, the two client scenarios, exemplar
//!   memory and per-round dataset composition.
//! - [`data`] — raw-signal ingestion (UCI HAR layout), synthetic stand-in
//!   generation, disjoint experiment partitioning and the binary cache.
//! - [`metrics`] — accuracy/forgetting metrics and the last-layer PCA export.
//! - [`config`] / [`report`] — the TOML experiment schema and the on-disk
//!   result artifacts.

pub mod centralized;
pub mod config;
pub mod continual;
pub mod data;
pub mod error;
pub mod federated;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod seeding;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
