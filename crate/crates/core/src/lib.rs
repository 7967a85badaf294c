//! Hyperparameter optimization over stochastic expression graphs.
//!
//! The crate has five parts:
//!
//! - [`space`]: a small expression language for describing search spaces as
//!   directed acyclic graphs of stochastic and deterministic nodes, including
//!   conditional `choice` nodes.
//! - [`trialdb`]: an append-only store for evaluated trials, backed by a
//!   JSON-lines file so concurrent workers can share one history.
//! - [`tpe`]: the optimizers — random search and a Tree-of-Parzen-Estimators
//!   algorithm that models good and bad trials with weighted kernel densities
//!   and suggests the candidate maximizing their ratio.
//! - [`pipeline`]: a feed-forward image classification model family (filter
//!   bank normalized cross-correlation, pooling, normalization, rectified
//!   histograms, a linear SVM) used as a realistic loss function.
//! - [`run`]: the experiment runner, built-in loss registry, and convergence
//!   reports.

// parameter guards use `!(x > 0.0)` so NaN is rejected along with the
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod pipeline;
pub mod run;
pub mod space;
pub mod tpe;
pub mod trialdb;

pub use space::{Assignment, ExprGraph, Value};
pub use tpe::HpoaConfig;
pub use trialdb::{Trial, TrialStatus, TrialStore};
