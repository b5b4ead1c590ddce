//! Sharded, checkpointed ensemble training over multimodal mobility trip
//! logs, with exact deletion of individual records.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`dataset`]: trip records, CSV I/O, duration labels, a synthetic generator.
//! - [`features`]: numeric + hashed-text feature vectors and the 2-D projection.
//! - [`sharding`]: Gaussian-mixture clustering and shard/slice assignment.
//! - [`trainer`]: per-shard MLP training with slice checkpoints.
//! - [`ensemble`]: soft-voting aggregation and RMSE.
//! - [`unlearning`]: deletion requests, rollback, retraining, exactness checks.
//! - [`harness`]: shard-count sweeps and unlearning-cost benchmarks.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod harness;
pub mod model_dir;
pub mod rng;
pub mod sharding;
pub mod sisa;
pub mod store;
pub mod trainer;
pub mod unlearning;

pub use error::{Error, Result};
