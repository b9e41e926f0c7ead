//! Embedding benchmark and contrastive fine-tuning toolkit.

pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod filter;
pub mod json;
pub mod learn;
pub mod merge;
pub mod metrics;
pub mod mine;
pub mod report;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Crate version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
