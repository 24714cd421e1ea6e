//! Experiment harness: runs the optimizer and its baselines over benchmark
//! objectives, aggregates traces, and renders comparison reports.

pub mod error;
pub mod experiment;
pub mod msweep;
pub mod overfit;
pub mod plot;
pub mod wilcoxon;

pub use error::{HarnessError, Result};
