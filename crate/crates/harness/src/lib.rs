//! Experiment harness: dataset generation and ingestion, declarative
//! configuration, training/evaluation orchestration, and CSV/SVG artifacts.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod plot;

pub use error::{HarnessError, Result};
