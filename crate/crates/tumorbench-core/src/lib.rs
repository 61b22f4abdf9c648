//! End-to-end pipeline for 3-class brain-MRI tumor classification:
//! MAT-record ingest, preprocessing, in-model augmentation, reconstructed
//! convolutional backbones with a fine-tuning head, training/evaluation,
//! a twelve-metric report and figure/table rendering.
//!
//! Environment:
//! - `TUMORBENCH_WEIGHTS_DIR` — backbone weight artifact cache.
//! - `TUMORBENCH_CACHE_DIR` — preprocessed tensor cache.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod train;

pub use error::{ConfigError, IngestError, MetricsError, ModelError, PreprocessError, ReportError, TrainError};

/// Name of the weights-cache environment variable.
pub const WEIGHTS_DIR_ENV: &str = "TUMORBENCH_WEIGHTS_DIR";
/// Name of the preprocessed-tensor cache environment variable.
pub const CACHE_DIR_ENV: &str = "TUMORBENCH_CACHE_DIR";
