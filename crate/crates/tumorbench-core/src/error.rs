//! Error types, one enum per pipeline stage.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("record is missing required field `{0}`")]
    MissingField(String),
    #[error("invalid class label code {0} (expected 1..=3)")]
    InvalidLabel(i64),
    #[error("mask shape {mask:?} does not match image shape {image:?}")]
    ShapeMismatch { image: Vec<usize>, mask: Vec<usize> },
    #[error("tumor border must hold (row, col) pairs; got {0} values")]
    OddBorderLength(usize),
    #[error("tumor border coordinate ({row}, {col}) outside image bounds {h}x{w}")]
    BorderOutOfBounds { row: f64, col: f64, h: usize, w: usize },
    #[error("tumor mask has values outside {{0,1}} or no nonzero pixel")]
    InvalidMask,
    #[error("no parseable records found in {0}")]
    EmptyDataset(PathBuf),
    #[error("failed to parse record `{file}`: {source}")]
    Record {
        file: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("exact_counts sum {got} does not match manifest total {total}")]
    CountOverflow { got: usize, total: usize },
    #[error("hdf5: {0}")]
    Hdf5(#[from] hdf5::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("target side {0} is below the minimum of 8")]
    InvalidSize(usize),
    #[error("image dimensions {h}x{w} are below the 8x8 minimum")]
    TooSmall { h: usize, w: usize },
    #[error("image contains non-finite values")]
    NonFinite,
    #[error("hdf5: {0}")]
    Hdf5(#[from] hdf5::Error),
    #[error("cache was built with config hash {found}, expected {expected}")]
    CacheConfigMismatch { expected: String, found: String },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label {label} at position {index} outside 0..{k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },
    #[error("y_true has {true_len} entries but y_pred has {pred_len}")]
    LengthMismatch { true_len: usize, pred_len: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("empty input")]
    EmptyInput,
    #[error("chance agreement is 1; kappa undefined")]
    DegenerateMarginals,
    #[error("matrix rows must all have length {0}")]
    RaggedMatrix(usize),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown backbone `{0}`")]
    UnknownBackbone(String),
    #[error("weights `{id}` for {kind} not found in cache{}", .searched.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    WeightsUnavailable {
        kind: String,
        id: String,
        searched: Option<PathBuf>,
    },
    #[error("backbone output must be a 4-D feature map")]
    ShapeIncompatible,
    #[error("input batch has shape {got:?}, expected {want:?}")]
    ShapeError { got: Vec<usize>, want: Vec<usize> },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error("artifact format version {found} unsupported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("model is not compiled")]
    NotCompiled,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Nn(#[from] tumorbench_nn::NnError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
    #[error("loss diverged to a non-finite value at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    DivergedLoss { epoch: usize, batch: usize, last_loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("run `{0}` has no metrics.json")]
    MissingMetrics(PathBuf),
    #[error("history is empty")]
    EmptyHistory,
    #[error("render: {0}")]
    Render(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
