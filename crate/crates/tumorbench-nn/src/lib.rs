//! A small NHWC tensor-graph library with just enough machinery to rebuild
//! ImageNet-era convolutional backbones and fine-tune them on CPU:
//! 2-D/depthwise convolution, batch normalization, pooling, dense layers,
//! residual add / channel concat, softmax cross-entropy and Adamax.
//!
//! Everything is `f32`, single threaded and deterministic: identical seeds
//! produce identical weights, identical inputs produce identical outputs.
//! Training-mode gradients for every op are covered by finite-difference
//! tests in the respective modules.

pub mod gemm;
pub mod graph;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use graph::{Graph, NodeId, Phase, Tape};
pub use init::Init;
pub use layers::{Padding, Param};
pub use optim::Adamax;
pub use tensor::Tensor;

/// Errors surfaced by graph construction and execution.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch at {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("graph has no output node")]
    NoOutput,
}
