//! Tensor alias and small shape helpers. Layout is NHWC for feature maps
//! and (batch, features) for vectors; both are kept in standard (row-major,
//! contiguous) order so kernels can lean on flat slices.

use ndarray::{ArrayD, IxDyn};

/// Dynamic-rank f32 tensor in standard layout.
pub type Tensor = ArrayD<f32>;

/// Shape of a node's per-sample output, known at graph-build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatShape {
    /// Spatial feature map (height, width, channels).
    Map { h: usize, w: usize, c: usize },
    /// Flat feature vector.
    Vec { n: usize },
}

impl FeatShape {
    pub fn channels(&self) -> usize {
        match *self {
            FeatShape::Map { c, .. } => c,
            FeatShape::Vec { n } => n,
        }
    }

    /// Full tensor shape for a given batch size.
    pub fn batched(&self, batch: usize) -> Vec<usize> {
        match *self {
            FeatShape::Map { h, w, c } => vec![batch, h, w, c],
            FeatShape::Vec { n } => vec![batch, n],
        }
    }
}

/// Zero tensor of the given shape.
pub fn zeros(shape: &[usize]) -> Tensor {
    ArrayD::zeros(IxDyn(shape))
}

/// Borrow the underlying contiguous slice; panics if non-standard layout.
pub fn as_slice(t: &Tensor) -> &[f32] {
    t.as_slice().expect("tensor not contiguous")
}

/// Mutable variant of [`as_slice`].
pub fn as_slice_mut(t: &mut Tensor) -> &mut [f32] {
    t.as_slice_mut().expect("tensor not contiguous")
}
