//! Layer parameter containers and the shared convolution/pooling geometry.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;

use crate::tensor::Tensor;
use ndarray::IxDyn;

/// A learnable (or tracked) tensor with its gradient buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.raw_dim());
        Param { value, grad, trainable }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Implicit padding mode for convolution and pooling windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output = floor((in - k)/stride) + 1.
    Valid,
    /// Output = ceil(in/stride); total pad = max((out-1)*stride + k - in, 0),
    /// split with the smaller half leading.
    Same,
}

/// Resolved window geometry along one axis: (out_len, pad_begin).
pub fn axis_geometry(len: usize, k: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => {
            assert!(len >= k, "window {k} larger than input {len}");
            ((len - k) / stride + 1, 0)
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(len);
            (out, total / 2)
        }
    }
}

/// Explicit zero padding (top, bottom, left, right).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadSpec {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl PadSpec {
    pub fn symmetric(p: usize) -> Self {
        PadSpec { top: p, bottom: p, left: p, right: p }
    }
}

/// Pad an NHWC tensor with zeros.
pub fn zero_pad(x: &Tensor, p: PadSpec) -> Tensor {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(IxDyn(&[n, h + p.top + p.bottom, w + p.left + p.right, c]));
    {
        let xs = x.as_slice().unwrap();
        let ow = w + p.left + p.right;
        let os = out.as_slice_mut().unwrap();
        for i in 0..n {
            for y in 0..h {
                let src = (i * h + y) * w * c;
                let dst = ((i * (h + p.top + p.bottom) + y + p.top) * ow + p.left) * c;
                os[dst..dst + w * c].copy_from_slice(&xs[src..src + w * c]);
            }
        }
    }
    out
}

/// Gradient of [`zero_pad`]: crop the padded region away.
pub fn zero_pad_backward(dy: &Tensor, p: PadSpec) -> Tensor {
    let s = dy.shape();
    let (n, ph, pw, c) = (s[0], s[1], s[2], s[3]);
    let h = ph - p.top - p.bottom;
    let w = pw - p.left - p.right;
    let mut out = Tensor::zeros(IxDyn(&[n, h, w, c]));
    {
        let ds = dy.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        for i in 0..n {
            for y in 0..h {
                let src = ((i * ph + y + p.top) * pw + p.left) * c;
                let dst = (i * h + y) * w * c;
                os[dst..dst + w * c].copy_from_slice(&ds[src..src + w * c]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_matches_convention() {
        // in=5, k=3, s=2 -> out=3, total pad = (2*2+3)-5 = 2, begin = 1
        assert_eq!(axis_geometry(5, 3, 2, Padding::Same), (3, 1));
        // in=6, k=3, s=2 -> out=3, total = (4+3)-6 = 1, begin = 0 (smaller half first)
        assert_eq!(axis_geometry(6, 3, 2, Padding::Same), (3, 0));
        // in=4, k=3, s=1 -> out=4, total=2, begin=1
        assert_eq!(axis_geometry(4, 3, 1, Padding::Same), (4, 1));
        assert_eq!(axis_geometry(6, 3, 2, Padding::Valid), (2, 0));
    }

    #[test]
    fn pad_roundtrip() {
        let x = Tensor::from_shape_vec(IxDyn(&[1, 2, 2, 1]), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = PadSpec { top: 1, bottom: 0, left: 2, right: 1 };
        let y = zero_pad(&x, p);
        assert_eq!(y.shape(), &[1, 3, 5, 1]);
        assert_eq!(y[[0, 0, 0, 0]], 0.0);
        assert_eq!(y[[0, 1, 2, 0]], 1.0);
        assert_eq!(y[[0, 2, 3, 0]], 4.0);
        let back = zero_pad_backward(&y, p);
        assert_eq!(back, x);
    }
}
