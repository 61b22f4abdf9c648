//! Fully connected layer on (batch, features) tensors.

use crate::gemm::{sgemm, sgemm_at, sgemm_bt};
use crate::tensor::Tensor;
use ndarray::IxDyn;

/// y = x . w + b with x (n, i), w (i, o).
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = weight.shape()[1];
    let mut out = Tensor::zeros(IxDyn(&[n, o]));
    sgemm(n, i, o, 1.0, x.as_slice().unwrap(), weight.as_slice().unwrap(), 0.0, out.as_slice_mut().unwrap());
    if let Some(b) = bias {
        let bs = b.as_slice().unwrap();
        for row in out.as_slice_mut().unwrap().chunks_exact_mut(o) {
            for (v, bv) in row.iter_mut().zip(bs) {
                *v += bv;
            }
        }
    }
    out
}

/// Returns dx; accumulates into dw/db.
pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    db: Option<&mut Tensor>,
) -> Tensor {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = weight.shape()[1];
    let mut dx = Tensor::zeros(IxDyn(&[n, i]));
    sgemm_at(i, n, o, 1.0, x.as_slice().unwrap(), dy.as_slice().unwrap(), 1.0, dw.as_slice_mut().unwrap());
    sgemm_bt(n, o, i, 1.0, dy.as_slice().unwrap(), weight.as_slice().unwrap(), 0.0, dx.as_slice_mut().unwrap());
    if let Some(db) = db {
        let dbs = db.as_slice_mut().unwrap();
        for row in dy.as_slice().unwrap().chunks_exact(o) {
            for (dv, &g) in dbs.iter_mut().zip(row) {
                *dv += g;
            }
        }
    }
    dx
}
