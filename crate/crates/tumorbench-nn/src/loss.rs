//! Softmax and sparse categorical cross-entropy (integer labels), fused for
//! a numerically stable forward and the standard (p - onehot)/n gradient.

use crate::tensor::Tensor;
use ndarray::IxDyn;

/// Probability floor applied before taking the log, mirroring the usual
/// backend epsilon clip.
pub const PROB_EPSILON: f32 = 1e-7;

/// Row-wise softmax of (n, k) logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let mut out = Tensor::zeros(IxDyn(&[n, k]));
    let ls = logits.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for (orow, lrow) in os.chunks_exact_mut(k).zip(ls.chunks_exact(k)) {
        let max = lrow.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for (o, &l) in orow.iter_mut().zip(lrow) {
            let e = ((l - max) as f64).exp();
            *o = e as f32;
            sum += e;
        }
        let inv = (1.0 / sum) as f32;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
    out
}

/// Mean cross-entropy of integer labels against softmax(logits).
/// Returns (loss, probabilities, dloss/dlogits).
pub fn sparse_softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor, Tensor) {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(labels.len(), n, "label count must match batch");
    let probs = softmax(logits);
    let ps = probs.as_slice().unwrap();
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(IxDyn(&[n, k]));
    {
        let gs = grad.as_slice_mut().unwrap();
        let inv_n = 1.0 / n as f32;
        for (i, &y) in labels.iter().enumerate() {
            debug_assert!(y < k);
            let row = &ps[i * k..(i + 1) * k];
            loss += -(row[y].max(PROB_EPSILON) as f64).ln();
            let grow = &mut gs[i * k..(i + 1) * k];
            for (j, &p) in row.iter().enumerate() {
                grow[j] = (p - if j == y { 1.0 } else { 0.0 }) * inv_n;
            }
        }
    }
    (loss / n as f64, probs, grad)
}

/// Mean cross-entropy of integer labels against already-normalized
/// probability rows (for evaluation paths that only have probabilities).
pub fn sparse_cross_entropy_from_probs(probs: &Tensor, labels: &[usize]) -> f64 {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    let ps = probs.as_slice().unwrap();
    let mut loss = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        loss += -(ps[i * k + y].max(PROB_EPSILON) as f64).ln();
    }
    loss / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln_k() {
        let logits = Tensor::zeros(IxDyn(&[4, 3]));
        let (loss, probs, _) = sparse_softmax_cross_entropy(&logits, &[0, 1, 2, 1]);
        assert!((loss - (3.0f64).ln()).abs() < 1e-6);
        for v in probs.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn perfect_prediction_costs_epsilon_only() {
        let mut logits = Tensor::zeros(IxDyn(&[1, 3]));
        logits[[0, 2]] = 60.0;
        let (loss, _, _) = sparse_softmax_cross_entropy(&logits, &[2]);
        assert!(loss.abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = Tensor::from_shape_vec(IxDyn(&[2, 3]), vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.5]).unwrap();
        let labels = [2usize, 0];
        let (_, _, grad) = sparse_softmax_cross_entropy(&logits, &labels);
        let h = 1e-3f32;
        for idx in 0..6 {
            let mut lp = logits.clone();
            let mut lm = logits.clone();
            lp.as_slice_mut().unwrap()[idx] += h;
            lm.as_slice_mut().unwrap()[idx] -= h;
            let (a, _, _) = sparse_softmax_cross_entropy(&lp, &labels);
            let (b, _, _) = sparse_softmax_cross_entropy(&lm, &labels);
            let fd = ((a - b) / (2.0 * h as f64)) as f32;
            assert!((fd - grad.as_slice().unwrap()[idx]).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_rows_are_normalized() {
        let logits = Tensor::from_shape_vec(IxDyn(&[2, 4]), vec![100.0, 1.0, -50.0, 3.0, -2.0, -2.0, -2.0, -2.0]).unwrap();
        let p = softmax(&logits);
        for row in p.as_slice().unwrap().chunks_exact(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
