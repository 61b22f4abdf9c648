//! Batch normalization over the trailing (channel) axis of a 2-D or 4-D
//! tensor. Training mode normalizes with biased batch statistics and keeps
//! exponential moving averages for inference.

use crate::tensor::Tensor;

/// Per-batch statistics saved on the tape for backward.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

fn channels(x: &Tensor) -> (usize, usize) {
    let c = *x.shape().last().unwrap();
    (x.len() / c, c)
}

/// Training-mode forward. Updates the moving stats in place when
/// `update_running` is set. Returns (y, saved stats).
#[allow(clippy::too_many_arguments)]
pub fn bn_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    moving_mean: &mut Tensor,
    moving_var: &mut Tensor,
    momentum: f32,
    eps: f32,
    update_running: bool,
) -> (Tensor, BnStats) {
    let (rows, c) = channels(x);
    let xs = x.as_slice().unwrap();
    let mut sum = vec![0.0f64; c];
    let mut sumsq = vec![0.0f64; c];
    for row in xs.chunks_exact(c) {
        for (ch, &v) in row.iter().enumerate() {
            let v = v as f64;
            sum[ch] += v;
            sumsq[ch] += v * v;
        }
    }
    let m = rows as f64;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ch in 0..c {
        let mu = sum[ch] / m;
        mean[ch] = mu as f32;
        var[ch] = ((sumsq[ch] / m - mu * mu).max(0.0)) as f32;
    }
    let mut inv_std = vec![0.0f32; c];
    for ch in 0..c {
        inv_std[ch] = 1.0 / (var[ch] + eps).sqrt();
    }
    if update_running {
        let mm = moving_mean.as_slice_mut().unwrap();
        let mv = moving_var.as_slice_mut().unwrap();
        for ch in 0..c {
            mm[ch] = mm[ch] * momentum + mean[ch] * (1.0 - momentum);
            mv[ch] = mv[ch] * momentum + var[ch] * (1.0 - momentum);
        }
    }
    let g = gamma.as_slice().unwrap();
    let b = beta.as_slice().unwrap();
    let mut out = Tensor::zeros(x.raw_dim());
    {
        let os = out.as_slice_mut().unwrap();
        for (orow, xrow) in os.chunks_exact_mut(c).zip(xs.chunks_exact(c)) {
            for ch in 0..c {
                orow[ch] = g[ch] * (xrow[ch] - mean[ch]) * inv_std[ch] + b[ch];
            }
        }
    }
    (out, BnStats { mean, inv_std })
}

/// Inference-mode forward using the stored moving statistics.
pub fn bn_forward_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    moving_mean: &Tensor,
    moving_var: &Tensor,
    eps: f32,
) -> Tensor {
    let (_, c) = channels(x);
    let g = gamma.as_slice().unwrap();
    let b = beta.as_slice().unwrap();
    let mm = moving_mean.as_slice().unwrap();
    let mv = moving_var.as_slice().unwrap();
    let mut scale = vec![0.0f32; c];
    let mut shift = vec![0.0f32; c];
    for ch in 0..c {
        scale[ch] = g[ch] / (mv[ch] + eps).sqrt();
        shift[ch] = b[ch] - mm[ch] * scale[ch];
    }
    let mut out = Tensor::zeros(x.raw_dim());
    {
        let os = out.as_slice_mut().unwrap();
        for (orow, xrow) in os.chunks_exact_mut(c).zip(x.as_slice().unwrap().chunks_exact(c)) {
            for ch in 0..c {
                orow[ch] = xrow[ch] * scale[ch] + shift[ch];
            }
        }
    }
    out
}

/// Training-mode backward. Returns dx; accumulates dgamma/dbeta.
pub fn bn_backward(
    x: &Tensor,
    gamma: &Tensor,
    stats: &BnStats,
    dy: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let (rows, c) = channels(x);
    let xs = x.as_slice().unwrap();
    let dys = dy.as_slice().unwrap();
    let g = gamma.as_slice().unwrap();
    let m = rows as f64;

    // s1 = sum(dy), s2 = sum(dy * xhat)
    let mut s1 = vec![0.0f64; c];
    let mut s2 = vec![0.0f64; c];
    for (xrow, dyrow) in xs.chunks_exact(c).zip(dys.chunks_exact(c)) {
        for ch in 0..c {
            let xhat = (xrow[ch] - stats.mean[ch]) * stats.inv_std[ch];
            s1[ch] += dyrow[ch] as f64;
            s2[ch] += (dyrow[ch] as f64) * (xhat as f64);
        }
    }
    {
        let dg = dgamma.as_slice_mut().unwrap();
        let db = dbeta.as_slice_mut().unwrap();
        for ch in 0..c {
            dg[ch] += s2[ch] as f32;
            db[ch] += s1[ch] as f32;
        }
    }
    let mut mean_dy = vec![0.0f32; c];
    let mut mean_dyxhat = vec![0.0f32; c];
    for ch in 0..c {
        mean_dy[ch] = (s1[ch] / m) as f32;
        mean_dyxhat[ch] = (s2[ch] / m) as f32;
    }
    let mut dx = Tensor::zeros(x.raw_dim());
    {
        let dxs = dx.as_slice_mut().unwrap();
        for ((dxrow, xrow), dyrow) in dxs.chunks_exact_mut(c).zip(xs.chunks_exact(c)).zip(dys.chunks_exact(c)) {
            for ch in 0..c {
                let xhat = (xrow[ch] - stats.mean[ch]) * stats.inv_std[ch];
                dxrow[ch] = g[ch] * stats.inv_std[ch] * (dyrow[ch] - mean_dy[ch] - xhat * mean_dyxhat[ch]);
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::IxDyn;
    use rand::Rng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::stream(seed);
        let n: usize = shape.iter().product();
        Tensor::from_shape_vec(IxDyn(shape), (0..n).map(|_| r.gen_range(-2.0..2.0f32)).collect()).unwrap()
    }

    #[test]
    fn train_forward_normalizes_batch() {
        let x = rand_tensor(&[4, 3, 3, 5], 1);
        let gamma = Tensor::ones(IxDyn(&[5]));
        let beta = Tensor::zeros(IxDyn(&[5]));
        let mut mm = Tensor::zeros(IxDyn(&[5]));
        let mut mv = Tensor::ones(IxDyn(&[5]));
        let (y, _) = bn_forward_train(&x, &gamma, &beta, &mut mm, &mut mv, 0.99, 1e-5, true);
        // each channel of y has ~zero mean and ~unit variance
        let (rows, c) = (4 * 3 * 3, 5);
        for ch in 0..c {
            let vals: Vec<f32> = y.as_slice().unwrap().iter().skip(ch).step_by(c).copied().collect();
            let mean: f32 = vals.iter().sum::<f32>() / rows as f32;
            let var: f32 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / rows as f32;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-2);
        }
        // moving stats moved toward the batch stats
        assert!(mm.iter().any(|&v| v != 0.0));
        assert!(mv.iter().any(|&v| (v - 1.0).abs() > 1e-6));
    }

    #[test]
    fn eval_forward_is_affine_in_running_stats() {
        let x = rand_tensor(&[2, 4], 2);
        let gamma = Tensor::from_shape_vec(IxDyn(&[4]), vec![1.0, 2.0, 0.5, 1.5]).unwrap();
        let beta = Tensor::from_shape_vec(IxDyn(&[4]), vec![0.1, -0.2, 0.0, 0.3]).unwrap();
        let mm = Tensor::from_shape_vec(IxDyn(&[4]), vec![0.5, -0.5, 0.0, 1.0]).unwrap();
        let mv = Tensor::from_shape_vec(IxDyn(&[4]), vec![1.0, 4.0, 0.25, 2.0]).unwrap();
        let eps = 1e-3;
        let y = bn_forward_eval(&x, &gamma, &beta, &mm, &mv, eps);
        for n in 0..2 {
            for ch in 0..4 {
                let want = gamma[[ch]] * (x[[n, ch]] - mm[[ch]]) / (mv[[ch]] + eps).sqrt() + beta[[ch]];
                assert!((y[[n, ch]] - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = rand_tensor(&[3, 2, 2, 4], 3);
        let gamma = rand_tensor(&[4], 4);
        let beta = rand_tensor(&[4], 5);
        let m = rand_tensor(&[3, 2, 2, 4], 6);
        let eps = 1e-3f32;
        let loss = |x: &Tensor, gamma: &Tensor, beta: &Tensor| -> f64 {
            let mut mm = Tensor::zeros(IxDyn(&[4]));
            let mut mv = Tensor::ones(IxDyn(&[4]));
            let (y, _) = bn_forward_train(x, gamma, beta, &mut mm, &mut mv, 0.99, eps, false);
            y.iter().zip(m.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let mut mm = Tensor::zeros(IxDyn(&[4]));
        let mut mv = Tensor::ones(IxDyn(&[4]));
        let (_, stats) = bn_forward_train(&x, &gamma, &beta, &mut mm, &mut mv, 0.99, eps, false);
        let mut dg = Tensor::zeros(gamma.raw_dim());
        let mut db = Tensor::zeros(beta.raw_dim());
        let dx = bn_backward(&x, &gamma, &stats, &m, &mut dg, &mut db);

        let h = 1e-2f32;
        for idx in [0usize, 9, 21, 47] {
            let mut tp = x.clone();
            let mut tm = x.clone();
            tp.as_slice_mut().unwrap()[idx] += h;
            tm.as_slice_mut().unwrap()[idx] -= h;
            let fd = ((loss(&tp, &gamma, &beta) - loss(&tm, &gamma, &beta)) / (2.0 * h as f64)) as f32;
            let an = dx.as_slice().unwrap()[idx];
            assert!((fd - an).abs() < 2e-2 * (1.0 + an.abs()), "dx[{idx}]: {fd} vs {an}");
        }
        for idx in 0..4 {
            let mut tp = gamma.clone();
            let mut tm = gamma.clone();
            tp.as_slice_mut().unwrap()[idx] += h;
            tm.as_slice_mut().unwrap()[idx] -= h;
            let fd = ((loss(&x, &tp, &beta) - loss(&x, &tm, &beta)) / (2.0 * h as f64)) as f32;
            let an = dg.as_slice().unwrap()[idx];
            assert!((fd - an).abs() < 2e-2 * (1.0 + an.abs()), "dgamma[{idx}]: {fd} vs {an}");
            let mut tp = beta.clone();
            let mut tm = beta.clone();
            tp.as_slice_mut().unwrap()[idx] += h;
            tm.as_slice_mut().unwrap()[idx] -= h;
            let fd = ((loss(&x, &gamma, &tp) - loss(&x, &gamma, &tm)) / (2.0 * h as f64)) as f32;
            let an = db.as_slice().unwrap()[idx];
            assert!((fd - an).abs() < 2e-2 * (1.0 + an.abs()), "dbeta[{idx}]: {fd} vs {an}");
        }
    }
}
