//! Max, average and global-average pooling. Implicit `Same` padding never
//! contributes values: max ignores padded cells and average divides by the
//! number of in-bounds cells under the window.

use super::Padding;
use crate::layers::conv::{conv_geometry, ConvGeom};
use crate::tensor::Tensor;
use ndarray::IxDyn;

pub fn pool_geometry(h: usize, w: usize, k: (usize, usize), s: (usize, usize), padding: Padding) -> ConvGeom {
    conv_geometry(h, w, k.0, k.1, s.0, s.1, padding)
}

/// Max pool; returns (out, argmax) where argmax holds the flat in-image
/// index (iy*w*c + ix*c + ch) of each winner for the backward pass.
pub fn maxpool_forward(x: &Tensor, g: &ConvGeom) -> (Tensor, Vec<u32>) {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(IxDyn(&[n, g.oh, g.ow, c]));
    let mut arg = vec![0u32; n * g.oh * g.ow * c];
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let in_stride = h * w * c;
    for img in 0..n {
        let xi = &xs[img * in_stride..(img + 1) * in_stride];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_t as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_l as isize;
                let obase = ((img * g.oh + oy) * g.ow + ox) * c;
                let mut best = vec![f32::NEG_INFINITY; c];
                let mut best_idx = vec![0u32; c];
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * c;
                        for ch in 0..c {
                            let v = xi[base + ch];
                            if v > best[ch] {
                                best[ch] = v;
                                best_idx[ch] = (base + ch) as u32;
                            }
                        }
                    }
                }
                os[obase..obase + c].copy_from_slice(&best);
                arg[obase..obase + c].copy_from_slice(&best_idx);
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(x_shape: &[usize], dy: &Tensor, arg: &[u32]) -> Tensor {
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let mut dx = Tensor::zeros(IxDyn(&[n, h, w, c]));
    let dxs = dx.as_slice_mut().unwrap();
    let dys = dy.as_slice().unwrap();
    let plane = h * w * c;
    let out_plane = dys.len() / n;
    for img in 0..n {
        let base = img * plane;
        for (o, &a) in dys[img * out_plane..(img + 1) * out_plane]
            .iter()
            .zip(&arg[img * out_plane..(img + 1) * out_plane])
        {
            dxs[base + a as usize] += o;
        }
    }
    dx
}

/// Average pool over in-bounds cells only.
pub fn avgpool_forward(x: &Tensor, g: &ConvGeom) -> Tensor {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(IxDyn(&[n, g.oh, g.ow, c]));
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let in_stride = h * w * c;
    for img in 0..n {
        let xi = &xs[img * in_stride..(img + 1) * in_stride];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_t as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_l as isize;
                let obase = ((img * g.oh + oy) * g.ow + ox) * c;
                let mut count = 0usize;
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        count += 1;
                        let base = (iy as usize * w + ix as usize) * c;
                        for ch in 0..c {
                            os[obase + ch] += xi[base + ch];
                        }
                    }
                }
                let inv = 1.0 / count as f32;
                for ch in 0..c {
                    os[obase + ch] *= inv;
                }
            }
        }
    }
    out
}

pub fn avgpool_backward(x_shape: &[usize], dy: &Tensor, g: &ConvGeom) -> Tensor {
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let mut dx = Tensor::zeros(IxDyn(&[n, h, w, c]));
    let dxs = dx.as_slice_mut().unwrap();
    let dys = dy.as_slice().unwrap();
    let in_stride = h * w * c;
    let out_stride = g.oh * g.ow * c;
    for img in 0..n {
        let dyi = &dys[img * out_stride..(img + 1) * out_stride];
        let dxi = &mut dxs[img * in_stride..(img + 1) * in_stride];
        for oy in 0..g.oh {
            let iy0 = (oy * g.sh) as isize - g.pad_t as isize;
            for ox in 0..g.ow {
                let ix0 = (ox * g.sw) as isize - g.pad_l as isize;
                let obase = (oy * g.ow + ox) * c;
                let mut count = 0usize;
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy >= 0 && iy < h as isize {
                        for kx in 0..g.kw {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && ix < w as isize {
                                count += 1;
                            }
                        }
                    }
                }
                let inv = 1.0 / count as f32;
                for ky in 0..g.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * c;
                        for ch in 0..c {
                            dxi[base + ch] += dyi[obase + ch] * inv;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Spatial mean per channel: (n,h,w,c) -> (n,c).
pub fn global_avgpool_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(IxDyn(&[n, c]));
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let inv = 1.0 / (h * w) as f32;
    for img in 0..n {
        let mut acc = vec![0.0f64; c];
        for row in xs[img * h * w * c..(img + 1) * h * w * c].chunks_exact(c) {
            for (ch, &v) in row.iter().enumerate() {
                acc[ch] += v as f64;
            }
        }
        for ch in 0..c {
            os[img * c + ch] = (acc[ch] as f32) * inv;
        }
    }
    out
}

pub fn global_avgpool_backward(x_shape: &[usize], dy: &Tensor) -> Tensor {
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let mut dx = Tensor::zeros(IxDyn(&[n, h, w, c]));
    let dxs = dx.as_slice_mut().unwrap();
    let dys = dy.as_slice().unwrap();
    let inv = 1.0 / (h * w) as f32;
    for img in 0..n {
        let dyrow = &dys[img * c..(img + 1) * c];
        for row in dxs[img * h * w * c..(img + 1) * h * w * c].chunks_exact_mut(c) {
            for ch in 0..c {
                row[ch] = dyrow[ch] * inv;
            }
        }
    }
    dx
}
