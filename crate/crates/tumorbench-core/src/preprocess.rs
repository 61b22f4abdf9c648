//! Raw slice to model-ready tensor: full-range normalization, bilinear
//! resize to 256x256, 3x3 sharpen with replicate borders, complement, and
//! grayscale-to-RGB replication. All steps are pure functions.
//!
//! Resize convention: image corners align (half-pixel centers), i.e.
//! source coordinate = (dst + 0.5) * in/out - 0.5, clamped. Downsizing by
//! exactly 2x therefore equals 2x2 block averaging.

use crate::error::PreprocessError;
use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Minimum spatial extent of a raw image.
pub const MIN_SIDE: usize = 8;
/// Model input side length.
pub const TARGET_SIDE: usize = 256;

/// 3x3 sharpening kernel with replicate borders. The default is the
/// constant-preserving Laplacian sharpen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpenKernel {
    pub weights: [[f32; 3]; 3],
}

impl Default for SharpenKernel {
    fn default() -> Self {
        SharpenKernel { weights: [[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]] }
    }
}

impl SharpenKernel {
    pub fn weight_sum(&self) -> f32 {
        self.weights.iter().flatten().sum()
    }
}

/// Where the single /255 scaling happens in the data flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScaleAt {
    /// The model-input adapter rescales (default).
    #[default]
    Model,
    /// The preprocessed cache already holds [0,1] values.
    Preprocess,
}

/// Pipeline options; hashed into cache keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub side: usize,
    pub kernel: SharpenKernel,
    pub scale_at: ScaleAt,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { side: TARGET_SIDE, kernel: SharpenKernel::default(), scale_at: ScaleAt::Model }
    }
}

impl PreprocessConfig {
    /// Stable hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable config");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_raw(img: &Array2<f32>) -> Result<(), PreprocessError> {
    let (h, w) = img.dim();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(PreprocessError::TooSmall { h, w });
    }
    if !img.iter().all(|v| v.is_finite()) {
        return Err(PreprocessError::NonFinite);
    }
    Ok(())
}

/// Linear map of the full value range onto [0, 255]; constant images map to
/// all zeros.
pub fn normalize_range(img: &Array2<f32>) -> Array2<f32> {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in img.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    if max <= min {
        return Array2::zeros(img.dim());
    }
    let scale = 255.0 / (max - min);
    img.mapv(|v| (v - min) * scale)
}

/// Bilinear resize to side x side, half-pixel sampling, edge clamped.
pub fn resize_bilinear(img: &Array2<f32>, side: usize) -> Result<Array2<f32>, PreprocessError> {
    if side < MIN_SIDE {
        return Err(PreprocessError::InvalidSize(side));
    }
    Ok(bilinear_to(img, side))
}

fn bilinear_to(img: &Array2<f32>, side: usize) -> Array2<f32> {
    let (h, w) = img.dim();
    let sy = h as f64 / side as f64;
    let sx = w as f64 / side as f64;
    let mut out = Array2::<f32>::zeros((side, side));
    for oy in 0..side {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = (fy - y0 as f64) as f32;
        for ox in 0..side {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = (fx - x0 as f64) as f32;
            let top = img[[y0, x0]] * (1.0 - wx) + img[[y0, x1]] * wx;
            let bot = img[[y1, x0]] * (1.0 - wx) + img[[y1, x1]] * wx;
            out[[oy, ox]] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Raw 3x3 convolution with replicate border padding, no clipping.
pub fn convolve3x3_replicate(img: &Array2<f32>, kernel: &SharpenKernel) -> Array2<f32> {
    let (h, w) = img.dim();
    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ky, row) in kernel.weights.iter().enumerate() {
                let iy = (y as isize + ky as isize - 1).clamp(0, h as isize - 1) as usize;
                for (kx, &kv) in row.iter().enumerate() {
                    let ix = (x as isize + kx as isize - 1).clamp(0, w as isize - 1) as usize;
                    acc += kv * img[[iy, ix]];
                }
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Sharpen = 3x3 convolution with replicate borders, clipped to [0, 255].
pub fn sharpen(img: &Array2<f32>, kernel: &SharpenKernel) -> Array2<f32> {
    convolve3x3_replicate(img, kernel).mapv(|v| v.clamp(0.0, 255.0))
}

/// 255 - v, elementwise. An involution on [0, 255].
pub fn complement(img: &Array2<f32>) -> Array2<f32> {
    img.mapv(|v| 255.0 - v)
}

/// The full chain on a native-range raw slice; output is a 256x256x3 tensor
/// in [0, 255] with identical channels.
pub fn preprocess_pipeline(raw: &Array2<f32>, cfg: &PreprocessConfig) -> Result<Array3<f32>, PreprocessError> {
    check_raw(raw)?;
    let normalized = normalize_range(raw);
    let resized = resize_bilinear(&normalized, cfg.side)?;
    let sharpened = sharpen(&resized, &cfg.kernel);
    let complemented = complement(&sharpened);
    let mut out = Array3::<f32>::zeros((cfg.side, cfg.side, 3));
    for y in 0..cfg.side {
        for x in 0..cfg.side {
            let v = complemented[[y, x]];
            out[[y, x, 0]] = v;
            out[[y, x, 1]] = v;
            out[[y, x, 2]] = v;
        }
    }
    Ok(out)
}

/// Convenience: run the pipeline on a raw int16 slice.
pub fn preprocess_i16(raw: &Array2<i16>, cfg: &PreprocessConfig) -> Result<Array3<f32>, PreprocessError> {
    preprocess_pipeline(&raw.mapv(|v| v as f32), cfg)
}

/// Preprocessed tensors plus labels, indexable by manifest position.
#[derive(Debug, Clone)]
pub struct TensorCache {
    /// (n, side, side, 3) in [0,255] (or [0,1] when scaled at preprocess).
    pub images: Array4<f32>,
    /// Zero-based class indices.
    pub labels: Vec<u8>,
    pub config_hash: String,
}

impl TensorCache {
    /// Build from a manifest by running the pipeline on every record.
    pub fn build(manifest: &crate::dataset::DatasetManifest, cfg: &PreprocessConfig) -> Result<Self, PreprocessError> {
        let n = manifest.total();
        let mut images = Array4::<f32>::zeros((n, cfg.side, cfg.side, 3));
        let mut labels = Vec::with_capacity(n);
        for (i, record) in manifest.records().iter().enumerate() {
            let mut t = preprocess_i16(&record.image, cfg)?;
            if cfg.scale_at == ScaleAt::Preprocess {
                t.mapv_inplace(|v| v * (1.0 / 255.0));
            }
            images.index_axis_mut(ndarray::Axis(0), i).assign(&t);
            labels.push(record.label.index() as u8);
        }
        Ok(TensorCache { images, labels, config_hash: cfg.hash() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Write as HDF5: float32 `images`, uint8 `labels`, config hash attr.
    pub fn save(&self, path: &Path) -> Result<(), PreprocessError> {
        let file = hdf5::File::create(path)?;
        file.new_dataset_builder().with_data(&self.images).create("images")?;
        file.new_dataset_builder().with_data(&self.labels).create("labels")?;
        let attr = file.new_attr::<hdf5::types::VarLenUnicode>().create("config_hash")?;
        attr.write_scalar(&self.config_hash.parse::<hdf5::types::VarLenUnicode>().unwrap())?;
        Ok(())
    }

    /// Read back, verifying the config hash when one is expected.
    pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Self, PreprocessError> {
        let file = hdf5::File::open(path)?;
        let images: Array4<f32> = file.dataset("images")?.read()?;
        let labels: Vec<u8> = file.dataset("labels")?.read_raw()?;
        let config_hash: String = file
            .attr("config_hash")?
            .read_scalar::<hdf5::types::VarLenUnicode>()?
            .to_string();
        if let Some(expected) = expected_hash {
            if expected != config_hash {
                return Err(PreprocessError::CacheConfigMismatch {
                    expected: expected.to_string(),
                    found: config_hash,
                });
            }
        }
        Ok(TensorCache { images, labels, config_hash })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rand_image(h: usize, w: usize, seed: u64) -> Array2<f32> {
        use rand::Rng;
        let mut r = tumorbench_nn::rng::stream(seed);
        Array2::from_shape_fn((h, w), |_| r.gen_range(0.0..255.0f32))
    }

    #[test]
    fn normalize_range_linear_map() {
        let img = array![[0.0f32, 500.0], [1000.0, 250.0]];
        let out = normalize_range(&img);
        assert!((out[[0, 1]] - 127.5).abs() < 1e-6);
        assert_eq!(out[[0, 0]], 0.0);
        assert_eq!(out[[1, 0]], 255.0);

        let constant = Array2::from_elem((9, 9), 700.0f32);
        assert!(normalize_range(&constant).iter().all(|&v| v == 0.0));

        let full = rand_image(16, 16, 3);
        let mut full = full;
        full[[0, 0]] = 0.0;
        full[[15, 15]] = 255.0;
        let out = normalize_range(&full);
        for (a, b) in out.iter().zip(full.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        // idempotent on full-range images
        let twice = normalize_range(&out);
        for (a, b) in twice.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn resize_shapes_and_constant() {
        let img = rand_image(512, 512, 4);
        let out = resize_bilinear(&img, 256).unwrap();
        assert_eq!(out.dim(), (256, 256));
        let constant = Array2::from_elem((64, 48), 41.5f32);
        let out = resize_bilinear(&constant, 16).unwrap();
        assert!(out.iter().all(|&v| (v - 41.5).abs() < 1e-6));
        assert!(matches!(resize_bilinear(&img, 4), Err(PreprocessError::InvalidSize(4))));
    }

    #[test]
    fn halving_resize_equals_block_average_oracle() {
        // 4x4 checkerboard -> 2x2 (via the unguarded kernel): every output
        // equals the hand-computed mean of its 2x2 block
        let img = Array2::from_shape_fn((4, 4), |(y, x)| ((y + x) % 2) as f32 * 10.0);
        let out = bilinear_to(&img, 2);
        for oy in 0..2 {
            for ox in 0..2 {
                assert!((out[[oy, ox]] - 5.0).abs() < 1e-6);
            }
        }
        // and at a contract-legal size with non-trivial content
        let img = Array2::from_shape_fn((16, 16), |(y, x)| ((y * 13 + x * 7) % 29) as f32);
        let out = resize_bilinear(&img, 8).unwrap();
        for oy in 0..8 {
            for ox in 0..8 {
                let block = (img[[2 * oy, 2 * ox]] + img[[2 * oy, 2 * ox + 1]] + img[[2 * oy + 1, 2 * ox]]
                    + img[[2 * oy + 1, 2 * ox + 1]])
                    / 4.0;
                assert!((out[[oy, ox]] - block).abs() < 1e-6, "({oy},{ox})");
            }
        }
    }

    #[test]
    fn sharpen_constant_and_impulse() {
        let kernel = SharpenKernel::default();
        assert!((kernel.weight_sum() - 1.0).abs() < 1e-6);
        let constant = Array2::from_elem((12, 12), 37.0f32);
        let out = sharpen(&constant, &kernel);
        assert!(out.iter().all(|&v| (v - 37.0).abs() < 1e-5));

        // impulse of 100 at an interior pixel over a zero background:
        // center becomes 500 (clips to 255), 4-neighbors -100 (clip to 0)
        let mut img = Array2::<f32>::zeros((9, 9));
        img[[4, 4]] = 100.0;
        let raw = convolve3x3_replicate(&img, &kernel);
        assert_eq!(raw[[4, 4]], 500.0);
        assert_eq!(raw[[4, 3]], -100.0);
        let clipped = sharpen(&img, &kernel);
        assert_eq!(clipped[[4, 4]], 255.0);
        assert_eq!(clipped[[4, 3]], 0.0);
        assert_eq!(clipped[[3, 4]], 0.0);
    }

    #[test]
    fn sharpen_matches_naive_oracle_preclip() {
        // brute-force double-loop convolution with replicate borders
        let img = rand_image(16, 16, 5);
        let kernel = SharpenKernel::default();
        let got = convolve3x3_replicate(&img, &kernel);
        for y in 0..16usize {
            for x in 0..16usize {
                let mut want = 0.0f32;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let iy = (y as i32 + dy).clamp(0, 15) as usize;
                        let ix = (x as i32 + dx).clamp(0, 15) as usize;
                        want += kernel.weights[(dy + 1) as usize][(dx + 1) as usize] * img[[iy, ix]];
                    }
                }
                assert!((got[[y, x]] - want).abs() < 1e-6, "({y},{x}): {} vs {want}", got[[y, x]]);
            }
        }
    }

    #[test]
    fn complement_involution_and_linearity() {
        // exact involution on the 8-bit intensity lattice, where 255 - v is
        // exactly representable
        let img = rand_image(10, 10, 6).mapv(|v| v.round());
        let once = complement(&img);
        assert_eq!(complement(&once), img);
        assert_eq!(once[[0, 0]], 255.0 - img[[0, 0]]);
        assert_eq!(complement(&Array2::from_elem((8, 8), 0.0f32))[[0, 0]], 255.0);
        let mean_in: f64 = img.iter().map(|&v| v as f64).sum::<f64>() / 100.0;
        let mean_out: f64 = once.iter().map(|&v| v as f64).sum::<f64>() / 100.0;
        assert!((mean_out - (255.0 - mean_in)).abs() < 1e-9);

        // fractional intensities round-trip within one float step
        let frac = rand_image(10, 10, 7);
        let twice = complement(&complement(&frac));
        for (a, b) in twice.iter().zip(frac.iter()) {
            assert!((a - b).abs() <= 255.0 * f32::EPSILON);
        }
    }

    #[test]
    fn pipeline_contract() {
        let raw = rand_image(64, 64, 7).mapv(|v| v * 100.0 - 5000.0);
        let cfg = PreprocessConfig::default();
        let out = preprocess_pipeline(&raw, &cfg).unwrap();
        assert_eq!(out.dim(), (256, 256, 3));
        assert!(out.iter().all(|&v| (0.0..=255.0).contains(&v)));
        for y in [0usize, 100, 255] {
            for x in [0usize, 37, 255] {
                assert_eq!(out[[y, x, 0]], out[[y, x, 1]]);
                assert_eq!(out[[y, x, 0]], out[[y, x, 2]]);
            }
        }
        // purity
        let again = preprocess_pipeline(&raw, &cfg).unwrap();
        assert_eq!(out, again);
        // constant trace: normalize->0, sharpen->0, complement->255
        let constant = Array2::from_elem((32, 32), 700.0f32);
        let out = preprocess_pipeline(&constant, &cfg).unwrap();
        assert!(out.iter().all(|&v| v == 255.0));
    }

    #[test]
    fn config_hash_changes_with_kernel() {
        let a = PreprocessConfig::default();
        let mut b = a.clone();
        b.kernel.weights[0][0] = 0.25;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), PreprocessConfig::default().hash());
    }
}
