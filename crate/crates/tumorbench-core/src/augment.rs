//! In-model augmentation: the training path applies, in order, horizontal
//! flip, rotation, zoom, contrast, rescaling, a second rotation and a
//! translation; the evaluation path applies the rescaling only.
//!
//! Geometry uses bilinear resampling with symmetric reflection at borders.
//! Positive rotation angles turn the image content counterclockwise (as
//! displayed with row 0 on top); zoom factors > 1 magnify; positive
//! translation offsets move content down/right.
//!
//! Every sample draws the same seven parameter slots in a fixed order from
//! its own counter-derived stream, so disabling one transform never shifts
//! the draws of another, and a (seed, epoch, index) triple fully determines
//! the transform.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use tumorbench_nn::rng as nnrng;

/// How raw recipe rotation factors translate into the degree fields when a
/// config is built from them (see [`AugmentationConfig::from_recipe_factors`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RotationUnits {
    /// First factor is radians, second is degrees (the prose reading). Default.
    #[default]
    Prose,
    /// Factors are fractions of a full turn (factor * 360 degrees), the
    /// convention of some preprocessing-layer APIs.
    Turns,
}

/// Augmentation stack configuration; serialized 1:1 under `augmentation`
/// in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub enabled: bool,
    pub flip_horizontal: bool,
    /// First rotation bound, degrees. Default 0.2 rad = 11.459 deg.
    pub rotation1_max_deg: f64,
    pub zoom_frac: f64,
    pub contrast_frac: f64,
    /// Scalar applied on every path (training and evaluation).
    pub rescale: f32,
    /// Second rotation bound, degrees.
    pub rotation2_max_deg: f64,
    pub translation_height_frac: f64,
    pub translation_width_frac: f64,
    /// Value range of inputs before rescaling (contrast clips to it).
    pub value_range: f32,
    pub rotation_units: RotationUnits,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            enabled: true,
            flip_horizontal: true,
            rotation1_max_deg: 0.2f64.to_degrees(),
            zoom_frac: 0.2,
            contrast_frac: 0.2,
            rescale: 1.0 / 255.0,
            rotation2_max_deg: 30.0,
            translation_height_frac: 0.2,
            translation_width_frac: 0.3,
            value_range: 255.0,
            rotation_units: RotationUnits::Prose,
        }
    }
}

impl AugmentationConfig {
    /// Disabled stack (rescale only on both paths).
    pub fn disabled() -> Self {
        AugmentationConfig { enabled: false, ..Default::default() }
    }

    /// Build the degree fields from the two raw recipe factors (0.2, 30 in
    /// the default recipe) under the chosen units interpretation.
    pub fn from_recipe_factors(rotation1: f64, rotation2: f64, units: RotationUnits) -> Self {
        let (r1, r2) = match units {
            RotationUnits::Prose => (rotation1.to_degrees(), rotation2),
            RotationUnits::Turns => (rotation1 * 360.0, rotation2 * 360.0),
        };
        AugmentationConfig {
            rotation1_max_deg: r1,
            rotation2_max_deg: r2,
            rotation_units: units,
            ..Default::default()
        }
    }

    /// Rotation bounds in degrees (the fields are already degrees).
    pub fn rotation_bounds_deg(&self) -> (f64, f64) {
        (self.rotation1_max_deg, self.rotation2_max_deg)
    }
}

/// Counter-based deterministic draw streams: one independent substream per
/// (epoch, sample index), all derived from one seed.
#[derive(Debug, Clone, Copy)]
pub struct AugmentationRng {
    pub seed: u64,
}

impl AugmentationRng {
    pub fn new(seed: u64) -> Self {
        AugmentationRng { seed }
    }

    /// Substream for one sample at one epoch.
    pub fn stream(&self, epoch: u64, sample_index: u64) -> ChaCha12Rng {
        nnrng::stream(nnrng::mix_u64(self.seed, &[epoch, sample_index]))
    }
}

/// Mirror columns: out(y, x) = in(y, W-1-x).
pub fn flip_h(img: &Array3<f32>) -> Array3<f32> {
    let (h, w, c) = img.dim();
    Array3::from_shape_fn((h, w, c), |(y, x, ch)| img[[y, w - 1 - x, ch]])
}

/// Symmetric reflection of an index onto [0, n): ... d c b a | a b c d | d c b a ...
fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n as isize {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

/// Bilinear sample with reflected borders, one output pixel, all channels.
fn sample_reflect(img: &Array3<f32>, fy: f64, fx: f64, out: &mut [f32]) {
    let (h, w, c) = img.dim();
    let y0 = fy.floor();
    let x0 = fx.floor();
    let wy = (fy - y0) as f32;
    let wx = (fx - x0) as f32;
    let y0i = reflect_index(y0 as isize, h);
    let y1i = reflect_index(y0 as isize + 1, h);
    let x0i = reflect_index(x0 as isize, w);
    let x1i = reflect_index(x0 as isize + 1, w);
    for ch in 0..c {
        let top = img[[y0i, x0i, ch]] * (1.0 - wx) + img[[y0i, x1i, ch]] * wx;
        let bot = img[[y1i, x0i, ch]] * (1.0 - wx) + img[[y1i, x1i, ch]] * wx;
        out[ch] = top * (1.0 - wy) + bot * wy;
    }
}

fn warp(img: &Array3<f32>, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Array3<f32> {
    let (h, w, c) = img.dim();
    let mut out = Array3::<f32>::zeros((h, w, c));
    let mut px = vec![0.0f32; c];
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = inverse(y as f64, x as f64);
            sample_reflect(img, fy, fx, &mut px);
            for ch in 0..c {
                out[[y, x, ch]] = px[ch];
            }
        }
    }
    out
}

/// Rotate content by `deg` counterclockwise about the image center.
pub fn rotate(img: &Array3<f32>, deg: f64) -> Array3<f32> {
    if deg == 0.0 {
        return img.clone();
    }
    let (h, w, _) = img.dim();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = deg.to_radians().sin_cos();
    warp(img, move |y, x| {
        let dy = y - cy;
        let dx = x - cx;
        (cy + sin * dx + cos * dy, cx + cos * dx - sin * dy)
    })
}

/// Scale content about the center by factor `s` (> 1 magnifies).
pub fn zoom(img: &Array3<f32>, s: f64) -> Array3<f32> {
    if s == 1.0 {
        return img.clone();
    }
    let (h, w, _) = img.dim();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    warp(img, move |y, x| (cy + (y - cy) / s, cx + (x - cx) / s))
}

/// Shift content by (dy, dx) pixels (positive = down/right).
pub fn translate(img: &Array3<f32>, dy: f64, dx: f64) -> Array3<f32> {
    if dy == 0.0 && dx == 0.0 {
        return img.clone();
    }
    warp(img, move |y, x| (y - dy, x - dx))
}

/// Per-channel contrast: out = mean + f * (v - mean), clipped to
/// [0, value_range]. f = 1 is the exact identity.
pub fn adjust_contrast(img: &Array3<f32>, f: f64, value_range: f32) -> Array3<f32> {
    if f == 1.0 {
        return img.clone();
    }
    let (h, w, c) = img.dim();
    let mut means = vec![0.0f64; c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                means[ch] += img[[y, x, ch]] as f64;
            }
        }
    }
    for m in means.iter_mut() {
        *m /= (h * w) as f64;
    }
    let f = f as f32;
    Array3::from_shape_fn((h, w, c), |(y, x, ch)| {
        let m = means[ch] as f32;
        (m + f * (img[[y, x, ch]] - m)).clamp(0.0, value_range)
    })
}

fn sym(u: f64) -> f64 {
    2.0 * u - 1.0
}

/// Flip with probability 1/2.
pub fn random_flip_h<R: Rng>(img: &Array3<f32>, rng: &mut R) -> Array3<f32> {
    if rng.gen::<f64>() < 0.5 {
        flip_h(img)
    } else {
        img.clone()
    }
}

/// Rotate by an angle uniform in [-max_deg, +max_deg].
pub fn random_rotation<R: Rng>(img: &Array3<f32>, max_deg: f64, rng: &mut R) -> Array3<f32> {
    let deg = sym(rng.gen::<f64>()) * max_deg;
    rotate(img, deg)
}

/// Zoom by a factor uniform in [1-frac, 1+frac].
pub fn random_zoom<R: Rng>(img: &Array3<f32>, zoom_frac: f64, rng: &mut R) -> Array3<f32> {
    let s = 1.0 + sym(rng.gen::<f64>()) * zoom_frac;
    zoom(img, s)
}

/// Contrast factor uniform in [1-frac, 1+frac].
pub fn random_contrast<R: Rng>(img: &Array3<f32>, contrast_frac: f64, value_range: f32, rng: &mut R) -> Array3<f32> {
    let f = 1.0 + sym(rng.gen::<f64>()) * contrast_frac;
    adjust_contrast(img, f, value_range)
}

/// Shift uniform in [-hf*H, +hf*H] x [-wf*W, +wf*W].
pub fn random_translation<R: Rng>(img: &Array3<f32>, height_frac: f64, width_frac: f64, rng: &mut R) -> Array3<f32> {
    let (h, w, _) = img.dim();
    let dy = sym(rng.gen::<f64>()) * height_frac * h as f64;
    let dx = sym(rng.gen::<f64>()) * width_frac * w as f64;
    translate(img, dy, dx)
}

/// The full stack. Training path: flip, rotation 1, zoom, contrast,
/// rescale, rotation 2, translation. Evaluation path: rescale only.
/// Parameter slots are drawn unconditionally in a fixed order.
pub fn apply_augmentations<R: Rng>(
    img: &Array3<f32>,
    cfg: &AugmentationConfig,
    rng: &mut R,
    training: bool,
) -> Array3<f32> {
    if !training || !cfg.enabled {
        return img.mapv(|v| v * cfg.rescale);
    }
    let u_flip = rng.gen::<f64>();
    let u_rot1 = rng.gen::<f64>();
    let u_zoom = rng.gen::<f64>();
    let u_contrast = rng.gen::<f64>();
    let u_rot2 = rng.gen::<f64>();
    let u_ty = rng.gen::<f64>();
    let u_tx = rng.gen::<f64>();
    let (rot1_max, rot2_max) = cfg.rotation_bounds_deg();

    let mut out = if cfg.flip_horizontal && u_flip < 0.5 { flip_h(img) } else { img.clone() };
    out = rotate(&out, sym(u_rot1) * rot1_max);
    out = zoom(&out, 1.0 + sym(u_zoom) * cfg.zoom_frac);
    out = adjust_contrast(&out, 1.0 + sym(u_contrast) * cfg.contrast_frac, cfg.value_range);
    out.mapv_inplace(|v| v * cfg.rescale);
    out = rotate(&out, sym(u_rot2) * rot2_max);
    let (h, w, _) = out.dim();
    translate(
        &out,
        sym(u_ty) * cfg.translation_height_frac * h as f64,
        sym(u_tx) * cfg.translation_width_frac * w as f64,
    )
}
