//! Synthetic record generator producing class-distinctive textures, for
//! test fixtures and desk-scale dry runs where the real archive is absent.
//!
//! Meningioma-labeled slices carry one large bright blob, glioma-labeled
//! slices a scatter of small blobs, pituitary-labeled slices a stripe
//! texture. The signatures survive flips, moderate rotation/zoom/shift and
//! contrast changes, so a classifier can learn them under augmentation.

use crate::dataset::{write_record, TumorClass, TumorRecord};
use crate::error::IngestError;
use ndarray::Array2;
use rand::Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use tumorbench_nn::rng as nnrng;

fn disk(img: &mut Array2<i16>, cy: f64, cx: f64, radius: f64, level: i16) {
    let (h, w) = img.dim();
    let r2 = radius * radius;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let y1 = ((cy + radius).ceil() as usize).min(h - 1);
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            if dy * dy + dx * dx <= r2 {
                img[[y, x]] = img[[y, x]].saturating_add(level);
            }
        }
    }
}

/// Closed circle polygon as flat (row, col) pairs.
fn circle_border(cy: f64, cx: f64, radius: f64, points: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(points * 2);
    for i in 0..points {
        let a = 2.0 * PI * i as f64 / points as f64;
        out.push(cy + radius * a.sin());
        out.push(cx + radius * a.cos());
    }
    out
}

fn disk_mask(h: usize, w: usize, cy: f64, cx: f64, radius: f64) -> Array2<u8> {
    let mut m = Array2::<u8>::zeros((h, w));
    let r2 = radius * radius;
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            if dy * dy + dx * dx <= r2 {
                m[[y, x]] = 1;
            }
        }
    }
    m
}

/// One synthetic record of the given class. `variant` individualizes the
/// geometry; identical (class, variant, size) is bit-reproducible.
pub fn synthetic_record(class: TumorClass, variant: u64, size: usize) -> TumorRecord {
    let mut rng = nnrng::stream(nnrng::mix_u64(0x5e_d0, &[class.index() as u64, variant, size as u64]));
    let s = size as f64;
    let mut image = Array2::<i16>::zeros((size, size));
    for v in image.iter_mut() {
        *v = rng.gen_range(200..400);
    }
    // skull-ish rim so slices look vaguely like head sections
    let c = s / 2.0;
    for y in 0..size {
        for x in 0..size {
            let d = (((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt() / (0.48 * s)).min(1.0);
            if d > 0.95 {
                image[[y, x]] = rng.gen_range(700..900);
            } else if d > 0.9 {
                image[[y, x]] += 200;
            }
        }
    }

    let (mask_c, mask_r);
    match class {
        TumorClass::Meningioma => {
            let cy = c + rng.gen_range(-0.08 * s..0.08 * s);
            let cx = c + rng.gen_range(-0.08 * s..0.08 * s);
            let r = rng.gen_range(0.18 * s..0.24 * s);
            disk(&mut image, cy, cx, r, 900);
            mask_c = (cy, cx);
            mask_r = r;
        }
        TumorClass::Glioma => {
            let mut first = None;
            for _ in 0..12 {
                let cy = c + rng.gen_range(-0.3 * s..0.3 * s);
                let cx = c + rng.gen_range(-0.3 * s..0.3 * s);
                let r = rng.gen_range(0.025 * s..0.045 * s);
                disk(&mut image, cy, cx, r, 900);
                if first.is_none() {
                    first = Some((cy, cx, r));
                }
            }
            let (cy, cx, r) = first.unwrap();
            mask_c = (cy, cx);
            mask_r = r;
        }
        TumorClass::Pituitary => {
            let period = rng.gen_range(0.055 * s..0.075 * s);
            let phase = rng.gen_range(0.0..period);
            for y in 0..size {
                for x in 0..size {
                    let d = (((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt() / (0.48 * s)).min(1.0);
                    if d < 0.85 {
                        let t = ((y as f64 + x as f64 + phase) / period * PI).sin();
                        if t > 0.2 {
                            image[[y, x]] = image[[y, x]].saturating_add(700);
                        }
                    }
                }
            }
            mask_c = (c, c);
            mask_r = 0.08 * s;
        }
    }
    // keep mask centers inside bounds with margin for the border polygon
    let mask_r = mask_r.min(mask_c.0 - 1.0).min(mask_c.1 - 1.0).min(s - 1.0 - mask_c.0).min(s - 1.0 - mask_c.1);
    let tumor_mask = disk_mask(size, size, mask_c.0, mask_c.1, mask_r);
    let tumor_border = circle_border(mask_c.0, mask_c.1, mask_r, 64);

    TumorRecord {
        label: class,
        pid: format!("SYN{:04}", variant % 9973),
        image,
        tumor_border,
        tumor_mask,
    }
}

/// Write `n_per_class` records per class into `dir` as `.mat`-layout files
/// named `syn_<class-code>_<index>.mat`; returns the sorted paths.
pub fn write_synthetic_dataset(dir: &Path, n_per_class: usize, seed: u64, size: usize) -> Result<Vec<PathBuf>, IngestError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for class in TumorClass::ALL {
        for i in 0..n_per_class {
            let record = synthetic_record(class, nnrng::mix_u64(seed, &[class.index() as u64, i as u64]), size);
            let path = dir.join(format!("syn_{}_{:04}.mat", class.dataset_code(), i));
            write_record(&path, &record)?;
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}
