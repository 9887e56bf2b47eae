//! Synthetic stand-ins for slide data: tissue-coloured tiles with dark
//! fold-like blobs, severity-graded tiles and a small "slide".

use std::path::Path;

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::imageio::{save_mask_png, save_rgb_png};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::types::{ArtifactKind, BinaryMask, RgbImage, SegPair, Severity};

const TISSUE: [f64; 3] = [0.92, 0.72, 0.84];
const FOLD: [f64; 3] = [0.42, 0.16, 0.44];

fn rng(seed: u64) -> ChaCha8Rng {
    crate::data::seeded(seed)
}

fn tissue(h: usize, w: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    Array3::from_shape_fn((h, w, 3), |(_, _, c)| (TISSUE[c] + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0))
}

/// Paints a filled ellipse into `image` and `mask`, darkening by `strength` in `[0, 1]`.
fn paint_ellipse(
    image: &mut RgbImage,
    mask: &mut BinaryMask,
    center: (f64, f64),
    radii: (f64, f64),
    strength: f64,
) {
    let (h, w) = mask.dim();
    for y in 0..h {
        for x in 0..w {
            let dy = (y as f64 + 0.5 - center.0) / radii.0;
            let dx = (x as f64 + 0.5 - center.1) / radii.1;
            if dy * dy + dx * dx <= 1.0 {
                mask[[y, x]] = 1;
                for c in 0..3 {
                    let v = image[[y, x, c]];
                    image[[y, x, c]] = v + (FOLD[c] - TISSUE[c]) * strength;
                }
            }
        }
    }
    image.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

/// A `side x side` tile with one dark elliptical blob and its mask.
pub fn blob_pair(side: usize, seed: u64) -> SegPair {
    let mut r = rng(seed);
    let mut image = tissue(side, side, &mut r);
    let mut mask = BinaryMask::zeros((side, side));
    let s = side as f64;
    let radii = (r.random_range(s / 6.0..s / 3.0), r.random_range(s / 6.0..s / 3.0));
    let center = (r.random_range(radii.0..s - radii.0), r.random_range(radii.1..s - radii.1));
    paint_ellipse(&mut image, &mut mask, center, radii, 1.0);
    SegPair::new(image, mask).expect("shapes agree")
}

pub fn blob_dataset(n: usize, side: usize, seed: u64) -> Vec<SegPair> {
    (0..n).map(|i| blob_pair(side, seed.wrapping_mul(1000).wrapping_add(i as u64))).collect()
}

/// Tile whose artifact grows larger and darker with severity, so the three
/// classes are separable.
pub fn severity_image(side: usize, severity: Severity, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    let mut image = tissue(side, side, &mut r);
    let mut mask = BinaryMask::zeros((side, side));
    let s = side as f64;
    let (size, strength) = match severity {
        Severity::Low => (0.12, 0.35),
        Severity::Mid => (0.25, 0.65),
        Severity::High => (0.40, 1.0),
    };
    let rad = s * size * r.random_range(0.85..1.15);
    let center = (r.random_range(rad..(s - rad).max(rad + 1.0)), r.random_range(rad..(s - rad).max(rad + 1.0)));
    paint_ellipse(&mut image, &mut mask, center, (rad, rad), strength);
    image
}

/// `per_class` images of each severity, interleaved low, mid, high.
pub fn severity_dataset(per_class: usize, side: usize, seed: u64) -> Vec<(RgbImage, Severity)> {
    let mut out = Vec::with_capacity(per_class * 3);
    for i in 0..per_class {
        for sev in Severity::ALL {
            let s = seed.wrapping_mul(7919).wrapping_add((i * 3 + sev.index()) as u64);
            out.push((severity_image(side, sev, s), sev));
        }
    }
    out
}

/// Probability rows of a simulated base classifier that picks the true
/// class with probability `accuracy` and a uniformly chosen wrong class
/// otherwise. The chosen class gets a peak in `[0.5, 0.95)`, the rest of the
/// mass is split at random.
pub fn noisy_base_probabilities(labels: &[usize], classes: usize, accuracy: f64, seed: u64) -> ndarray::Array2<f64> {
    let mut r = rng(seed);
    let mut out = ndarray::Array2::zeros((labels.len(), classes));
    for (i, &y) in labels.iter().enumerate() {
        let pick = if r.random_bool(accuracy) {
            y
        } else {
            let k = r.random_range(0..classes - 1);
            if k >= y { k + 1 } else { k }
        };
        let peak = r.random_range(0.5..0.95);
        let mut rest: Vec<f64> = (0..classes - 1).map(|_| r.random_range(0.0..1.0)).collect();
        let total: f64 = rest.iter().sum::<f64>().max(1e-12);
        rest.iter_mut().for_each(|v| *v *= (1.0 - peak) / total);
        let mut it = rest.into_iter();
        for c in 0..classes {
            out[[i, c]] = if c == pick { peak } else { it.next().unwrap_or(0.0) };
        }
    }
    out
}

/// A slide-sized image with a few blobs, and the union mask of those blobs.
pub fn synthetic_slide(height: usize, width: usize, blobs: usize, seed: u64) -> (RgbImage, BinaryMask) {
    let mut r = rng(seed);
    let mut image = tissue(height, width, &mut r);
    let mut mask = BinaryMask::zeros((height, width));
    let short = height.min(width) as f64;
    for _ in 0..blobs {
        let radii = (r.random_range(short / 14.0..short / 7.0), r.random_range(short / 14.0..short / 7.0));
        let center = (
            r.random_range(radii.0..height as f64 - radii.0),
            r.random_range(radii.1..width as f64 - radii.1),
        );
        paint_ellipse(&mut image, &mut mask, center, radii, 1.0);
    }
    (image, mask)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `n` blob tiles with masks under `dir` plus `manifest.tsv`.
pub fn write_seg_dataset(dir: &Path, n: usize, side: usize, kind: ArtifactKind, seed: u64) -> Result<DatasetManifest> {
    ensure_dir(&dir.join("images"))?;
    ensure_dir(&dir.join("masks"))?;
    let mut entries = Vec::with_capacity(n);
    for (i, pair) in blob_dataset(n, side, seed).into_iter().enumerate() {
        let id = format!("{}_{i:04}", kind.name());
        let img = Path::new("images").join(format!("{id}.png"));
        let msk = Path::new("masks").join(format!("{id}.png"));
        save_rgb_png(&pair.image, &dir.join(&img))?;
        save_mask_png(&pair.mask, &dir.join(&msk))?;
        entries.push(ManifestEntry { tile_id: id, image_path: img, mask_path: Some(msk), severity: None, artifact_kind: Some(kind) });
    }
    let m = DatasetManifest::new(dir, entries)?;
    m.save(&dir.join("manifest.tsv"))?;
    Ok(m)
}

/// Writes `per_class` severity tiles per class under `dir` plus `manifest.tsv`.
pub fn write_severity_dataset(dir: &Path, per_class: usize, side: usize, seed: u64) -> Result<DatasetManifest> {
    ensure_dir(&dir.join("images"))?;
    let mut entries = Vec::with_capacity(per_class * 3);
    for (i, (image, sev)) in severity_dataset(per_class, side, seed).into_iter().enumerate() {
        let id = format!("sev_{}_{i:04}", sev.name());
        let img = Path::new("images").join(format!("{id}.png"));
        save_rgb_png(&image, &dir.join(&img))?;
        entries.push(ManifestEntry {
            tile_id: id,
            image_path: img,
            mask_path: None,
            severity: Some(sev),
            artifact_kind: Some(ArtifactKind::TissueFold),
        });
    }
    let m = DatasetManifest::new(dir, entries)?;
    m.save(&dir.join("manifest.tsv"))?;
    Ok(m)
}
