use super::imageio::{load_mask, load_rgb, resize_bilinear, resize_mask_nearest};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::types::{RgbImage, SegPair, Severity};

/// Loads every entry that has a mask, optionally resized to `size = (h, w)`.
pub fn load_seg_pairs(manifest: &DatasetManifest, size: Option<(usize, usize)>) -> Result<Vec<(String, SegPair)>> {
    manifest
        .entries
        .iter()
        .filter(|e| e.mask_path.is_some())
        .map(|e| {
            let mut image = load_rgb(&manifest.resolve(&e.image_path))?;
            let mask_path = e.mask_path.as_ref().expect("filtered");
            let mut mask = load_mask(&manifest.resolve(mask_path))?;
            if let Some((h, w)) = size {
                image = resize_bilinear(&image, h, w);
                mask = resize_mask_nearest(&mask, h, w);
            }
            Ok((e.tile_id.clone(), SegPair::new(image, mask)?))
        })
        .collect()
}

/// Loads every entry with a severity label, resized to `side x side`.
pub fn load_severity_samples(manifest: &DatasetManifest, side: usize) -> Result<Vec<(String, RgbImage, Severity)>> {
    let out: Vec<_> = manifest
        .entries
        .iter()
        .filter_map(|e| e.severity.map(|s| (e, s)))
        .map(|(e, s)| {
            let img = load_rgb(&manifest.resolve(&e.image_path))?;
            Ok((e.tile_id.clone(), resize_bilinear(&img, side, side), s))
        })
        .collect::<Result<_>>()?;
    if out.is_empty() && !manifest.is_empty() {
        return Err(Error::Empty("manifest has no severity-labelled entries".into()));
    }
    Ok(out)
}
