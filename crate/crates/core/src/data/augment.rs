use rand::Rng;
use serde::{Deserialize, Serialize};

use super::seeded;
use crate::error::{Error, Result};
use crate::types::{BinaryMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Multiplier applied to raw pixel values, e.g. 1/255 for 8-bit input.
    pub rescale: f64,
    pub zoom_range: f64,
    pub rotation_range_degrees: f64,
    pub horizontal_flip: bool,
}

impl AugmentParams {
    /// Rescale 1/255, zoom 0.3, rotation 15 degrees, horizontal flips.
    pub fn severity_default() -> Self {
        Self { rescale: 1.0 / 255.0, zoom_range: 0.3, rotation_range_degrees: 15.0, horizontal_flip: true }
    }

    /// Rescale only, no geometric change.
    pub fn rescale_only(rescale: f64) -> Self {
        Self { rescale, zoom_range: 0.0, rotation_range_degrees: 0.0, horizontal_flip: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rescale > 0.0) || !(self.zoom_range >= 0.0) || !(self.rotation_range_degrees >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid augmentation parameters {self:?}")));
        }
        Ok(())
    }
}

/// The random transform actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    /// Values above 1 magnify the content.
    pub zoom: f64,
    pub angle_degrees: f64,
    pub flipped: bool,
}

impl AugmentDraw {
    pub fn is_identity(&self) -> bool {
        self.zoom == 1.0 && self.angle_degrees == 0.0 && !self.flipped
    }
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: RgbImage,
    pub mask: Option<BinaryMask>,
    pub draw: AugmentDraw,
}

fn draw(params: &AugmentParams, seed: u64) -> AugmentDraw {
    let mut rng = seeded(seed);
    let zoom = if params.zoom_range > 0.0 {
        rng.random_range(1.0 - params.zoom_range..=1.0 + params.zoom_range)
    } else {
        1.0
    };
    let angle_degrees = if params.rotation_range_degrees > 0.0 {
        rng.random_range(-params.rotation_range_degrees..=params.rotation_range_degrees)
    } else {
        0.0
    };
    let flipped = params.horizontal_flip && rng.random_bool(0.5);
    AugmentDraw { zoom, angle_degrees, flipped }
}

/// Maps an output pixel index to the fractional source pixel index.
struct Inverse {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    inv_zoom: f64,
    flip: bool,
    w: usize,
}

impl Inverse {
    fn new(d: &AugmentDraw, h: usize, w: usize) -> Self {
        let theta = d.angle_degrees.to_radians();
        Self {
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            cos: theta.cos(),
            sin: theta.sin(),
            inv_zoom: 1.0 / d.zoom,
            flip: d.flipped,
            w,
        }
    }

    fn source(&self, y: usize, x: usize) -> (f64, f64) {
        let x = if self.flip { self.w - 1 - x } else { x };
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        let sx = self.cx + (self.cos * dx + self.sin * dy) * self.inv_zoom - 0.5;
        let sy = self.cy + (-self.sin * dx + self.cos * dy) * self.inv_zoom - 0.5;
        (sy, sx)
    }
}

/// Rescales `image` then applies one random zoom/rotation/flip, the same
/// transform to the mask when present. Images resample bilinearly, masks by
/// nearest neighbour; pixels mapped from outside the frame are black.
pub fn augment(image: &RgbImage, mask: Option<&BinaryMask>, params: &AugmentParams, seed: u64) -> Result<Augmented> {
    params.validate()?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if let Some(m) = mask {
        if m.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!("mask {:?} vs image {h}x{w}", m.dim())));
        }
    }
    let d = draw(params, seed);
    let scaled = image.mapv(|v| (v * params.rescale).clamp(0.0, 1.0));
    if d.is_identity() {
        return Ok(Augmented { image: scaled, mask: mask.cloned(), draw: d });
    }
    let inv = Inverse::new(&d, h, w);
    let mut out = RgbImage::zeros((h, w, 3));
    let mut out_mask = mask.map(|_| BinaryMask::zeros((h, w)));
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inv.source(y, x);
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            for c in 0..3 {
                let mut acc = 0.0;
                for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                    for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                        let (yy, xx) = (y0 + oy, x0 + ox);
                        if wy * wx > 0.0 && yy >= 0.0 && xx >= 0.0 && (yy as usize) < h && (xx as usize) < w {
                            acc += wy * wx * scaled[[yy as usize, xx as usize, c]];
                        }
                    }
                }
                out[[y, x, c]] = acc.clamp(0.0, 1.0);
            }
            if let (Some(src), Some(dst)) = (mask, out_mask.as_mut()) {
                let (ny, nx) = (sy.round(), sx.round());
                if ny >= 0.0 && nx >= 0.0 && (ny as usize) < h && (nx as usize) < w {
                    dst[[y, x]] = src[[ny as usize, nx as usize]];
                }
            }
        }
    }
    Ok(Augmented { image: out, mask: out_mask, draw: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rescale_only_on_constant_128() {
        let img = RgbImage::from_elem((4, 5, 3), 128.0);
        let a = augment(&img, None, &AugmentParams::rescale_only(1.0 / 255.0), 1).unwrap();
        assert!(a.draw.is_identity());
        assert!(a.image.iter().all(|&v| (v - 0.50196).abs() < 1e-5));
        assert!(a.image.iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn zoom_draws_stay_in_range() {
        let params = AugmentParams { zoom_range: 0.3, ..AugmentParams::rescale_only(1.0) };
        let img = RgbImage::zeros((4, 4, 3));
        let zooms: Vec<f64> = (0..500).map(|s| augment(&img, None, &params, s).unwrap().draw.zoom).collect();
        assert!(zooms.iter().all(|z| (0.7..=1.3).contains(z)));
        assert!(zooms.iter().any(|&z| z < 0.8) && zooms.iter().any(|&z| z > 1.2));
    }

    #[test]
    fn mask_shape_mismatch_errors() {
        let img = RgbImage::zeros((4, 4, 3));
        let m = BinaryMask::zeros((3, 4));
        assert!(matches!(augment(&img, Some(&m), &AugmentParams::severity_default(), 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn flip_only_mirrors_exactly() {
        let mut img = RgbImage::zeros((3, 4, 3));
        img[[1, 0, 0]] = 1.0;
        let params = AugmentParams { horizontal_flip: true, ..AugmentParams::rescale_only(1.0) };
        let seed = (0..100).find(|&s| draw(&params, s).flipped).unwrap();
        let a = augment(&img, None, &params, seed).unwrap();
        assert_eq!(a.image[[1, 3, 0]], 1.0);
        assert_eq!(a.image.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    proptest! {
        #[test]
        fn mask_stays_binary_and_pixels_in_unit_range(seed: u64, fill in 0u8..2) {
            let img = RgbImage::from_shape_fn((12, 10, 3), |(y, x, c)| ((y * 31 + x * 7 + c) % 256) as f64);
            let mask = BinaryMask::from_shape_fn((12, 10), |(y, x)| u8::from((y + x) % 3 == 0) ^ fill);
            let a = augment(&img, Some(&mask), &AugmentParams::severity_default(), seed).unwrap();
            prop_assert!(a.mask.unwrap().iter().all(|&v| v <= 1));
            prop_assert!(a.image.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn image_and_mask_move_in_lockstep(seed: u64, my in 3usize..13, mx in 3usize..13) {
            // a single bright marker pixel in the image and the mask must land together
            let mut img = RgbImage::zeros((16, 16, 3));
            let mut mask = BinaryMask::zeros((16, 16));
            for c in 0..3 { img[[my, mx, c]] = 255.0; }
            mask[[my, mx]] = 1;
            let p = AugmentParams { zoom_range: 0.3, rotation_range_degrees: 15.0, horizontal_flip: true, rescale: 1.0 / 255.0 };
            let a = augment(&img, Some(&mask), &p, seed).unwrap();
            let b = augment(&img, Some(&mask), &p, seed).unwrap();
            prop_assert_eq!(&a.image, &b.image);
            let m = a.mask.unwrap();
            for ((y, x), &v) in m.indexed_iter() {
                if v == 1 {
                    prop_assert!(a.image[[y, x, 0]] > 0.0, "mask pixel ({}, {}) has no image support", y, x);
                }
            }
        }
    }
}
