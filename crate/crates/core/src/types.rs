//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H x W x 3` image, channel-last.
pub type RgbImage = Array3<f64>;

/// `H x W` mask with values in `{0, 1}`.
pub type BinaryMask = Array2<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    TissueFold,
    AirBubble,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 2] = [ArtifactKind::TissueFold, ArtifactKind::AirBubble];

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::TissueFold => "tissue_fold",
            ArtifactKind::AirBubble => "air_bubble",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tissue_fold" => Ok(ArtifactKind::TissueFold),
            "air_bubble" => Ok(ArtifactKind::AirBubble),
            other => Err(format!("unknown artifact kind `{other}`")),
        }
    }
}

/// Three-way artifact severity. Class indices follow declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Mid,
    High,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Low, Severity::Mid, Severity::High];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Severity> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Mid => "mid",
            Severity::High => "high",
        }
    }

    pub fn class_names() -> Vec<String> {
        Self::ALL.iter().map(|s| s.name().to_string()).collect()
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "low" => Ok(Severity::Low),
            "mid" => Ok(Severity::Mid),
            "high" => Ok(Severity::High),
            other => Err(format!("unknown severity `{other}`")),
        }
    }
}

/// An image tile, the pipeline's unit of work.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSample {
    pub id: String,
    pub image: RgbImage,
    pub source_slide: String,
    /// Top-left corner in slide pixels (x, y).
    pub origin: (i64, i64),
    /// Set when part of the tile lies outside the source image and was filled with black.
    pub padded: bool,
}

impl TileSample {
    pub fn new(id: impl Into<String>, image: RgbImage, source_slide: impl Into<String>, origin: (i64, i64)) -> Result<Self> {
        check_rgb(&image)?;
        Ok(Self { id: id.into(), image, source_slide: source_slide.into(), origin, padded: false })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }
}

/// Checks `H, W > 0`, three channels and every value in `[0, 1]`.
pub fn check_rgb(image: &RgbImage) -> Result<()> {
    let s = image.shape();
    if s[0] == 0 || s[1] == 0 || s[2] != 3 {
        return Err(Error::ShapeMismatch(format!("expected non-empty HxWx3 image, got {s:?}")));
    }
    if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Ground-truth artifact mask for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSample {
    pub tile_id: String,
    pub mask: BinaryMask,
    pub artifact_kind: ArtifactKind,
}

impl MaskSample {
    pub fn new(tile_id: impl Into<String>, mask: BinaryMask, artifact_kind: ArtifactKind) -> Result<Self> {
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { tile_id: tile_id.into(), mask, artifact_kind })
    }

    /// Checks that the mask covers the same pixel grid as `tile`.
    pub fn check_against(&self, tile: &TileSample) -> Result<()> {
        let (h, w) = self.mask.dim();
        if (h, w) != (tile.height(), tile.width()) {
            return Err(Error::ShapeMismatch(format!(
                "mask {h}x{w} does not match tile `{}` {}x{}",
                tile.id,
                tile.height(),
                tile.width()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeveritySample {
    pub tile_id: String,
    pub label: Severity,
}

/// A tile paired with its mask, the unit of segmentation training.
#[derive(Debug, Clone)]
pub struct SegPair {
    pub image: RgbImage,
    pub mask: BinaryMask,
}

impl SegPair {
    pub fn new(image: RgbImage, mask: BinaryMask) -> Result<Self> {
        let (h, w) = mask.dim();
        if image.shape()[..2] != [h, w] {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} vs mask {h}x{w}",
                &image.shape()[..2]
            )));
        }
        Ok(Self { image, mask })
    }
}

/// Stacks channel-last images into an NCHW batch tensor.
pub fn images_to_batch(images: &[&RgbImage]) -> ArrayD<f64> {
    let (h, w) = (images[0].shape()[0], images[0].shape()[1]);
    let mut out = ArrayD::zeros(IxDyn(&[images.len(), 3, h, w]));
    for (n, img) in images.iter().enumerate() {
        assert_eq!(img.shape(), &[h, w, 3], "batch images must share a shape");
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out[[n, c, y, x]] = img[[y, x, c]];
                }
            }
        }
    }
    out
}

/// Stacks masks into an `[N,1,H,W]` tensor of 0.0/1.0.
pub fn masks_to_batch(masks: &[&BinaryMask]) -> ArrayD<f64> {
    let (h, w) = masks[0].dim();
    let mut out = ArrayD::zeros(IxDyn(&[masks.len(), 1, h, w]));
    for (n, m) in masks.iter().enumerate() {
        for ((y, x), &v) in m.indexed_iter() {
            out[[n, 0, y, x]] = f64::from(v);
        }
    }
    out
}
