use crate::error::{Error, Result};
use crate::types::{BinaryMask, RgbImage, Severity};

pub const OVERLAY_ALPHA: f64 = 0.4;

/// Tint colours: low yellow, mid orange, high red; blue when the region was
/// not graded.
pub const LOW_COLOUR: [f64; 3] = [1.0, 0.85, 0.0];
pub const MID_COLOUR: [f64; 3] = [1.0, 0.45, 0.0];
pub const HIGH_COLOUR: [f64; 3] = [0.85, 0.0, 0.0];
pub const UNGRADED_COLOUR: [f64; 3] = [0.0, 0.45, 1.0];

pub fn severity_colour(severity: Option<Severity>) -> [f64; 3] {
    match severity {
        Some(Severity::Low) => LOW_COLOUR,
        Some(Severity::Mid) => MID_COLOUR,
        Some(Severity::High) => HIGH_COLOUR,
        None => UNGRADED_COLOUR,
    }
}

/// Alpha-blends the severity colour over masked pixels; other pixels are
/// copied unchanged.
pub fn render_overlay(image: &RgbImage, mask: &BinaryMask, severity: Option<Severity>) -> Result<RgbImage> {
    let (h, w) = mask.dim();
    if image.shape() != [h, w, 3] {
        return Err(Error::ShapeMismatch(format!("image {:?} vs mask {h}x{w}", image.shape())));
    }
    let colour = severity_colour(severity);
    let mut out = image.clone();
    for ((y, x), &m) in mask.indexed_iter() {
        if m != 0 {
            for c in 0..3 {
                out[[y, x, c]] = (1.0 - OVERLAY_ALPHA) * image[[y, x, c]] + OVERLAY_ALPHA * colour[c];
            }
        }
    }
    Ok(out)
}
