use ndarray::s;

use crate::error::{Error, Result};
use crate::types::{check_rgb, RgbImage, TileSample};

/// Tile start offsets along one axis. A new tile is only started while the
/// previous one ends before the image edge.
fn starts(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    loop {
        let last = *out.last().unwrap_or(&0);
        if last + tile >= len {
            break;
        }
        out.push(last + stride);
    }
    out
}

/// Row-major tiles of `tile_side` pixels every `stride` pixels. Tiles that
/// run past the right or bottom edge are filled with black and flagged.
pub fn tile_image(image: &RgbImage, tile_side: usize, stride: usize, slide_id: &str) -> Result<Vec<TileSample>> {
    check_rgb(image)?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if tile_side == 0 || stride == 0 {
        return Err(Error::InvalidArgument("tile side and stride must be at least 1".into()));
    }
    if tile_side > h.min(w) {
        return Err(Error::InvalidArgument(format!("tile side {tile_side} exceeds the {h}x{w} image")));
    }
    let mut tiles = Vec::new();
    for (r, &y) in starts(h, tile_side, stride).iter().enumerate() {
        for (c, &x) in starts(w, tile_side, stride).iter().enumerate() {
            let (th, tw) = ((h - y).min(tile_side), (w - x).min(tile_side));
            let mut img = RgbImage::zeros((tile_side, tile_side, 3));
            img.slice_mut(s![..th, ..tw, ..]).assign(&image.slice(s![y..y + th, x..x + tw, ..]));
            let mut tile = TileSample::new(tile_id(slide_id, r, c), img, slide_id, (x as i64, y as i64))?;
            tile.padded = th < tile_side || tw < tile_side;
            tiles.push(tile);
        }
    }
    Ok(tiles)
}

pub fn tile_id(slide_id: &str, row: usize, col: usize) -> String {
    format!("{slide_id}_r{row:03}_c{col:03}")
}

/// Pixels of `tile` that lie inside an `h x w` source image, as `(rows, cols)`.
pub fn valid_extent(tile: &TileSample, h: usize, w: usize) -> (usize, usize) {
    let (x, y) = (tile.origin.0.max(0) as usize, tile.origin.1.max(0) as usize);
    (h.saturating_sub(y).min(tile.height()), w.saturating_sub(x).min(tile.width()))
}

/// Pastes tiles back at their origins, later tiles overwriting earlier ones.
pub fn reassemble(tiles: &[TileSample], h: usize, w: usize) -> RgbImage {
    let mut out = RgbImage::zeros((h, w, 3));
    for t in tiles {
        let (vh, vw) = valid_extent(t, h, w);
        let (x, y) = (t.origin.0 as usize, t.origin.1 as usize);
        out.slice_mut(s![y..y + vh, x..x + vw, ..]).assign(&t.image.slice(s![..vh, ..vw, ..]));
    }
    out
}
