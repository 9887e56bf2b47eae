//! Raster I/O and resampling helpers.

use std::path::Path;

use image::{GrayImage, Rgb, RgbImage as Rgb8};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, RgbImage};

/// Loads any supported raster as raw 8-bit values in `[0, 255]`.
pub fn load_rgb_raw(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        f64::from(img.get_pixel(x as u32, y as u32)[c])
    }))
}

/// Loads a raster scaled to `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(load_rgb_raw(path)?.mapv(|v| v / 255.0))
}

/// Loads a single-plane mask; luma above 127 is foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_shape_fn((h as usize, w as usize), |(y, x)| u8::from(img.get_pixel(x as u32, y as u32)[0] > 127)))
}

pub fn to_rgb8(image: &RgbImage) -> Rgb8 {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    Rgb8::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| (image[[y as usize, x as usize, c]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_rgb_png(image: &RgbImage, path: &Path) -> Result<()> {
    to_rgb8(image).save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([mask[[y as usize, x as usize]] * 255]));
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(image: &RgbImage, out_h: usize, out_w: usize) -> RgbImage {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    if (h, w) == (out_h, out_w) {
        return image.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    RgbImage::from_shape_fn((out_h, out_w, 3), |(y, x, c)| {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        let top = image[[y0, x0, c]] * (1.0 - tx) + image[[y0, x1, c]] * tx;
        let bot = image[[y1, x0, c]] * (1.0 - tx) + image[[y1, x1, c]] * tx;
        top * (1.0 - ty) + bot * ty
    })
}

/// Nearest-neighbour resize, keeping masks binary.
pub fn resize_mask_nearest(mask: &BinaryMask, out_h: usize, out_w: usize) -> BinaryMask {
    let (h, w) = mask.dim();
    if (h, w) == (out_h, out_w) {
        return mask.clone();
    }
    BinaryMask::from_shape_fn((out_h, out_w), |(y, x)| {
        let sy = (((y as f64 + 0.5) * h as f64 / out_h as f64) as usize).min(h - 1);
        let sx = (((x as f64 + 0.5) * w as f64 / out_w as f64) as usize).min(w - 1);
        mask[[sy, sx]]
    })
}

/// Nearest-neighbour resize of a probability map.
pub fn resize_map_nearest(map: &ndarray::Array2<f64>, out_h: usize, out_w: usize) -> ndarray::Array2<f64> {
    let (h, w) = map.dim();
    if (h, w) == (out_h, out_w) {
        return map.clone();
    }
    ndarray::Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let sy = (((y as f64 + 0.5) * h as f64 / out_h as f64) as usize).min(h - 1);
        let sx = (((x as f64 + 0.5) * w as f64 / out_w as f64) as usize).min(w - 1);
        map[[sy, sx]]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_for_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_shape_fn((5, 7, 3), |(y, x, c)| ((y * 40 + x * 9 + c * 3) % 256) as f64 / 255.0);
        let p = dir.path().join("a.png");
        save_rgb_png(&img, &p).unwrap();
        let back = load_rgb(&p).unwrap();
        for (a, b) in img.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = BinaryMask::from_shape_fn((5, 7), |(y, x)| u8::from(x > y));
        let mp = dir.path().join("m.png");
        save_mask_png(&m, &mp).unwrap();
        assert_eq!(load_mask(&mp).unwrap(), m);
    }

    #[test]
    fn missing_image_names_path() {
        let err = load_rgb(Path::new("/definitely/not/here.png")).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.png"));
    }

    #[test]
    fn resizes_preserve_constants_and_binarity() {
        let img = RgbImage::from_elem((8, 8, 3), 0.25);
        assert!(resize_bilinear(&img, 3, 5).iter().all(|&v| (v - 0.25).abs() < 1e-12));
        let m = BinaryMask::from_shape_fn((8, 8), |(y, _)| u8::from(y < 4));
        let r = resize_mask_nearest(&m, 4, 4);
        assert_eq!(r.iter().filter(|&&v| v == 1).count(), 8);
    }
}
