//! RGB image helpers shared by the GAN, detectors and feature extractors.

use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("image error on {path}: {message}")]
pub struct ImageError {
    pub path: String,
    pub message: String,
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, ImageError> {
    image::open(path).map(|img| img.to_rgb8()).map_err(|e| ImageError {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), ImageError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ImageError {
            path: parent.display().to_string(),
            message: e.to_string(),
        })?;
    }
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| ImageError {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Bilinear (triangle-filter) resize. Returns a copy when the size already matches.
pub fn resize_bilinear(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    image::imageops::resize(img, width, height, FilterType::Triangle)
}

/// Planar CHW layout with pixel values mapped from `[0, 255]` to `[-1, 1]`.
pub fn to_chw(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut out = vec![0.0; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = p.0[c] as f64 / 127.5 - 1.0;
        }
    }
    out
}

/// Inverse of [`to_chw`]; values are clipped to `[-1, 1]` and rounded.
pub fn from_chw(data: &[f64], width: u32, height: u32) -> RgbImage {
    let plane = (width * height) as usize;
    assert_eq!(data.len(), 3 * plane, "CHW buffer size mismatch");
    let mut img = RgbImage::new(width, height);
    for (i, p) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            let v = (data[c * plane + i].clamp(-1.0, 1.0) + 1.0) * 127.5;
            p.0[c] = v.round() as u8;
        }
    }
    img
}

/// Rec. 601 luma of one pixel in `[0, 255]`.
pub fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

pub fn mean_luminance(img: &RgbImage) -> f64 {
    let n = (img.width() * img.height()).max(1) as f64;
    img.pixels().map(|p| luma(p.0)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chw_round_trip_is_exact_on_u8() {
        let mut img = RgbImage::new(5, 3);
        for (i, p) in img.pixels_mut().enumerate() {
            *p = image::Rgb([(i * 17) as u8, (i * 31) as u8, (255 - i * 7) as u8]);
        }
        let back = from_chw(&to_chw(&img), 5, 3);
        assert_eq!(back, img);
    }

    #[test]
    fn value_range() {
        let black = RgbImage::new(2, 2);
        assert!(to_chw(&black).iter().all(|&v| v == -1.0));
        let white = RgbImage::from_pixel(2, 2, image::Rgb([255, 255, 255]));
        assert!(to_chw(&white).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn resize_identity_when_same_size() {
        let img = RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]));
        assert_eq!(resize_bilinear(&img, 4, 4), img);
        assert_eq!(resize_bilinear(&img, 8, 2).dimensions(), (8, 2));
    }
}
