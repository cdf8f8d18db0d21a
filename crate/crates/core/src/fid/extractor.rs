use image::RgbImage;

use crate::imaging::{luma, resize_bilinear};

/// Maps an image to a fixed-length feature vector. Implementations must be
/// deterministic and return finite values.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, img: &RgbImage) -> Vec<f64>;
}

const COLOR_BINS: usize = 16;
const ORIENT_BINS: usize = 16;
const WORK_SIZE: u32 = 64;

/// Hand-crafted 64-d descriptor: 16-bin soft histograms of each RGB channel
/// followed by a 16-bin magnitude-weighted gradient orientation histogram,
/// computed on a 64x64 bilinear resize. Each histogram sums to one.
#[derive(Debug, Clone, Copy, Default)]
pub struct HistogramExtractor;

impl HistogramExtractor {
    pub const NAME: &'static str = "color-gradient-histogram-64";
}

fn soft_bin(hist: &mut [f64], pos: f64, weight: f64, circular: bool) {
    let n = hist.len();
    let p = pos - 0.5;
    let lo = p.floor();
    let frac = p - lo;
    let lo = lo as i64;
    let hi = lo + 1;
    let wrap = |i: i64| -> Option<usize> {
        if circular {
            Some(i.rem_euclid(n as i64) as usize)
        } else if i < 0 {
            Some(0)
        } else if i >= n as i64 {
            Some(n - 1)
        } else {
            Some(i as usize)
        }
    };
    if let Some(i) = wrap(lo) {
        hist[i] += weight * (1.0 - frac);
    }
    if let Some(i) = wrap(hi) {
        hist[i] += weight * frac;
    }
}

impl FeatureExtractor for HistogramExtractor {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        3 * COLOR_BINS + ORIENT_BINS
    }

    fn extract(&self, img: &RgbImage) -> Vec<f64> {
        let img = resize_bilinear(img, WORK_SIZE, WORK_SIZE);
        let (w, h) = (WORK_SIZE as usize, WORK_SIZE as usize);
        let mut out = vec![0.0; self.dim()];
        let npix = (w * h) as f64;
        for p in img.pixels() {
            for c in 0..3 {
                let pos = p.0[c] as f64 / 256.0 * COLOR_BINS as f64;
                let hist = &mut out[c * COLOR_BINS..(c + 1) * COLOR_BINS];
                soft_bin(hist, pos, 1.0 / npix, false);
            }
        }

        let lum: Vec<f64> = img.pixels().map(|p| luma(p.0) / 255.0).collect();
        let at = |x: usize, y: usize| lum[y * w + x];
        let orient = &mut out[3 * COLOR_BINS..];
        let mut total = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                let mag = (gx * gx + gy * gy).sqrt();
                if mag <= 1e-12 {
                    continue;
                }
                let angle = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
                let pos = angle / std::f64::consts::PI * ORIENT_BINS as f64;
                soft_bin(orient, pos, mag, true);
                total += mag;
            }
        }
        if total > 0.0 {
            orient.iter_mut().for_each(|v| *v /= total);
        } else {
            orient.iter_mut().for_each(|v| *v = 1.0 / ORIENT_BINS as f64);
        }
        out
    }
}
