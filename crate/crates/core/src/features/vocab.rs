//! Handcrafted feature vocabulary: an HSV color histogram, the seven Hu
//! moment invariants of the grayscale crop and three Haralick texture
//! statistics of its gray-level co-occurrence matrix.
//!
//! Vector layout: `[histogram (bins^3) | hu (7) | contrast, energy, homogeneity]`,
//! 522 values with the default 8 bins per channel.

use serde::{Deserialize, Serialize};

use crate::dataset::PlantCrop;
use crate::error::{Error, Result};
use crate::imgproc::{self, GrayImage, HsvImage};

/// Guard added before taking `log10` of a Hu invariant.
pub const HU_LOG_EPSILON: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub histogram_bins: usize,
    pub glcm_levels: usize,
    pub glcm_offset: (i32, i32),
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 8,
            glcm_levels: 32,
            glcm_offset: (1, 0),
        }
    }
}

impl VocabConfig {
    pub fn feature_len(&self) -> usize {
        self.histogram_bins.pow(3) + 7 + 3
    }
}

/// Normalized joint HSV histogram. Bin `(h, s, v)` lives at
/// `(h * bins + s) * bins + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    pub bins_per_channel: usize,
    pub bins: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuMoments {
    /// Log-scaled: `-sign(h) * log10(|h| + eps)`.
    pub values: [f64; 7],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    pub levels: usize,
    pub offset: (i32, i32),
    pub symmetric: bool,
    pub normalized: bool,
    /// Row-major `levels x levels`; entry `(i, j)` at `i * levels + j`.
    pub matrix: Vec<f64>,
}

impl GlcmMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.levels + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickStats {
    pub contrast: f64,
    pub energy: f64,
    pub homogeneity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabFeatures {
    pub histogram: ColorHistogram,
    pub hu: HuMoments,
    pub texture: HaralickStats,
}

impl VocabFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.histogram.bins.len() + 10);
        v.extend_from_slice(&self.histogram.bins);
        v.extend_from_slice(&self.hu.values);
        v.extend([
            self.texture.contrast,
            self.texture.energy,
            self.texture.homogeneity,
        ]);
        v
    }
}

fn bin_index(unit: f64, bins: usize) -> usize {
    ((unit * bins as f64).floor() as usize).min(bins - 1)
}

pub fn color_histogram(hsv: &HsvImage, bins_per_channel: usize) -> Result<ColorHistogram> {
    if bins_per_channel < 2 {
        return Err(Error::InvalidArgument(format!(
            "histogram needs at least 2 bins per channel, got {bins_per_channel}"
        )));
    }
    if hsv.pixels.is_empty() {
        return Err(Error::InvalidArgument("histogram of an empty image".into()));
    }
    let b = bins_per_channel;
    let mut counts = vec![0u64; b * b * b];
    for p in &hsv.pixels {
        let hi = bin_index(p.h / 360.0, b);
        let si = bin_index(p.s, b);
        let vi = bin_index(p.v, b);
        counts[(hi * b + si) * b + vi] += 1;
    }
    let n = hsv.pixels.len() as f64;
    Ok(ColorHistogram {
        bins_per_channel: b,
        bins: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Central moments `mu_pq` for `p + q <= 3`, indexed `[p][q]`, plus `m00`.
fn central_moments(gray: &GrayImage) -> Result<[[f64; 4]; 4]> {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for y in 0..gray.height {
        for x in 0..gray.width {
            let v = f64::from(gray.get(x, y));
            m00 += v;
            m10 += x as f64 * v;
            m01 += y as f64 * v;
        }
    }
    if m00 == 0.0 {
        return Err(Error::InvalidArgument(
            "Hu moments are undefined for an all-zero image".into(),
        ));
    }
    let (cx, cy) = (m10 / m00, m01 / m00);
    let mut mu = [[0.0f64; 4]; 4];
    for y in 0..gray.height {
        let dy = y as f64 - cy;
        for x in 0..gray.width {
            let v = f64::from(gray.get(x, y));
            if v == 0.0 {
                continue;
            }
            let dx = x as f64 - cx;
            let xp = [1.0, dx, dx * dx, dx * dx * dx];
            let yp = [1.0, dy, dy * dy, dy * dy * dy];
            for p in 0..4 {
                for q in 0..4 - p {
                    mu[p][q] += xp[p] * yp[q] * v;
                }
            }
        }
    }
    Ok(mu)
}

/// The seven Hu invariants before log scaling.
pub fn hu_invariants(gray: &GrayImage) -> Result<[f64; 7]> {
    let mu = central_moments(gray)?;
    let m00 = mu[0][0];
    let eta = |p: usize, q: usize| mu[p][q] / m00.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));

    let a = n30 + n12;
    let b = n21 + n03;
    let c = n30 - 3.0 * n12;
    let d = 3.0 * n21 - n03;
    Ok([
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b),
    ])
}

pub fn log_scale_hu(h: f64) -> f64 {
    let sign = if h < 0.0 { -1.0 } else { 1.0 };
    -sign * (h.abs() + HU_LOG_EPSILON).log10()
}

pub fn hu_moments(gray: &GrayImage) -> Result<HuMoments> {
    let raw = hu_invariants(gray)?;
    Ok(HuMoments {
        values: raw.map(log_scale_hu),
    })
}

/// Equal-width quantization of an 8-bit value into `levels` bins.
pub fn quantize(value: u8, levels: usize) -> usize {
    usize::from(value) * levels / 256
}

/// Symmetric, normalized co-occurrence matrix over pixel pairs
/// `(x, y) -> (x + dx, y + dy)`.
pub fn glcm_compute(gray: &GrayImage, levels: usize, offset: (i32, i32)) -> Result<GlcmMatrix> {
    if !(2..=256).contains(&levels) {
        return Err(Error::InvalidArgument(format!(
            "GLCM levels must lie in 2..=256, got {levels}"
        )));
    }
    let (dx, dy) = (i64::from(offset.0), i64::from(offset.1));
    let (w, h) = (i64::from(gray.width), i64::from(gray.height));
    if dx.abs() >= w || dy.abs() >= h {
        return Err(Error::InvalidArgument(format!(
            "GLCM offset {offset:?} does not fit a {w}x{h} image"
        )));
    }

    let q: Vec<usize> = gray.pixels.iter().map(|&v| quantize(v, levels)).collect();
    let mut counts = vec![0u64; levels * levels];
    let (y0, y1) = ((-dy).max(0), h - dy.max(0));
    let (x0, x1) = ((-dx).max(0), w - dx.max(0));
    for y in y0..y1 {
        for x in x0..x1 {
            let i = q[(y * w + x) as usize];
            let j = q[((y + dy) * w + x + dx) as usize];
            counts[i * levels + j] += 1;
            counts[j * levels + i] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(GlcmMatrix {
        levels,
        offset,
        symmetric: true,
        normalized: true,
        matrix: counts.into_iter().map(|c| c as f64 / total as f64).collect(),
    })
}

/// Contrast, energy and homogeneity over quantized level indices.
pub fn haralick_stats(glcm: &GlcmMatrix) -> Result<HaralickStats> {
    let sum: f64 = glcm.matrix.iter().sum();
    if !glcm.normalized || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "Haralick statistics need a normalized GLCM (sum {sum})"
        )));
    }
    let (mut contrast, mut energy, mut homogeneity) = (0.0, 0.0, 0.0);
    for i in 0..glcm.levels {
        for j in 0..glcm.levels {
            let p = glcm.get(i, j);
            if p == 0.0 {
                continue;
            }
            let d2 = (i as f64 - j as f64).powi(2);
            contrast += d2 * p;
            energy += p * p;
            homogeneity += p / (1.0 + d2);
        }
    }
    Ok(HaralickStats {
        contrast,
        energy,
        homogeneity,
    })
}

pub fn vocab_features(crop: &PlantCrop, config: &VocabConfig) -> Result<VocabFeatures> {
    let hsv = imgproc::rgb_to_hsv(crop);
    let gray = imgproc::to_gray(crop);
    let histogram = color_histogram(&hsv, config.histogram_bins)?;
    let hu = hu_moments(&gray)?;
    let glcm = glcm_compute(&gray, config.glcm_levels, config.glcm_offset)?;
    let texture = haralick_stats(&glcm)?;
    Ok(VocabFeatures {
        histogram,
        hu,
        texture,
    })
}
