//! Image primitives for the green-area pipeline: luma conversion, binary
//! thresholding, HSV conversion and masking, Gaussian blur and Canny edges.
//!
//! Every neighbourhood operation replicates edge pixels at the border.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataset::PlantCrop;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "gray buffer holds {} values, expected {}",
                pixels.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Pixel at `(x, y)` with coordinates clamped into the image.
    fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let x = x.clamp(0, i64::from(self.width) - 1) as u32;
        let y = y.clamp(0, i64::from(self.height) - 1) as u32;
        self.get(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    /// Degrees in `[0, 360)`.
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Hsv>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<bool>,
}

impl BinaryMask {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.pixels.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.pixels.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeParams {
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub blur_sigma: f64,
    pub blur_kernel: usize,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            low_threshold: 50.0,
            high_threshold: 150.0,
            blur_sigma: 1.4,
            blur_kernel: 5,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_threshold > 0.0 && self.low_threshold < self.high_threshold) {
            return Err(Error::InvalidArgument(format!(
                "edge thresholds must satisfy 0 < low < high, got {} / {}",
                self.low_threshold, self.high_threshold
            )));
        }
        check_kernel(self.blur_kernel)?;
        if !(self.blur_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        Ok(())
    }
}

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "blur kernel must be odd and >= 3, got {kernel}"
        )));
    }
    Ok(())
}

fn luma(rgb: [u8; 3]) -> u8 {
    let y = 0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2]);
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_gray(crop: &PlantCrop) -> GrayImage {
    GrayImage {
        width: crop.width,
        height: crop.height,
        pixels: crop
            .pixels
            .chunks_exact(3)
            .map(|p| luma([p[0], p[1], p[2]]))
            .collect(),
    }
}

/// True exactly where the pixel is strictly above `cutoff`.
pub fn threshold_binary(gray: &GrayImage, cutoff: u8) -> BinaryMask {
    BinaryMask {
        width: gray.width,
        height: gray.height,
        pixels: gray.pixels.iter().map(|&p| p > cutoff).collect(),
    }
}

/// Thresholds each RGB channel independently: channels above `cutoff`
/// become 255, the rest 0.
pub fn threshold_rgb(crop: &PlantCrop, cutoff: u8) -> PlantCrop {
    PlantCrop {
        id: crop.id.clone(),
        width: crop.width,
        height: crop.height,
        pixels: crop
            .pixels
            .iter()
            .map(|&c| if c > cutoff { 255 } else { 0 })
            .collect(),
        origin: crop.origin.clone(),
    }
}

pub fn rgb_pixel_to_hsv(rgb: [u8; 3]) -> Hsv {
    let r = f64::from(rgb[0]) / 255.0;
    let g = f64::from(rgb[1]) / 255.0;
    let b = f64::from(rgb[2]) / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    Hsv {
        h: if h >= 360.0 { h - 360.0 } else { h },
        s,
        v: max,
    }
}

pub fn hsv_pixel_to_rgb(hsv: Hsv) -> [u8; 3] {
    let c = hsv.v * hsv.s;
    let hp = hsv.h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = hsv.v - c;
    let to_u8 = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to_u8(r), to_u8(g), to_u8(b)]
}

pub fn rgb_to_hsv(crop: &PlantCrop) -> HsvImage {
    HsvImage {
        width: crop.width,
        height: crop.height,
        pixels: crop
            .pixels
            .chunks_exact(3)
            .map(|p| rgb_pixel_to_hsv([p[0], p[1], p[2]]))
            .collect(),
    }
}

/// Hue window (inclusive, degrees) and minimum saturation/value for the
/// vegetation mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenWindow {
    pub hue_range: (f64, f64),
    pub min_s: f64,
    pub min_v: f64,
}

impl Default for GreenWindow {
    fn default() -> Self {
        Self {
            hue_range: (70.0, 170.0),
            min_s: 0.15,
            min_v: 0.10,
        }
    }
}

impl GreenWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.hue_range.0 < self.hue_range.1) {
            return Err(Error::InvalidArgument(format!(
                "hue range must be increasing, got {:?}",
                self.hue_range
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Hsv) -> bool {
        p.h >= self.hue_range.0 && p.h <= self.hue_range.1 && p.s >= self.min_s && p.v >= self.min_v
    }
}

pub fn green_mask(hsv: &HsvImage, window: &GreenWindow) -> Result<BinaryMask> {
    window.validate()?;
    Ok(BinaryMask {
        width: hsv.width,
        height: hsv.height,
        pixels: hsv.pixels.iter().map(|&p| window.contains(p)).collect(),
    })
}

/// Normalized 1-D Gaussian weights for offsets `-kernel/2 ..= kernel/2`.
pub fn gaussian_kernel(sigma: f64, kernel: usize) -> Result<Vec<f64>> {
    check_kernel(kernel)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (kernel / 2) as i64;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Separable Gaussian blur, rounded back to 8 bits.
pub fn gaussian_blur(gray: &GrayImage, sigma: f64, kernel: usize) -> Result<GrayImage> {
    let weights = gaussian_kernel(sigma, kernel)?;
    let radius = (kernel / 2) as i64;
    let (w, h) = (gray.width as i64, gray.height as i64);

    let mut horizontal = vec![0.0f64; gray.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            horizontal[(y * w + x) as usize] = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * f64::from(gray.get_clamped(x + k as i64 - radius, y)))
                .sum();
        }
    }

    let mut pixels = Vec::with_capacity(gray.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let v: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, wt)| {
                    let yy = (y + k as i64 - radius).clamp(0, h - 1);
                    wt * horizontal[(yy * w + x) as usize]
                })
                .sum();
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage {
        width: gray.width,
        height: gray.height,
        pixels,
    })
}

/// 3x3 Sobel derivatives `(gx, gy)` per pixel.
pub fn sobel(gray: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (i64::from(gray.width), i64::from(gray.height));
    let mut gx = Vec::with_capacity(gray.pixels.len());
    let mut gy = Vec::with_capacity(gray.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let p = |dx: i64, dy: i64| f64::from(gray.get_clamped(x + dx, y + dy));
            gx.push(
                p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1),
            );
            gy.push(
                p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1),
            );
        }
    }
    (gx, gy)
}

pub fn sobel_magnitude(gray: &GrayImage) -> Vec<f64> {
    let (gx, gy) = sobel(gray);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

/// Step towards the gradient direction, quantized to 0/45/90/135 degrees.
/// Comparisons on magnitudes keep `(gx, gy)` and `(-gx, -gy)` in the same bin.
fn direction_step(gx: f64, gy: f64) -> (i64, i64) {
    const TAN_22_5: f64 = 0.414_213_562_373_095_03;
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay < TAN_22_5 * ax {
        (1, 0)
    } else if ax < TAN_22_5 * ay {
        (0, 1)
    } else if (gx > 0.0) == (gy > 0.0) {
        (1, 1)
    } else {
        (-1, 1)
    }
}

/// Canny edges on an already-smoothed image: Sobel gradients, non-maximum
/// suppression, double threshold and 8-connected hysteresis.
/// Only the thresholds of `params` are used here.
pub fn canny_edges(gray: &GrayImage, params: &EdgeParams) -> Result<BinaryMask> {
    if gray.width < 3 || gray.height < 3 {
        return Err(Error::InvalidArgument(format!(
            "edge detection needs at least a 3x3 image, got {}x{}",
            gray.width, gray.height
        )));
    }
    params.validate()?;
    let (w, h) = (i64::from(gray.width), i64::from(gray.height));
    let (gx, gy) = sobel(gray);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let at = |x: i64, y: i64| mag[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];

    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; mag.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = mag[i];
            if m < params.low_threshold {
                continue;
            }
            let (dx, dy) = direction_step(gx[i], gy[i]);
            // ties keep both pixels, so a half turn of the image maps edges onto edges
            if m >= at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
                class[i] = if m >= params.high_threshold { 2 } else { 1 };
            }
        }
    }

    let mut edges = vec![false; mag.len()];
    let mut queue: VecDeque<(i64, i64)> = VecDeque::new();
    for (i, &c) in class.iter().enumerate() {
        if c == 2 {
            edges[i] = true;
            queue.push_back((i as i64 % w, i as i64 / w));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for ny in (y - 1).max(0)..=(y + 1).min(h - 1) {
            for nx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                let j = (ny * w + nx) as usize;
                if class[j] == 1 && !edges[j] {
                    edges[j] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }

    Ok(BinaryMask {
        width: gray.width,
        height: gray.height,
        pixels: edges,
    })
}
