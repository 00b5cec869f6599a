//! Green-area edge pipeline: per-channel binary threshold, HSV vegetation
//! mask, Gaussian blur of the masked grayscale crop and Canny edges,
//! summarized into six coverage/contour features.

use serde::{Deserialize, Serialize};

use crate::dataset::PlantCrop;
use crate::error::Result;
use crate::imgproc::{self, EdgeParams, GreenWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenPipelineConfig {
    pub binary_cutoff: u8,
    pub edge: EdgeParams,
    pub hue_range: (f64, f64),
    pub min_s: f64,
    pub min_v: f64,
}

impl Default for GreenPipelineConfig {
    fn default() -> Self {
        let window = GreenWindow::default();
        Self {
            binary_cutoff: 50,
            edge: EdgeParams::default(),
            hue_range: window.hue_range,
            min_s: window.min_s,
            min_v: window.min_v,
        }
    }
}

impl GreenPipelineConfig {
    pub fn window(&self) -> GreenWindow {
        GreenWindow {
            hue_range: self.hue_range,
            min_s: self.min_s,
            min_v: self.min_v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.edge.validate()?;
        self.window().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenAreaFeatures {
    pub green_ratio: f64,
    pub edge_density: f64,
    pub green_edge_density: f64,
    pub mean_s_green: f64,
    pub mean_v_green: f64,
    pub crop_area: f64,
}

const NAMES: [&str; 6] = [
    "green_ratio",
    "edge_density",
    "green_edge_density",
    "mean_s_green",
    "mean_v_green",
    "crop_area",
];

/// Feature names in vector order. The order is part of the feature-file
/// contract and must not change.
pub fn green_feature_names() -> Vec<&'static str> {
    NAMES.to_vec()
}

impl GreenAreaFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.green_ratio,
            self.edge_density,
            self.green_edge_density,
            self.mean_s_green,
            self.mean_v_green,
            self.crop_area,
        ]
    }
}

pub fn extract_green_features(
    crop: &PlantCrop,
    config: &GreenPipelineConfig,
) -> Result<GreenAreaFeatures> {
    config.validate()?;

    let thresholded = imgproc::threshold_rgb(crop, config.binary_cutoff);
    let mask = imgproc::green_mask(&imgproc::rgb_to_hsv(&thresholded), &config.window())?;

    // blur and edges run on the original luma with non-green pixels zeroed
    let mut gray = imgproc::to_gray(crop);
    for (g, &m) in gray.pixels.iter_mut().zip(&mask.pixels) {
        if !m {
            *g = 0;
        }
    }
    let blurred = imgproc::gaussian_blur(&gray, config.edge.blur_sigma, config.edge.blur_kernel)?;
    let edges = imgproc::canny_edges(&blurred, &config.edge)?;

    // saturation/value describe the foliage itself, so they come from the raw crop
    let hsv = imgproc::rgb_to_hsv(crop);
    let n = crop.len() as f64;
    let green = mask.count();
    let green_edges = edges
        .pixels
        .iter()
        .zip(&mask.pixels)
        .filter(|(&e, &m)| e && m)
        .count();
    let (sum_s, sum_v) = hsv
        .pixels
        .iter()
        .zip(&mask.pixels)
        .filter(|(_, &m)| m)
        .fold((0.0, 0.0), |(s, v), (p, _)| (s + p.s, v + p.v));
    let (mean_s_green, mean_v_green) = if green == 0 {
        (0.0, 0.0)
    } else {
        (sum_s / green as f64, sum_v / green as f64)
    };

    Ok(GreenAreaFeatures {
        green_ratio: green as f64 / n,
        edge_density: edges.count() as f64 / n,
        green_edge_density: green_edges as f64 / n,
        mean_s_green,
        mean_v_green,
        crop_area: n,
    })
}
