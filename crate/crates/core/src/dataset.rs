//! Annotation parsing, per-plant crop extraction, labeled samples and
//! train/test splitting.
//!
//! Annotations are a CSV file with header `image,x,y,w,h,lai`, one plant per
//! row. Image paths are relative to an image root directory. Each record gets
//! a stable crop id derived from its image path and its ordinal among the
//! records of that image, e.g. `field/img_004_2` for the third plant of
//! `field/img_004.png`. The same id keys crops in embedding files and in
//! feature files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in source-image pixel coordinates. `x`/`y` may be
/// negative when a hand-drawn box overshoots the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "bounding box must have positive size, got {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Intersects the box with a `width`x`height` frame. Returns
    /// `(x0, y0, w, h)` or `None` if nothing overlaps.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + i64::from(self.w)).min(i64::from(width));
        let y1 = (self.y + i64::from(self.h)).min(i64::from(height));
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some((x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub crop_id: String,
    pub source_image_path: PathBuf,
    pub bbox: BoundingBox,
    pub lai: f64,
}

/// One plant's RGB pixels, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantCrop {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub origin: Option<AnnotationRecord>,
}

impl PlantCrop {
    pub fn new(id: impl Into<String>, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("crop must be at least 1x1".into()));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "crop buffer holds {} bytes, expected {expected} for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            pixels,
            origin: None,
        })
    }

    /// Builds a crop by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        id: impl Into<String>,
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            id: id.into(),
            width,
            height,
            pixels,
            origin: None,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("crop buffer length matches its dimensions")
    }
}

/// A feature vector paired with its ground-truth LAI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub lai: f64,
}

impl LabeledSample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, lai: f64) -> Self {
        Self {
            id: id.into(),
            features,
            lai,
        }
    }
}

/// Checks that every sample is finite and all share one feature length.
/// Returns that length.
pub fn check_samples(samples: &[LabeledSample]) -> Result<usize> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("no samples".into()));
    };
    let dim = first.features.len();
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.features.len(),
            });
        }
        if !s.lai.is_finite() || s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample `{}` has non-finite values",
                s.id
            )));
        }
    }
    Ok(dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn select<T: Clone>(&self, items: &[T]) -> (Vec<T>, Vec<T>) {
        let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
        (pick(&self.train_indices), pick(&self.test_indices))
    }
}

const HEADER: [&str; 6] = ["image", "x", "y", "w", "h", "lai"];

/// Reads an annotation CSV. Line numbers in errors are 1-based file lines.
pub fn parse_annotations(file: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    parse_annotations_str(&text, file)
}

pub fn parse_annotations_str(text: &str, origin: &Path) -> Result<Vec<AnnotationRecord>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if !header.is_empty() && header.iter().ne(HEADER) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut ordinals: HashMap<PathBuf, usize> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", HEADER.len(), row.len()),
            ));
        }
        let int = |col: usize| -> Result<i64> {
            row[col].parse::<i64>().map_err(|_| {
                parse_err(line, format!("column `{}`: `{}` is not an integer", HEADER[col], &row[col]))
            })
        };
        let x = int(1)?;
        let y = int(2)?;
        let w = int(3)?;
        let h = int(4)?;
        let lai: f64 = row[5]
            .parse()
            .map_err(|_| parse_err(line, format!("column `lai`: `{}` is not a number", &row[5])))?;

        let invalid = |message: String| Error::Validation {
            path: origin.to_path_buf(),
            line,
            message,
        };
        if w <= 0 || h <= 0 || w > i64::from(u32::MAX) || h > i64::from(u32::MAX) {
            return Err(invalid(format!("bounding box size {w}x{h} must be positive")));
        }
        if !(lai.is_finite() && lai > 0.0) {
            return Err(invalid(format!("lai must be positive, got {lai}")));
        }

        let source_image_path = PathBuf::from(&row[0]);
        let ordinal = ordinals.entry(source_image_path.clone()).or_insert(0);
        let crop_id = format!("{}_{}", path_stem_id(&source_image_path), ordinal);
        *ordinal += 1;

        records.push(AnnotationRecord {
            crop_id,
            source_image_path,
            bbox: BoundingBox {
                x,
                y,
                w: w as u32,
                h: h as u32,
            },
            lai,
        });
    }
    Ok(records)
}

fn path_stem_id(path: &Path) -> String {
    let without_ext = path.with_extension("");
    without_ext
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .filter(|c| c != "." && c != "/")
        .collect::<Vec<_>>()
        .join("/")
}

/// Loads an image file as 8-bit RGB, dropping any alpha channel.
pub fn load_rgb(path: &Path) -> Result<image::RgbImage> {
    if !path.is_file() {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: "file not found".into(),
        });
    }
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Copies the clamped box out of `image` without resampling.
pub fn crop_image(
    image: &image::RgbImage,
    bbox: &BoundingBox,
    id: impl Into<String>,
    record_index: usize,
) -> Result<PlantCrop> {
    let (x0, y0, w, h) =
        bbox.clamp_to(image.width(), image.height())
            .ok_or(Error::BoxOutsideImage {
                record: record_index,
                width: image.width(),
                height: image.height(),
            })?;
    let stride = image.width() as usize * 3;
    let raw = image.as_raw();
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for row in y0..y0 + h {
        let start = row as usize * stride + x0 as usize * 3;
        pixels.extend_from_slice(&raw[start..start + w as usize * 3]);
    }
    PlantCrop::new(id, w, h, pixels)
}

/// One crop per record, in record order. Each distinct source image is
/// decoded once.
pub fn extract_crops(records: &[AnnotationRecord], image_root: &Path) -> Result<Vec<PlantCrop>> {
    let mut unique: Vec<&Path> = records.iter().map(|r| r.source_image_path.as_path()).collect();
    unique.sort();
    unique.dedup();

    let images: HashMap<&Path, image::RgbImage> = unique
        .par_iter()
        .map(|p| load_rgb(&image_root.join(p)).map(|img| (*p, img)))
        .collect::<Result<_>>()?;

    records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let img = &images[rec.source_image_path.as_path()];
            let mut crop = crop_image(img, &rec.bbox, rec.crop_id.clone(), i)
                .map_err(|e| e.context(format!("crop `{}`", rec.crop_id)))?;
            crop.origin = Some(rec.clone());
            Ok(crop)
        })
        .collect()
}

/// Seeded shuffle holdout split over `samples` (see [`split_indices`]).
pub fn split_dataset<T>(samples: &[T], test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    split_indices(samples.len(), test_fraction, seed)
}

/// Seeded shuffle holdout split. `|test| = round(test_fraction * n)`,
/// kept within `[1, n - 1]`. Both index lists are returned sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples to split, got {n}"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_indices = order[..n_test].to_vec();
    let mut train_indices = order[n_test..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(DatasetSplit {
        train_indices,
        test_indices,
        seed,
    })
}

/// Descriptive statistics of the LAI labels. Standard deviation uses
/// divisor n.
pub fn dataset_stats(samples: &[LabeledSample]) -> Result<DatasetStats> {
    label_stats(samples.iter().map(|s| s.lai))
}

pub fn label_stats(labels: impl IntoIterator<Item = f64>) -> Result<DatasetStats> {
    let labels: Vec<f64> = labels.into_iter().collect();
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labels to summarize".into()));
    }
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let var = labels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DatasetStats {
        count: labels.len(),
        // rounding can push the mean a hair outside [min, max] for near-constant labels
        mean: mean.clamp(min, max),
        std_dev: var.sqrt(),
        min,
        max,
    })
}
