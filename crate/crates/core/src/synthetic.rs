//! Seeded synthetic plots for smoke tests and demos.
//!
//! Each plant is a 64x64 crop holding a green blob of exactly
//! `round(g * 4096)` pixels on brown soil, with `g` uniform in
//! `[0.05, 0.95]` and `LAI = 3g + N(0, 0.05)`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{AnnotationRecord, BoundingBox, PlantCrop};
use crate::error::{Error, Result};

pub const CROP_SIZE: u32 = 64;
const PLANTS_PER_IMAGE: usize = 4;
const LAI_SCALE: f64 = 3.0;
const LAI_NOISE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SyntheticPlant {
    pub crop: PlantCrop,
    pub green_fraction: f64,
    pub lai: f64,
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3]) -> [u8; 3] {
    base.map(|c| (i32::from(c) + rng.random_range(-10..=10)).clamp(0, 255) as u8)
}

fn plant(rng: &mut ChaCha8Rng, noise: &Normal<f64>, id: String) -> SyntheticPlant {
    let n = (CROP_SIZE * CROP_SIZE) as usize;
    let g: f64 = rng.random_range(0.05..=0.95);
    let k = (g * n as f64).round() as usize;

    // nearest pixels to a jittered center under an elliptical metric
    let cx = rng.random_range(24.0..40.0);
    let cy = rng.random_range(24.0..40.0);
    let (ax, ay) = (rng.random_range(0.7..1.3), rng.random_range(0.7..1.3));
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let x = (i % CROP_SIZE as usize) as f64 + 0.5;
            let y = (i / CROP_SIZE as usize) as f64 + 0.5;
            let d = ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2);
            (d, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut leaf = vec![false; n];
    for &(_, i) in &order[..k] {
        leaf[i] = true;
    }

    let mut pixels = Vec::with_capacity(n * 3);
    for &is_leaf in &leaf {
        let base = if is_leaf { [30, 170, 40] } else { [130, 90, 40] };
        pixels.extend_from_slice(&jitter(rng, base));
    }
    let lai = loop {
        let v = LAI_SCALE * g + noise.sample(rng);
        if v > 0.0 {
            break v;
        }
    };
    SyntheticPlant {
        crop: PlantCrop::new(id, CROP_SIZE, CROP_SIZE, pixels).expect("valid synthetic crop"),
        green_fraction: k as f64 / n as f64,
        lai,
    }
}

/// `count` plants generated from `seed`, in memory.
pub fn synthetic_plants(count: usize, seed: u64) -> Vec<SyntheticPlant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, LAI_NOISE).expect("valid noise");
    (0..count)
        .map(|i| plant(&mut rng, &noise, format!("synthetic_{i}")))
        .collect()
}

/// Writes `count` plants as PNG strips of four under `dir/images` together
/// with `dir/annotations.csv`, and returns the records it wrote.
pub fn write_synthetic_dataset(dir: &Path, count: usize, seed: u64) -> Result<Vec<AnnotationRecord>> {
    if count == 0 {
        return Err(Error::InvalidArgument("synthetic dataset needs at least one plant".into()));
    }
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut plants = synthetic_plants(count, seed);
    // shuffle slot assignment so neighbors in an image are unrelated
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    plants.shuffle(&mut rng);

    let mut csv = String::from("image,x,y,w,h,lai\n");
    let mut records = Vec::with_capacity(count);
    for (chunk_index, chunk) in plants.chunks(PLANTS_PER_IMAGE).enumerate() {
        let name = format!("images/plot_{chunk_index:04}.png");
        let mut img = image::RgbImage::new(CROP_SIZE * chunk.len() as u32, CROP_SIZE);
        for (slot, p) in chunk.iter().enumerate() {
            let x0 = slot as u32 * CROP_SIZE;
            for y in 0..CROP_SIZE {
                for x in 0..CROP_SIZE {
                    img.put_pixel(x0 + x, y, image::Rgb(p.crop.pixel(x, y)));
                }
            }
            csv.push_str(&format!("{name},{x0},0,{CROP_SIZE},{CROP_SIZE},{}\n", p.lai));
            records.push(AnnotationRecord {
                crop_id: format!("images/plot_{chunk_index:04}_{slot}"),
                source_image_path: name.clone().into(),
                bbox: BoundingBox { x: i64::from(x0), y: 0, w: CROP_SIZE, h: CROP_SIZE },
                lai: p.lai,
            });
        }
        let path = dir.join(&name);
        img.save(&path).map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
    }
    let ann = dir.join("annotations.csv");
    fs::write(&ann, csv).map_err(|e| Error::io(&ann, e))?;
    Ok(records)
}
