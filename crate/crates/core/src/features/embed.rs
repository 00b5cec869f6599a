//! CNN embedding features, either loaded from an embedding file or computed
//! by running a serialized ONNX feature-extractor graph over resized crops.
//!
//! Binary embedding file layout (little-endian):
//!
//! ```text
//! b"EMB1" | u32 dimension D | u32 count N
//! N x ( u16 id length | id bytes (UTF-8) | D x f32 )
//! ```
//!
//! Files with a `.csv` extension are read and written as
//! `crop_id,v0,...,v{D-1}` with a header row instead.

use std::collections::HashMap;
use std::path::Path;

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use crate::dataset::{AnnotationRecord, LabeledSample, PlantCrop};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub crop_id: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    File,
    ModelRun,
}

/// Embeddings sharing one dimension, unique by crop id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    source: EmbeddingSource,
    entries: Vec<EmbeddingVector>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize, source: EmbeddingSource) -> Self {
        Self {
            dimension,
            source,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, entry: EmbeddingVector) -> Result<()> {
        if entry.values.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: entry.values.len(),
            }
            .context(format!("embedding `{}`", entry.crop_id)));
        }
        if entry.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "embedding `{}` has non-finite values",
                entry.crop_id
            )));
        }
        if self.index.contains_key(&entry.crop_id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate crop id `{}`",
                entry.crop_id
            )));
        }
        self.index.insert(entry.crop_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, crop_id: &str) -> Option<&EmbeddingVector> {
        self.index.get(crop_id).map(|&i| &self.entries[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingVector> {
        self.entries.iter()
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_embeddings(store: &EmbeddingStore, file: &Path) -> Result<()> {
    let bytes = if is_csv(file) {
        let mut out = String::from("crop_id");
        for i in 0..store.dimension {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for e in store.iter() {
            out.push_str(&e.crop_id);
            for v in &e.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out.into_bytes()
    } else {
        encode_binary(store)?
    };
    std::fs::write(file, bytes).map_err(|e| Error::io(file, e))
}

fn encode_binary(store: &EmbeddingStore) -> Result<Vec<u8>> {
    let to_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{what} {n} exceeds u32")))
    };
    let mut out = Vec::with_capacity(12 + store.len() * (store.dimension * 4 + 16));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&to_u32(store.dimension, "dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(store.len(), "count")?.to_le_bytes());
    for e in store.iter() {
        let id = e.crop_id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| {
            Error::InvalidArgument(format!("crop id `{}` longer than 65535 bytes", e.crop_id))
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_embeddings(file: &Path) -> Result<EmbeddingStore> {
    let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
    if is_csv(file) {
        let text = String::from_utf8(bytes).map_err(|_| Error::EmbeddingFormat {
            path: file.to_path_buf(),
            message: "not valid UTF-8".into(),
        })?;
        parse_csv(&text, file)
    } else {
        decode_binary(&bytes, file)
    }
}

fn parse_csv(text: &str, file: &Path) -> Result<EmbeddingStore> {
    let fail = |message: String| Error::EmbeddingFormat {
        path: file.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| fail(e.to_string()))?;
    if header.get(0) != Some("crop_id") || header.len() < 2 {
        return Err(fail("header must be `crop_id,v0,...`".into()));
    }
    let mut store = EmbeddingStore::new(header.len() - 1, EmbeddingSource::File);
    for row in reader.records() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(0).unwrap_or_default().to_string();
        if row.len() - 1 != store.dimension {
            return Err(fail(format!(
                "row `{id}` (line {line}) has dimension {}, expected {}",
                row.len() - 1,
                store.dimension
            )));
        }
        let values = row
            .iter()
            .skip(1)
            .enumerate()
            .map(|(col, v)| {
                v.trim().parse::<f32>().map_err(|_| {
                    fail(format!("line {line}, column {}: `{v}` is not a number", col + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        store.insert(EmbeddingVector { crop_id: id, values }).map_err(|e| fail(e.to_string()))?;
    }
    Ok(store)
}

fn decode_binary(bytes: &[u8], file: &Path) -> Result<EmbeddingStore> {
    let fail = |message: String| Error::EmbeddingFormat {
        path: file.to_path_buf(),
        message,
    };
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let chunk = bytes
            .get(pos..pos + n)
            .ok_or_else(|| fail(format!("truncated while reading {what} at byte {pos}")))?;
        pos += n;
        Ok(chunk)
    };
    if take(4, "magic")? != EMBEDDING_MAGIC {
        return Err(fail("bad magic, expected `EMB1`".into()));
    }
    let dimension = u32::from_le_bytes(take(4, "dimension")?.try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(take(4, "count")?.try_into().unwrap()) as usize;
    let mut store = EmbeddingStore::new(dimension, EmbeddingSource::File);
    for row in 0..count {
        let len = u16::from_le_bytes(take(2, "id length")?.try_into().unwrap()) as usize;
        let id = std::str::from_utf8(take(len, "id")?)
            .map_err(|_| fail(format!("record {row}: id is not UTF-8")))?
            .to_string();
        let raw = take(dimension * 4, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store
            .insert(EmbeddingVector { crop_id: id, values })
            .map_err(|e| fail(format!("record {row}: {e}")))?;
    }
    if pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes after {count} records", bytes.len() - pos)));
    }
    Ok(store)
}

/// Input preprocessing for the feature-extractor graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub input_size: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub batch_size: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        // ImageNet channel statistics used by the ResNet family
        Self {
            input_size: 224,
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            batch_size: 8,
        }
    }
}

/// Bilinear resize to `input_size` squared, then per-channel
/// `(v / 255 - mean) / std`, written CHW into `out`.
pub fn preprocess_crop(crop: &PlantCrop, config: &EmbedConfig, out: &mut [f32]) {
    let size = config.input_size;
    let resized = image::imageops::resize(&crop.to_image(), size, size, FilterType::Triangle);
    let plane = (size * size) as usize;
    for (i, px) in resized.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = (f32::from(px.0[c]) / 255.0 - config.mean[c]) / config.std[c];
        }
    }
}

type Plan = std::sync::Arc<TypedRunnableModel>;

/// A loaded feature-extractor graph.
pub struct EmbeddingModel {
    model: InferenceModel,
    plans: HashMap<usize, Plan>,
    config: EmbedConfig,
}

fn model_err(e: impl std::fmt::Display) -> Error {
    Error::Model(format!("{e:#}"))
}

impl EmbeddingModel {
    pub fn load(model_file: &Path, config: EmbedConfig) -> Result<Self> {
        if !model_file.is_file() {
            return Err(Error::Model(format!("{}: file not found", model_file.display())));
        }
        if config.batch_size == 0 || config.input_size == 0 {
            return Err(Error::InvalidArgument("batch size and input size must be positive".into()));
        }
        let model = tract_onnx::onnx()
            .model_for_path(model_file)
            .map_err(|e| Error::Model(format!("{}: {e:#}", model_file.display())))?;
        if model.inputs.len() != 1 || model.outputs.len() != 1 {
            return Err(Error::Model(format!(
                "expected a single-input single-output graph, found {} inputs and {} outputs",
                model.inputs.len(),
                model.outputs.len()
            )));
        }
        Ok(Self {
            model,
            plans: HashMap::new(),
            config,
        })
    }

    fn plan(&mut self, batch: usize) -> Result<&Plan> {
        if !self.plans.contains_key(&batch) {
            let s = self.config.input_size as usize;
            let plan = self
                .model
                .clone()
                .with_input_fact(0, f32::fact([batch, 3, s, s]).into())
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(model_err)?;
            self.plans.insert(batch, plan);
        }
        Ok(&self.plans[&batch])
    }

    /// Embeds `crops` in order; returns one row per crop.
    pub fn embed(&mut self, crops: &[PlantCrop]) -> Result<Vec<Vec<f32>>> {
        let s = self.config.input_size as usize;
        let per_image = 3 * s * s;
        let mut rows = Vec::with_capacity(crops.len());
        for chunk in crops.chunks(self.config.batch_size) {
            let mut input = vec![0f32; chunk.len() * per_image];
            for (crop, slot) in chunk.iter().zip(input.chunks_exact_mut(per_image)) {
                preprocess_crop(crop, &self.config, slot);
            }
            let tensor = Tensor::from_shape(&[chunk.len(), 3, s, s], &input).map_err(model_err)?;
            let outputs = self.plan(chunk.len())?.run(tvec!(tensor.into())).map_err(model_err)?;
            let view = outputs[0].to_plain_array_view::<f32>().map_err(model_err)?;
            if view.ndim() != 2 {
                return Err(Error::Model(format!(
                    "graph output has rank {} (shape {:?}), expected 2",
                    view.ndim(),
                    view.shape()
                )));
            }
            if view.shape()[0] != chunk.len() {
                return Err(Error::Model(format!(
                    "graph returned {} rows for a batch of {}",
                    view.shape()[0],
                    chunk.len()
                )));
            }
            rows.extend(view.outer_iter().map(|r| r.iter().copied().collect::<Vec<f32>>()));
        }
        Ok(rows)
    }
}

pub fn run_embedding_model(
    crops: &[PlantCrop],
    model_file: &Path,
    config: &EmbedConfig,
) -> Result<EmbeddingStore> {
    let mut model = EmbeddingModel::load(model_file, config.clone())?;
    let rows = model.embed(crops)?;
    let dimension = rows.first().map_or(0, Vec::len);
    let mut store = EmbeddingStore::new(dimension, EmbeddingSource::ModelRun);
    for (crop, values) in crops.iter().zip(rows) {
        store.insert(EmbeddingVector {
            crop_id: crop.id.clone(),
            values,
        })?;
    }
    Ok(store)
}

/// Pairs each record with its embedding, in record order.
pub fn embeddings_to_samples(
    store: &EmbeddingStore,
    records: &[AnnotationRecord],
) -> Result<Vec<LabeledSample>> {
    records
        .iter()
        .map(|r| {
            let e = store
                .get(&r.crop_id)
                .ok_or_else(|| Error::MissingCrop(r.crop_id.clone()))?;
            Ok(LabeledSample::new(
                r.crop_id.clone(),
                e.values.iter().map(|&v| f64::from(v)).collect(),
                r.lai,
            ))
        })
        .collect()
}
