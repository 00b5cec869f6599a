//! The three feature extractors.

pub mod embed;
pub mod green;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledSample, PlantCrop};
use crate::error::{Error, Result};

pub use embed::EmbedConfig;
pub use green::GreenPipelineConfig;
pub use vocab::VocabConfig;

/// Feature extraction methods, in results-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Embed,
    Vocab,
    Green,
}

impl Extractor {
    pub const ALL: [Extractor; 3] = [Extractor::Embed, Extractor::Vocab, Extractor::Green];

    pub fn name(self) -> &'static str {
        match self {
            Extractor::Embed => "embed",
            Extractor::Vocab => "vocab",
            Extractor::Green => "green",
        }
    }

    /// Human-readable label used in the text rendering of results.
    pub fn display_name(self) -> &'static str {
        match self {
            Extractor::Embed => "ResNet",
            Extractor::Vocab => "Vocabulary Development",
            Extractor::Green => "Green Area",
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Extractor::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown extractor `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub green: GreenPipelineConfig,
    pub vocab: VocabConfig,
    pub embed: EmbedConfig,
}

/// Features of one crop for the image-based extractors.
pub fn crop_features(crop: &PlantCrop, extractor: Extractor, config: &FeatureConfig) -> Result<Vec<f64>> {
    match extractor {
        Extractor::Green => Ok(green::extract_green_features(crop, &config.green)?.to_vec()),
        Extractor::Vocab => Ok(vocab::vocab_features(crop, &config.vocab)?.to_vec()),
        Extractor::Embed => Err(Error::InvalidArgument(
            "embedding features come from an embedding file or model run".into(),
        )),
    }
}

/// Green or vocab samples for labeled crops, in crop order. Crops must carry
/// their annotation record.
pub fn extract_samples(
    crops: &[PlantCrop],
    extractor: Extractor,
    config: &FeatureConfig,
) -> Result<Vec<LabeledSample>> {
    crops
        .par_iter()
        .map(|crop| {
            let lai = crop
                .origin
                .as_ref()
                .map(|r| r.lai)
                .ok_or_else(|| Error::InvalidArgument(format!("crop `{}` has no label", crop.id)))?;
            let features = crop_features(crop, extractor, config)
                .map_err(|e| e.context(format!("crop `{}`", crop.id)))?;
            Ok(LabeledSample::new(crop.id.clone(), features, lai))
        })
        .collect()
}
