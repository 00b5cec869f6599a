//! Leaf area index estimation from per-plant RGB crops.
//!
//! The pipeline reads bounding-box annotations, cuts plant crops, turns each
//! crop into a feature vector with one of three extractors (a pretrained CNN
//! embedding, a hand-crafted color/shape/texture vocabulary, or green-area
//! statistics) and fits a regressor (OLS, epsilon-SVR or random forest) that
//! maps features to LAI.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod featfile;
pub mod features;
pub mod imgproc;
pub mod regress;
pub mod synthetic;

pub use dataset::{AnnotationRecord, BoundingBox, DatasetSplit, LabeledSample, PlantCrop};
pub use error::{Error, Result};
pub use eval::{compute_metrics, render_table, run_matrix, Metrics, ResultsTable, TableFormat};
pub use features::{Extractor, FeatureConfig};
pub use regress::{ModelKind, Regressor, RegressorParams};
