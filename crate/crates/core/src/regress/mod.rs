//! LAI regressors: ordinary least squares, epsilon-SVR with an RBF kernel
//! and a random forest, behind one fit/predict/serialize surface.
//!
//! Every model z-scores its inputs with statistics of its own training set.
//! Training rows are put into a canonical order first, so a fitted model
//! does not depend on the order in which samples were supplied.

pub mod forest;
pub mod io;
pub mod linear;
pub mod svr;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{check_samples, LabeledSample};
use crate::error::{Error, Result};

pub use forest::{fit_forest, fit_forest_oob, ForestModel, ForestParams, RegressionTree};
pub use io::{load_model, save_model, ModelBundle};
pub use linear::{fit_linear, LinearModel};
pub use svr::{fit_svr, Gamma, SvrModel, SvrParams};

/// Standard deviations below this are treated as constant features.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Per-feature mean and population standard deviation; constant
    /// features get a standard deviation of 1.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > MIN_STD {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Standardized training matrix in canonical row order.
#[derive(Debug, Clone)]
pub(crate) struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub standardizer: Standardizer,
}

fn canonical_cmp(a: &LabeledSample, b: &LabeledSample) -> Ordering {
    a.features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.lai.total_cmp(&b.lai))
}

/// Indices of `train` in canonical order (lexicographic on features, then
/// label).
pub(crate) fn canonical_order(train: &[LabeledSample]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| canonical_cmp(&train[a], &train[b]));
    order
}

impl TrainingSet {
    pub fn prepare(train: &[LabeledSample]) -> Result<(Self, Vec<usize>)> {
        if train.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 training samples, got {}",
                train.len()
            )));
        }
        let dim = check_samples(train)?;
        if dim == 0 {
            return Err(Error::InvalidArgument("feature vectors are empty".into()));
        }
        let order = canonical_order(train);
        let raw: Vec<Vec<f64>> = order.iter().map(|&i| train[i].features.clone()).collect();
        let standardizer = Standardizer::fit(&raw);
        let rows = raw
            .iter()
            .map(|r| standardizer.transform(r))
            .collect::<Result<_>>()?;
        let targets = order.iter().map(|&i| train[i].lai).collect();
        Ok((
            Self {
                rows,
                targets,
                standardizer,
            },
            order,
        ))
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }
}

/// The three regressors, in results-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Svm,
    Rf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::Svm, ModelKind::Rf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Rf => "rf",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Svm => "SVM",
            ModelKind::Rf => "RF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// Hyperparameters for all three regressors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorParams {
    pub svr: SvrParams,
    pub forest: ForestParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Linear(LinearModel),
    Svr(SvrModel),
    Forest(ForestModel),
}

impl Regressor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Regressor::Linear(_) => ModelKind::Lr,
            Regressor::Svr(_) => ModelKind::Svm,
            Regressor::Forest(_) => ModelKind::Rf,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Regressor::Linear(m) => m.standardizer.dim(),
            Regressor::Svr(m) => m.standardizer.dim(),
            Regressor::Forest(m) => m.standardizer.dim(),
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        match self {
            Regressor::Linear(m) => m.predict(features),
            Regressor::Svr(m) => m.predict(features),
            Regressor::Forest(m) => m.predict(features),
        }
    }
}

pub fn predict(model: &Regressor, features: &[f64]) -> Result<f64> {
    model.predict(features)
}

pub fn fit(kind: ModelKind, train: &[LabeledSample], params: &RegressorParams) -> Result<Regressor> {
    Ok(match kind {
        ModelKind::Lr => Regressor::Linear(fit_linear(train)?),
        ModelKind::Svm => Regressor::Svr(fit_svr(train, &params.svr)?),
        ModelKind::Rf => Regressor::Forest(fit_forest(train, &params.forest)?),
    })
}
