//! Random forest regression: bagged CART trees with variance-reduction
//! splits over a random feature subset, averaged at prediction time.
//!
//! Tree `b` draws from a ChaCha8 stream `b` of the forest seed, so trees can
//! be grown in parallel and still reproduce bit for bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Standardizer, TrainingSet};
use crate::dataset::LabeledSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means `max(1, d / 3)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    /// Evaluates the tree on a standardized vector.
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub seed: u64,
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub standardizer: Standardizer,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-tree outputs for a raw feature vector.
    pub fn tree_predictions(&self, features: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(features)?;
        Ok(self.trees.iter().map(|t| t.predict(&z)).collect())
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let outputs = self.tree_predictions(features)?;
        Ok(outputs.iter().sum::<f64>() / outputs.len() as f64)
    }
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    max_features: usize,
    min_samples_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn grow(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> RegressionTree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, samples)];
        let mut features: Vec<usize> = (0..self.rows[0].len()).collect();
        while let Some((slot, idx)) = stack.pop() {
            let mean = idx.iter().map(|&i| self.targets[i]).sum::<f64>() / idx.len() as f64;
            let first = self.targets[idx[0]];
            let pure = idx.iter().all(|&i| self.targets[i] == first);
            if pure || idx.len() < 2 * self.min_samples_leaf {
                nodes[slot] = Node::Leaf { value: mean };
                continue;
            }
            match self.best_split(&idx, &mut features, rng) {
                None => nodes[slot] = Node::Leaf { value: mean },
                Some(best) => {
                    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                        .iter()
                        .partition(|&&i| self.rows[i][best.feature] <= best.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[slot] = Node::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left,
                        right,
                    };
                    stack.push((right, right_idx));
                    stack.push((left, left_idx));
                }
            }
        }
        RegressionTree { nodes }
    }

    /// Visits features in random order, skipping ones constant at this node,
    /// until `max_features` non-constant features have been scored.
    fn best_split(&self, idx: &[usize], features: &mut [usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        features.shuffle(rng);
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.targets[i]).sum();
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut order = idx.to_vec();
        for &f in features.iter() {
            if visited >= self.max_features {
                break;
            }
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let lo = self.rows[order[0]][f];
            let hi = self.rows[order[n - 1]][f];
            if lo == hi {
                continue;
            }
            visited += 1;

            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.targets[order[k - 1]];
                let (a, b) = (self.rows[order[k - 1]][f], self.rows[order[k]][f]);
                if a == b || k < self.min_samples_leaf || n - k < self.min_samples_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // maximizing this proxy minimizes the children's squared error
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// A fitted forest plus out-of-bag predictions for the training samples,
/// in the caller's sample order (`None` where a sample was in every bag).
pub struct ForestFit {
    pub model: ForestModel,
    pub oob_predictions: Vec<Option<f64>>,
}

pub fn fit_forest_oob(train: &[LabeledSample], params: &ForestParams) -> Result<ForestFit> {
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
    }
    let (set, order) = TrainingSet::prepare(train)?;
    let n = set.rows.len();
    let d = set.dim();
    let max_features = params.max_features.unwrap_or((d / 3).max(1)).clamp(1, d);
    let grower = Grower {
        rows: &set.rows,
        targets: &set.targets,
        max_features,
        min_samples_leaf: params.min_samples_leaf,
    };

    let grown: Vec<(RegressionTree, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(b as u64);
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            for &i in &samples {
                in_bag[i] = true;
            }
            (grower.grow(samples, &mut rng), in_bag)
        })
        .collect();

    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict(&set.rows[i]);
            oob_count[i] += 1;
        }
    }
    let mut oob_predictions = vec![None; n];
    for (canonical, &original) in order.iter().enumerate() {
        if oob_count[canonical] > 0 {
            oob_predictions[original] = Some(oob_sum[canonical] / oob_count[canonical] as f64);
        }
    }

    Ok(ForestFit {
        model: ForestModel {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            seed: params.seed,
            max_features,
            min_samples_leaf: params.min_samples_leaf,
            bootstrap: params.bootstrap,
            standardizer: set.standardizer,
        },
        oob_predictions,
    })
}

pub fn fit_forest(train: &[LabeledSample], params: &ForestParams) -> Result<ForestModel> {
    fit_forest_oob(train, params).map(|f| f.model)
}
