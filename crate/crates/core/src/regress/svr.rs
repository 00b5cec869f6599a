//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved in the usual 2n-variable form: variables `0..n` are
//! the `alpha_i` (label +1), variables `n..2n` are the `alpha*_i`
//! (label -1), with
//!
//! ```text
//! min 1/2 b'Qb + p'b   s.t.  y'b = 0,  0 <= b <= C
//! Q_st = y_s y_t K(x_s, x_t),  p = [eps - z; eps + z]
//! ```
//!
//! Each iteration updates the maximal KKT-violating pair analytically.
//! Prediction is `f(x) = sum_i (alpha_i - alpha*_i) K(x_i, x) + b`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Standardizer, TrainingSet};
use crate::dataset::LabeledSample;
use crate::error::{Error, Result};

/// Dual coefficients at or below this magnitude are dropped from the model.
const SV_THRESHOLD: f64 = 1e-12;
const TAU: f64 = 1e-12;
/// Relative duality gap required at convergence.
pub const GAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (d * Var(X))` over the standardized training matrix.
    Auto,
    Value(f64),
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Auto => s.serialize_str("auto"),
            Gamma::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Gamma::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Gamma::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "gamma must be a number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    /// KKT violation tolerance.
    pub tolerance: f64,
    /// Pair-update budget; `None` means `10 * n^2`.
    pub max_iterations: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: Gamma::Auto,
            tolerance: 1e-3,
            max_iterations: None,
        }
    }
}

impl SvrParams {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("SVR C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "SVR epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("SVR gamma must be positive, got {g}")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("SVR tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    /// Standardized feature rows of the support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i - alpha*_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    pub standardizer: Standardizer,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvrModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let z = self.standardizer.transform(features)?;
        Ok(self.decision(&z))
    }

    /// Kernel expansion on an already standardized vector.
    pub fn decision(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * rbf(sv, z, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

/// Outcome of the dual solve, before support vectors are extracted.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// `alpha_i - alpha*_i` for every training row.
    pub coefs: Vec<f64>,
    pub bias: f64,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
}

impl DualSolution {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

struct Problem<'a> {
    kernel: &'a [f64],
    n: usize,
    targets: &'a [f64],
    c: f64,
    epsilon: f64,
}

impl Problem<'_> {
    fn label(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, s: usize, t: usize) -> f64 {
        self.label(s) * self.label(t) * self.kernel[(s % self.n) * self.n + t % self.n]
    }

    /// Primal and dual objective for the current iterate.
    fn objectives(&self, beta: &[f64], grad: &[f64], bias: f64) -> (f64, f64) {
        let n = self.n;
        let (mut quad, mut hinge, mut linear, mut tube) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let coef = beta[i] - beta[i + n];
            // (K coef)_i recovered from the gradient of the alpha half
            let u = grad[i] - self.epsilon + self.targets[i];
            quad += coef * u;
            hinge += ((self.targets[i] - u - bias).abs() - self.epsilon).max(0.0);
            linear += self.targets[i] * coef;
            tube += beta[i] + beta[i + n];
        }
        let primal = 0.5 * quad + self.c * hinge;
        let dual = -0.5 * quad - self.epsilon * tube + linear;
        (primal, dual)
    }

    fn bias(&self, beta: &[f64], grad: &[f64]) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free_sum, mut free_count) = (0.0, 0usize);
        for t in 0..2 * self.n {
            let y = self.label(t);
            let yg = y * grad[t];
            if beta[t] >= self.c {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if beta[t] <= 0.0 {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free_sum += yg;
                free_count += 1;
            }
        }
        let rho = if free_count > 0 {
            free_sum / free_count as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }

    fn solve(&self, tolerance: f64, max_iterations: usize) -> Result<DualSolution> {
        let l = 2 * self.n;
        let mut beta = vec![0.0; l];
        let mut grad: Vec<f64> = (0..l)
            .map(|t| {
                if t < self.n {
                    self.epsilon - self.targets[t]
                } else {
                    self.epsilon + self.targets[t - self.n]
                }
            })
            .collect();

        let mut iterations = 0usize;
        loop {
            // maximal violating pair
            let (mut gmax, mut i_sel) = (f64::NEG_INFINITY, usize::MAX);
            let (mut gmin, mut j_sel) = (f64::INFINITY, usize::MAX);
            for t in 0..l {
                let y = self.label(t);
                let v = -y * grad[t];
                let up = (y > 0.0 && beta[t] < self.c) || (y < 0.0 && beta[t] > 0.0);
                let low = (y > 0.0 && beta[t] > 0.0) || (y < 0.0 && beta[t] < self.c);
                if up && v > gmax {
                    gmax = v;
                    i_sel = t;
                }
                if low && v < gmin {
                    gmin = v;
                    j_sel = t;
                }
            }

            let violation = gmax - gmin;
            if i_sel == usize::MAX || j_sel == usize::MAX || violation < tolerance {
                let bias = self.bias(&beta, &grad);
                let (primal, dual) = self.objectives(&beta, &grad, bias);
                let gap_ok = primal - dual <= GAP_TOLERANCE * (1.0 + primal.abs());
                // keep tightening until the gap certifies the solution or no pair moves
                if gap_ok || i_sel == usize::MAX || j_sel == usize::MAX || violation <= 1e-13 {
                    let coefs = (0..self.n).map(|i| beta[i] - beta[i + self.n]).collect();
                    return Ok(DualSolution {
                        coefs,
                        bias,
                        primal,
                        dual,
                        iterations,
                    });
                }
            }
            if iterations >= max_iterations {
                let bias = self.bias(&beta, &grad);
                let (primal, dual) = self.objectives(&beta, &grad, bias);
                return Err(Error::NoConvergence {
                    iterations,
                    gap: primal - dual,
                });
            }
            iterations += 1;

            let (i, j) = (i_sel, j_sel);
            let (yi, yj) = (self.label(i), self.label(j));
            let qij = self.q(i, j);
            let (qii, qjj) = (self.q(i, i), self.q(j, j));
            let (old_i, old_j) = (beta[i], beta[j]);
            let c = self.c;
            if yi != yj {
                let quad = (qii + qjj + 2.0 * qij).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = beta[i] - beta[j];
                beta[i] += delta;
                beta[j] += delta;
                if diff > 0.0 {
                    if beta[j] < 0.0 {
                        beta[j] = 0.0;
                        beta[i] = diff;
                    }
                } else if beta[i] < 0.0 {
                    beta[i] = 0.0;
                    beta[j] = -diff;
                }
                if diff > 0.0 {
                    if beta[i] > c {
                        beta[i] = c;
                        beta[j] = c - diff;
                    }
                } else if beta[j] > c {
                    beta[j] = c;
                    beta[i] = c + diff;
                }
            } else {
                let quad = (qii + qjj - 2.0 * qij).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = beta[i] + beta[j];
                beta[i] -= delta;
                beta[j] += delta;
                if sum > c {
                    if beta[i] > c {
                        beta[i] = c;
                        beta[j] = sum - c;
                    }
                } else if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = sum;
                }
                if sum > c {
                    if beta[j] > c {
                        beta[j] = c;
                        beta[i] = sum - c;
                    }
                } else if beta[i] < 0.0 {
                    beta[i] = 0.0;
                    beta[j] = sum;
                }
            }

            let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
            if di != 0.0 || dj != 0.0 {
                for (t, g) in grad.iter_mut().enumerate() {
                    *g += self.q(i, t) * di + self.q(j, t) * dj;
                }
            }
        }
    }
}

fn auto_gamma(rows: &[Vec<f64>]) -> f64 {
    let d = rows[0].len();
    let count = (rows.len() * d) as f64;
    let mean = rows.iter().flatten().sum::<f64>() / count;
    let var = rows.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

/// Solves the dual on rows that are already scaled as the caller wants.
/// Returns the model (with `standardizer`) and the raw dual solution.
pub fn fit_svr_rows(
    rows: &[Vec<f64>],
    targets: &[f64],
    standardizer: Standardizer,
    params: &SvrParams,
) -> Result<(SvrModel, DualSolution)> {
    params.validate()?;
    let n = rows.len();
    if n < 2 || targets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "SVR needs at least 2 rows with one target each, got {n} rows and {} targets",
            targets.len()
        )));
    }
    let gamma = match params.gamma {
        Gamma::Auto => auto_gamma(rows),
        Gamma::Value(g) => g,
    };
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in 0..i {
            let k = rbf(&rows[i], &rows[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let problem = Problem {
        kernel: &kernel,
        n,
        targets,
        c: params.c,
        epsilon: params.epsilon,
    };
    let max_iterations = params.max_iterations.unwrap_or(10 * n * n);
    let solution = problem.solve(params.tolerance, max_iterations)?;

    let (mut support_vectors, mut dual_coefs) = (Vec::new(), Vec::new());
    for (row, &coef) in rows.iter().zip(&solution.coefs) {
        if coef.abs() > SV_THRESHOLD {
            support_vectors.push(row.clone());
            dual_coefs.push(coef);
        }
    }
    let model = SvrModel {
        support_vectors,
        dual_coefs,
        bias: solution.bias,
        gamma,
        c: params.c,
        epsilon: params.epsilon,
        standardizer,
    };
    Ok((model, solution))
}

pub fn fit_svr_with_solution(
    train: &[LabeledSample],
    params: &SvrParams,
) -> Result<(SvrModel, DualSolution)> {
    params.validate()?;
    let (set, _) = TrainingSet::prepare(train)?;
    fit_svr_rows(&set.rows, &set.targets, set.standardizer, params)
}

pub fn fit_svr(train: &[LabeledSample], params: &SvrParams) -> Result<SvrModel> {
    fit_svr_with_solution(train, params).map(|(m, _)| m)
}
