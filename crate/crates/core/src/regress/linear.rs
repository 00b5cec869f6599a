//! Multivariate ordinary least squares, `y = b0 + b . z`, over standardized
//! features `z`, solved through the normal equations.

use super::{Standardizer, TrainingSet};
use crate::dataset::LabeledSample;
use crate::error::{Error, Result};

/// Ridge added to the Gram matrix when it is singular or badly conditioned.
pub const FALLBACK_RIDGE: f64 = 1e-8;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    /// One coefficient per standardized feature.
    pub coefficients: Vec<f64>,
    pub standardizer: Standardizer,
    /// Ridge term used in the solve, 0 for a plain least-squares fit.
    pub ridge: f64,
}

impl LinearModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let z = self.standardizer.transform(features)?;
        Ok(self.intercept + z.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Intercept and coefficients expressed on the raw feature scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        let coefs: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.standardizer.std)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = coefs.iter().zip(&self.standardizer.mean).map(|(b, m)| b * m).sum();
        (self.intercept - shift, coefs)
    }
}

/// Lower-triangular Cholesky factor of a symmetric `n x n` row-major matrix,
/// or `None` if a pivot is not positive.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Squared ratio of the extreme Cholesky diagonal entries; a cheap
/// lower-bound style estimate of the condition number.
fn condition_estimate(l: &[f64], n: usize) -> f64 {
    let diag = (0..n).map(|i| l[i * n + i]);
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    (hi / lo).powi(2)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

pub fn fit_linear(train: &[LabeledSample]) -> Result<LinearModel> {
    let (set, _) = TrainingSet::prepare(train)?;
    let d = set.dim();
    let n = set.rows.len() as f64;
    let y_mean = if set.targets.windows(2).all(|w| w[0] == w[1]) {
        // keeps a constant target exact instead of off by summation rounding
        set.targets[0]
    } else {
        set.targets.iter().sum::<f64>() / n
    };

    // standardized columns are centered, so the intercept decouples
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for (row, &y) in set.rows.iter().zip(&set.targets) {
        let r = y - y_mean;
        for i in 0..d {
            rhs[i] += row[i] * r;
            for j in 0..=i {
                gram[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
    }

    let mut ridge = 0.0;
    let factor = loop {
        let mut a = gram.clone();
        for i in 0..d {
            a[i * d + i] += ridge;
        }
        match cholesky(&a, d) {
            Some(l) if ridge > 0.0 || condition_estimate(&l, d) <= MAX_CONDITION => break l,
            _ if ridge == 0.0 => ridge = FALLBACK_RIDGE,
            _ if ridge < 1.0 => ridge *= 10.0,
            _ => {
                return Err(Error::Numerical(
                    "normal equations are not positive definite even with ridge".into(),
                ))
            }
        }
    };
    let coefficients = cholesky_solve(&factor, d, &rhs);
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("least-squares solve produced non-finite coefficients".into()));
    }
    Ok(LinearModel {
        intercept: y_mean,
        coefficients,
        standardizer: set.standardizer,
        ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(xs: &[Vec<f64>], ys: &[f64]) -> Vec<LabeledSample> {
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (x, &y))| LabeledSample::new(format!("s{i}"), x.clone(), y))
            .collect()
    }

    #[test]
    fn recovers_noiseless_line() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        let model = fit_linear(&samples(&xs, &ys)).unwrap();
        assert_eq!(model.ridge, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((model.predict(x).unwrap() - y).abs() < 1e-8);
        }
        let (b0, b) = model.raw_coefficients();
        assert!((b0 - 1.0).abs() < 1e-10 && (b[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constant_target_gives_intercept_only() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let model = fit_linear(&samples(&xs, &[4.5; 8])).unwrap();
        assert_eq!(model.intercept, 4.5);
        assert!(model.coefficients.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn singular_design_uses_ridge() {
        // duplicated column makes the Gram matrix singular
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64, 3.0]).collect();
        let ys: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let model = fit_linear(&samples(&xs, &ys)).unwrap();
        assert!(model.ridge >= FALLBACK_RIDGE);
        assert!((model.predict(&[2.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d) = (50, 5);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| rng.random_range(-3.0..3.0) * (j + 1) as f64).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.7 - x[0] + 0.3 * x[2] + rng.random_range(-0.5..0.5))
            .collect();
        let model = fit_linear(&samples(&xs, &ys)).unwrap();

        let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { xs[i][j - 1] });
        let target = DVector::from_column_slice(&ys);
        let gram_inv = (design.transpose() * &design).try_inverse().unwrap();
        let beta = gram_inv * design.transpose() * target;

        let (b0, b) = model.raw_coefficients();
        assert!((b0 - beta[0]).abs() < 1e-6);
        for j in 0..d {
            assert!((b[j] - beta[j + 1]).abs() < 1e-6, "coef {j}: {} vs {}", b[j], beta[j + 1]);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let xs: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let ys: Vec<f64> = xs.iter().map(|x| x[1] * 3.0 + rng.random_range(0.0..1.0)).collect();
            let model = fit_linear(&samples(&xs, &ys)).unwrap();
            let mut dots = [0.0; 4];
            let mut total = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                let r = y - model.predict(x).unwrap();
                total += r;
                let z = model.standardizer.transform(x).unwrap();
                for j in 0..4 {
                    dots[j] += z[j] * r;
                }
            }
            assert!(total.abs() < 1e-6);
            assert!(dots.iter().all(|v| v.abs() < 1e-6), "{dots:?}");
        }
    }

    #[test]
    fn rejects_tiny_or_wrong_inputs() {
        assert!(fit_linear(&samples(&[vec![1.0]], &[1.0])).is_err());
        let model = fit_linear(&samples(&[vec![1.0], vec![2.0]], &[1.0, 2.0])).unwrap();
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn direct_formula_evaluation() {
        let model = LinearModel {
            intercept: 1.0,
            coefficients: vec![2.0],
            standardizer: Standardizer::identity(1),
            ridge: 0.0,
        };
        assert_eq!(model.predict(&[3.0]).unwrap(), 7.0);
    }
}
