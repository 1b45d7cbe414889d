use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::BinaryLabel;
use crate::error::{ensure, Error, Result};

/// Solves `(X^T X + lambda I) w = X^T y` by Cholesky factorization.
pub fn solve_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    ensure!(lambda >= 0.0 && lambda.is_finite(), Validation, "ridge lambda must be >= 0");
    ensure!(
        x.nrows() == y.len(),
        Shape,
        "{} rows against {} targets",
        x.nrows(),
        y.len()
    );
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = x.transpose() * y;
    let singular = || Error::Singular(format!("normal equations are singular at lambda = {lambda}; use lambda > 0"));
    let chol = gram.clone().cholesky().ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    if gram.nrows() > 0 && lo <= hi * 1e-7 {
        return Err(singular());
    }
    Ok(chol.solve(&rhs))
}

/// Column centering and scaling learned on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>], scale: bool) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..p)
            .map(|j| {
                if !scale {
                    return 1.0;
                }
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn matrix(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let p = self.mean.len();
        DMatrix::from_fn(rows.len(), p, |i, j| (rows[i][j] - self.mean[j]) / self.scale[j])
    }
}

fn check_rows(rows: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    ensure!(!rows.is_empty(), Validation, "no training rows");
    ensure!(
        rows.len() == n_targets,
        Shape,
        "{} rows against {} targets",
        rows.len(),
        n_targets
    );
    let p = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == p), Shape, "ragged feature rows");
    Ok(p)
}

/// Ridge regression with an unpenalized intercept (features are centered,
/// and optionally scaled to unit variance, before solving).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegression {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeRegression {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], lambda: f64, scale: bool) -> Result<Self> {
        check_rows(rows, targets.len())?;
        let standardizer = Standardizer::fit(rows, scale);
        let x = standardizer.matrix(rows);
        let mean_y = targets.iter().sum::<f64>() / targets.len() as f64;
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - mean_y));
        let w = solve_ridge(&x, &y, lambda)?;
        Ok(Self {
            standardizer,
            weights: w.iter().copied().collect(),
            intercept: mean_y,
            lambda,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .standardizer
                .apply(row)
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
    }
}

/// Linear classifier minimizing class-weighted hinge loss plus `lambda/2 |w|^2`
/// by full-batch subgradient descent with step `eta / sqrt(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearClassifier {
    pub const ITERATIONS: usize = 2000;
    pub const STEP: f64 = 0.5;

    pub fn fit(rows: &[Vec<f64>], labels: &[BinaryLabel], class_weights: (f64, f64), lambda: f64) -> Result<Self> {
        let p = check_rows(rows, labels.len())?;
        ensure!(lambda >= 0.0, Validation, "lambda must be >= 0");
        ensure!(class_weights.0 > 0.0 && class_weights.1 > 0.0, Validation, "class weights must be positive");
        let standardizer = Standardizer::fit(rows, true);
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
        let ys: Vec<f64> = labels
            .iter()
            .map(|l| if *l == BinaryLabel::High { 1.0 } else { -1.0 })
            .collect();
        let cw: Vec<f64> = labels
            .iter()
            .map(|l| if *l == BinaryLabel::High { class_weights.1 } else { class_weights.0 })
            .collect();
        let n = rows.len() as f64;
        let objective = |w: &[f64], b: f64| -> f64 {
            let hinge: f64 = xs
                .iter()
                .zip(&ys)
                .zip(&cw)
                .map(|((x, y), c)| c * (1.0 - y * (dot(w, x) + b)).max(0.0))
                .sum();
            hinge / n + 0.5 * lambda * dot(w, w)
        };
        let mut w = vec![0.0; p];
        let mut b = 0.0;
        let mut best = (objective(&w, b), w.clone(), b);
        for t in 1..=Self::ITERATIONS {
            let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
            let mut gb = 0.0;
            for ((x, y), c) in xs.iter().zip(&ys).zip(&cw) {
                if y * (dot(&w, x) + b) < 1.0 {
                    for (g, xi) in gw.iter_mut().zip(x) {
                        *g -= c * y * xi / n;
                    }
                    gb -= c * y / n;
                }
            }
            let eta = Self::STEP / (t as f64).sqrt();
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= eta * g;
            }
            b -= eta * gb;
            let obj = objective(&w, b);
            if obj < best.0 {
                best = (obj, w.clone(), b);
            }
        }
        Ok(Self {
            standardizer,
            weights: best.1,
            bias: best.2,
        })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, &self.standardizer.apply(row)) + self.bias
    }

    pub fn predict(&self, row: &[f64]) -> BinaryLabel {
        if self.decision(row) >= 0.0 {
            BinaryLabel::High
        } else {
            BinaryLabel::Low
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn design(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn interpolates_linear_targets() {
        let rows = design(30, 4, 1);
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1] + 0.5 * r[3] + 3.0).collect();
        let m = RidgeRegression::fit(&rows, &y, 0.0, false).unwrap();
        for (r, t) in rows.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-8);
        }
    }

    #[test]
    fn heavy_penalty_predicts_mean() {
        let rows = design(20, 3, 2);
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[2]).collect();
        let mean = y.iter().sum::<f64>() / 20.0;
        let m = RidgeRegression::fit(&rows, &y, 1e12, true).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.predict(&rows[0]) - mean).abs() < 1e-9);
        assert_eq!(m.intercept, mean);
    }

    #[test]
    fn normal_equation_residual() {
        let rows = design(40, 6, 3);
        let x = DMatrix::from_fn(40, 6, |i, j| rows[i][j]);
        let y = DVector::from_fn(40, |i, _| rows[i][0].sin() + 0.1 * i as f64);
        let lambda = 0.7;
        let w = solve_ridge(&x, &y, lambda).unwrap();
        let lhs = (x.transpose() * &x + DMatrix::identity(6, 6) * lambda) * &w;
        assert!((lhs - x.transpose() * &y).norm() < 1e-8);
    }

    #[test]
    fn singular_without_penalty() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(RidgeRegression::fit(&rows, &y, 0.0, false), Err(Error::Singular(_))));
        assert!(RidgeRegression::fit(&rows, &y, 0.1, false).is_ok());
    }

    #[test]
    fn separates_toy_set() {
        // Four points, separable by x0 + x1 > 1.
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.2], vec![1.0, 1.0]];
        let labels = [BinaryLabel::Low, BinaryLabel::Low, BinaryLabel::High, BinaryLabel::High];
        let m = LinearClassifier::fit(&rows, &labels, (1.0, 1.0), 1e-3).unwrap();
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict(r), *l);
        }
    }
}
