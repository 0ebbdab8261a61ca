use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + x.row(i)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }
}

fn check_shapes(x: &Matrix, y: &[f64], w: &[f64], lambda: f64) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::invalid(format!(
            "ridge: rows {} / targets {} / weights {} disagree",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("ridge: empty training set"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("ridge: lambda must be >= 0"));
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("ridge: weights must be positive"));
    }
    Ok(())
}

/// Weighted normal equations after optional weighted centering.
///
/// Weights are rescaled to mean 1, so the loss is
/// `Σ (wᵢ/w̄)(yᵢ − xᵢβ − b)² + λ‖β‖²`: unit weights give the textbook
/// system and any common rescaling of `w` leaves the solution unchanged.
struct Normal {
    gram: Matrix,
    rhs: Vector,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn normal_equations(x: &Matrix, y: &[f64], w: &[f64], fit_intercept: bool) -> Normal {
    let (n, p) = x.shape();
    let wbar = w.iter().sum::<f64>() / n as f64;
    let wn: Vec<f64> = w.iter().map(|v| v / wbar).collect();
    let sw: f64 = wn.iter().sum();
    let (x_mean, y_mean) = if fit_intercept {
        let xm = (0..p)
            .map(|j| x.column(j).iter().zip(&wn).map(|(a, b)| a * b).sum::<f64>() / sw)
            .collect();
        let ym = y.iter().zip(&wn).map(|(a, b)| a * b).sum::<f64>() / sw;
        (xm, ym)
    } else {
        (vec![0.0; p], 0.0)
    };
    let sqrt_w: Vec<f64> = wn.iter().map(|v| v.sqrt()).collect();
    let xs = Matrix::from_fn(n, p, |i, j| (x[(i, j)] - x_mean[j]) * sqrt_w[i]);
    let ys = Vector::from_fn(n, |i, _| (y[i] - y_mean) * sqrt_w[i]);
    Normal {
        gram: xs.transpose() * &xs,
        rhs: xs.transpose() * ys,
        x_mean,
        y_mean,
    }
}

fn finish(beta: Vector, normal: &Normal, fit_intercept: bool) -> RidgeModel {
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = if fit_intercept {
        normal.y_mean
            - coefficients
                .iter()
                .zip(&normal.x_mean)
                .map(|(b, m)| b * m)
                .sum::<f64>()
    } else {
        0.0
    };
    RidgeModel {
        coefficients,
        intercept,
    }
}

/// Minimizes `Σ wᵢ(yᵢ − xᵢβ − b)² + λ‖β‖²` (weights normalized to mean 1);
/// the intercept is never penalized.
pub fn ridge_fit(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    fit_intercept: bool,
) -> Result<RidgeModel> {
    check_shapes(x, y, w, lambda)?;
    let normal = normal_equations(x, y, w, fit_intercept);
    let p = normal.gram.nrows();
    if p == 0 {
        return Ok(finish(Vector::zeros(0), &normal, fit_intercept));
    }
    let mut a = normal.gram.clone();
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let scale = (0..p).map(|j| a[(j, j)]).fold(0.0f64, f64::max);
    let chol = a.cholesky().ok_or(Error::RankDeficient)?;
    let l = chol.l();
    let min_pivot = (0..p).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
    if lambda == 0.0 && (scale == 0.0 || min_pivot <= 1e-12 * scale) {
        return Err(Error::RankDeficient);
    }
    let beta = chol.solve(&normal.rhs);
    Ok(finish(beta, &normal, fit_intercept))
}

/// Ridge solutions for several penalties from one eigendecomposition.
pub fn ridge_path(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    lambdas: &[f64],
    fit_intercept: bool,
) -> Result<Vec<RidgeModel>> {
    for &l in lambdas {
        check_shapes(x, y, w, l)?;
    }
    let normal = normal_equations(x, y, w, fit_intercept);
    let p = normal.gram.nrows();
    let eig = SymmetricEigen::new(normal.gram.clone());
    let qt_rhs = eig.eigenvectors.transpose() * &normal.rhs;
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    lambdas
        .iter()
        .map(|&lambda| {
            let mut z = Vector::zeros(p);
            for j in 0..p {
                let d = eig.eigenvalues[j].max(0.0) + lambda;
                if d <= 1e-12 * top.max(f64::MIN_POSITIVE) {
                    return Err(Error::RankDeficient);
                }
                z[j] = qt_rhs[j] / d;
            }
            Ok(finish(&eig.eigenvectors * z, &normal, fit_intercept))
        })
        .collect()
}
