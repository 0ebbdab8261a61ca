use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Principal axes of a data matrix, ordered by descending variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One principal axis per row.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    fn component_matrix(&self) -> Matrix {
        let k = self.components.len();
        let d = self.mean.len();
        Matrix::from_fn(k, d, |i, j| self.components[i][j])
    }

    fn centered(&self, x: &Matrix) -> Matrix {
        let mut c = x.clone();
        for j in 0..c.ncols() {
            let m = self.mean[j];
            c.column_mut(j).add_scalar_mut(-m);
        }
        c
    }

    /// Scores of `x` on the retained axes (rows x components).
    pub fn transform(&self, x: &Matrix) -> Matrix {
        self.centered(x) * self.component_matrix().transpose()
    }

    /// Map scores back to the original space, adding the mean.
    pub fn inverse_transform(&self, scores: &Matrix) -> Matrix {
        let mut out = scores * self.component_matrix();
        for j in 0..out.ncols() {
            let m = self.mean[j];
            out.column_mut(j).add_scalar_mut(m);
        }
        out
    }
}

/// PCA by eigendecomposition of the population covariance matrix.
///
/// Keeps `min(rows, cols, max_components)` axes. Each axis is signed so its
/// largest-magnitude entry is positive.
pub fn fit_pca(x: &Matrix, max_components: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 rows"));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let mut centered = x.clone();
    for j in 0..d {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let k = n.min(d).min(max_components);
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1 + 1e-12 {
                    (i, v.abs())
                } else {
                    best
                }
            })
            .0;
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}
