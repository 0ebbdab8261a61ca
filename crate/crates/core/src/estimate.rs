//! R-learner CATE/ATE estimation with cross-fitted nuisances.

use serde::{Deserialize, Serialize};

use crate::data::{Matrix, RngStream};
use crate::design::OverlapDiagnostics;
use crate::error::{Error, Result};
use crate::numkit::{cross_fit, ridge_fit, ridge_path, FoldAssignment, ForestParams, LearnerSpec};

pub const DEFAULT_PI_MIN: f64 = 0.01;

/// Forest with large leaves: noisy propensities attenuate the final stage.
pub fn default_propensity_learner() -> LearnerSpec {
    LearnerSpec::Forest(ForestParams {
        min_leaf: 50,
        ..ForestParams::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFits {
    pub mu_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    /// Rows whose raw propensity fell outside `[pi_min, 1 - pi_min]`.
    pub n_clipped: usize,
}

pub fn clip_propensity(p: f64, pi_min: f64) -> f64 {
    p.clamp(pi_min, 1.0 - pi_min)
}

fn check_inputs(x: &Matrix, y: &[f64], t: &[u8], w: &[f64]) -> Result<()> {
    let n = x.nrows();
    if y.len() != n || t.len() != n || w.len() != n {
        return Err(Error::invalid("outcome/treatment/weight lengths differ from rows"));
    }
    if t.iter().any(|&v| v > 1) {
        return Err(Error::invalid("treatment must be binary"));
    }
    if y.iter().chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("outcomes and weights must be finite, weights nonnegative"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn fit_nuisances(
    x: &Matrix,
    y: &[f64],
    t: &[u8],
    w: &[f64],
    folds: &FoldAssignment,
    outcome_learner: &LearnerSpec,
    propensity_learner: &LearnerSpec,
    pi_min: f64,
    stream: &RngStream,
) -> Result<NuisanceFits> {
    check_inputs(x, y, t, w)?;
    if !(pi_min > 0.0 && pi_min < 0.5) {
        return Err(Error::invalid(format!("pi_min must lie in (0, 0.5), got {pi_min}")));
    }
    let ones = t.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == t.len() {
        return Err(Error::invalid("both treatment arms must be present"));
    }
    for f in 0..folds.k {
        let train = folds.train_indices(f);
        let k = train.iter().filter(|&&i| t[i] == 1).count();
        if k == 0 || k == train.len() {
            return Err(Error::invalid(format!("fold {f}: training split lacks a treatment arm")));
        }
    }
    let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
    let (mu_hat, raw_pi) = rayon::join(
        || cross_fit(x, y, w, folds, outcome_learner, &stream.child(0)),
        || cross_fit(x, &tf, w, folds, propensity_learner, &stream.child(1)),
    );
    let raw_pi = raw_pi?;
    let n_clipped = raw_pi.iter().filter(|&&p| p < pi_min || p > 1.0 - pi_min).count();
    Ok(NuisanceFits {
        mu_hat: mu_hat?,
        pi_hat: raw_pi.into_iter().map(|p| clip_propensity(p, pi_min)).collect(),
        n_clipped,
    })
}

/// Ridge penalty for the final stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Penalty {
    Fixed(f64),
    /// Chosen by K-fold CV on the R-loss (the cross-fitting folds are reused).
    CrossValidated { grid: Vec<f64> },
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::CrossValidated { grid: default_lambda_grid() }
    }
}

/// 13 log-spaced values from 1e-4 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateCoefficients {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl CateCoefficients {
    pub fn eval(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.intercept + self.slopes.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub cate_hat: Vec<f64>,
    pub ate_hat: f64,
    pub cate_coefficients: CateCoefficients,
    pub lambda: f64,
    /// `(lambda, mean held-out R-loss)` when the penalty was cross-validated.
    pub cv_curve: Vec<(f64, f64)>,
    pub n_clipped: usize,
    pub ate_bias: Option<f64>,
    pub cate_rmse: Option<f64>,
    pub diagnostics: Option<OverlapDiagnostics>,
}

fn final_stage_features(x: &Matrix, resid_t: &[f64]) -> Matrix {
    Matrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| {
        resid_t[i] * if j == 0 { 1.0 } else { x[(i, j - 1)] }
    })
}

fn r_loss(z: &Matrix, pseudo: &[f64], w: &[f64], coef: &[f64], rows: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in rows {
        let fit: f64 = (0..z.ncols()).map(|j| z[(i, j)] * coef[j]).sum();
        num += w[i] * (pseudo[i] - fit).powi(2);
        den += w[i];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Final stage: weighted ridge of `Y - mu_hat` on `(T - pi_hat)·(1, x)`,
/// every coefficient penalized. `folds` is required for a
/// cross-validated penalty.
pub fn r_learner_fit(
    x: &Matrix,
    y: &[f64],
    t: &[u8],
    w: &[f64],
    nuisances: &NuisanceFits,
    penalty: &Penalty,
    folds: Option<&FoldAssignment>,
) -> Result<EstimationReport> {
    check_inputs(x, y, t, w)?;
    let n = x.nrows();
    if nuisances.mu_hat.len() != n || nuisances.pi_hat.len() != n {
        return Err(Error::invalid("nuisances are not aligned with the design"));
    }
    let resid_t: Vec<f64> = t.iter().zip(&nuisances.pi_hat).map(|(&t, p)| t as f64 - p).collect();
    if resid_t.iter().all(|r| r.abs() < 1e-12) {
        return Err(Error::NoResidualVariation);
    }
    let pseudo: Vec<f64> = y.iter().zip(&nuisances.mu_hat).map(|(a, b)| a - b).collect();
    let z = final_stage_features(x, &resid_t);

    let (lambda, cv_curve) = match penalty {
        Penalty::Fixed(l) => (*l, Vec::new()),
        Penalty::CrossValidated { grid } => {
            let folds = folds.ok_or_else(|| Error::invalid("cross-validated penalty needs folds"))?;
            if folds.n != n {
                return Err(Error::invalid("folds are not aligned with the design"));
            }
            if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(Error::invalid("lambda grid must be nonempty and positive"));
            }
            let mut grid = grid.clone();
            grid.sort_by(|a, b| b.total_cmp(a));
            let mut losses = vec![0.0; grid.len()];
            for f in 0..folds.k {
                let (train, test) = folds.split(f);
                let zt = z.select_rows(&train);
                let pt: Vec<f64> = train.iter().map(|&i| pseudo[i]).collect();
                let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
                let path = ridge_path(&zt, &pt, &wt, &grid, false).map_err(|e| e.in_fold(f))?;
                for (g, m) in path.iter().enumerate() {
                    losses[g] += r_loss(&z, &pseudo, w, &m.coefficients, &test) / folds.k as f64;
                }
            }
            // descending grid: strict improvement keeps ties at the larger penalty
            let mut best = 0;
            for g in 1..grid.len() {
                if losses[g] < losses[best] {
                    best = g;
                }
            }
            (grid[best], grid.into_iter().zip(losses).collect())
        }
    };

    let model = ridge_fit(&z, &pseudo, w, lambda, false)?;
    let coef = CateCoefficients {
        intercept: model.coefficients[0],
        slopes: model.coefficients[1..].to_vec(),
    };
    let cate_hat: Vec<f64> = (0..n).map(|i| coef.eval(x.row(i).iter().copied())).collect();
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    let ate_hat = cate_hat.iter().zip(w).map(|(c, w)| c * w).sum::<f64>() / sw;
    Ok(EstimationReport {
        cate_hat,
        ate_hat,
        cate_coefficients: coef,
        lambda,
        cv_curve,
        n_clipped: nuisances.n_clipped,
        ate_bias: None,
        cate_rmse: None,
        diagnostics: None,
    })
}

/// `(ate_hat - gamma, weighted RMSE of cate_hat against truth)`.
pub fn evaluate(report: &EstimationReport, truth: &[f64], gamma: f64, w: &[f64]) -> Result<(f64, f64)> {
    if truth.len() != report.cate_hat.len() || w.len() != truth.len() {
        return Err(Error::invalid("truth is not aligned with the estimates"));
    }
    let sw: f64 = w.iter().sum();
    let mse = report
        .cate_hat
        .iter()
        .zip(truth)
        .zip(w)
        .map(|((a, b), w)| w * (a - b).powi(2))
        .sum::<f64>()
        / sw;
    Ok((report.ate_hat - gamma, mse.sqrt()))
}

impl EstimationReport {
    pub fn attach_truth(&mut self, truth: &[f64], gamma: f64, w: &[f64]) -> Result<()> {
        let (b, r) = evaluate(self, truth, gamma, w)?;
        self.ate_bias = Some(b);
        self.cate_rmse = Some(r);
        Ok(())
    }
}
