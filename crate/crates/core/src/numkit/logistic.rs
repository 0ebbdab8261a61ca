//! L1-penalized logistic regression by safeguarded coordinate descent.
//!
//! Objective: `(1/Σw) Σ wᵢ ℓ(yᵢ, b + xᵢβ) + λ‖β‖₁` with an unpenalized
//! intercept `b`. Each coordinate first tries a proximal Newton step and
//! falls back to the majorized step (curvature bound 1/4) whenever the
//! Newton step does not decrease the objective, so every sweep is monotone.

use serde::{Deserialize, Serialize};

use super::folds::make_folds;
use crate::data::{Matrix, RngStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(p: usize) -> Self {
        Self {
            intercept: 0.0,
            coefficients: vec![0.0; p],
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let eta = self.intercept
                    + x.row(i)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                sigmoid(eta)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 20_000,
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    cols: Vec<Vec<f64>>,
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn loss_at(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((e, y), w)| w * (softplus(*e) - y * e))
            .sum()
    }

    /// Loss after moving coordinate `j` (None = intercept) by `delta`.
    fn loss_shifted(&self, eta: &[f64], j: Option<usize>, delta: f64) -> f64 {
        match j {
            None => eta
                .iter()
                .zip(self.y)
                .zip(&self.w)
                .map(|((e, y), w)| {
                    let e = e + delta;
                    w * (softplus(e) - y * e)
                })
                .sum(),
            Some(j) => eta
                .iter()
                .zip(self.y)
                .zip(&self.w)
                .zip(&self.cols[j])
                .map(|(((e, y), w), x)| {
                    let e = e + delta * x;
                    w * (softplus(e) - y * e)
                })
                .sum(),
        }
    }

    /// Gradient and curvature of the data loss along a coordinate.
    fn grad_hess(&self, eta: &[f64], j: Option<usize>) -> (f64, f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        let mut bound = 0.0;
        for i in 0..eta.len() {
            let x = j.map_or(1.0, |j| self.cols[j][i]);
            let p = sigmoid(eta[i]);
            g += self.w[i] * (p - self.y[i]) * x;
            h += self.w[i] * p * (1.0 - p) * x * x;
            bound += 0.25 * self.w[i] * x * x;
        }
        (g, h, bound)
    }
}

fn validate(x: &Matrix, y: &[f64], w: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::invalid("logistic: row count mismatch"));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic: labels must be 0 or 1"));
    }
    let has0 = y.iter().any(|&v| v == 0.0);
    let has1 = y.iter().any(|&v| v == 1.0);
    if !(has0 && has1) {
        return Err(Error::invalid("logistic: both classes must be present"));
    }
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("logistic: weights must be positive"));
    }
    Ok(())
}

fn build<'a>(x: &Matrix, y: &'a [f64], w: &[f64]) -> Problem<'a> {
    let sw: f64 = w.iter().sum();
    Problem {
        cols: (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect(),
        y,
        w: w.iter().map(|v| v / sw).collect(),
    }
}

/// Penalized objective value of `model`.
pub fn l1_objective(model: &LogisticModel, x: &Matrix, y: &[f64], w: &[f64], lambda: f64) -> f64 {
    let prob = build(x, y, w);
    let eta = linear_predictor(model, &prob);
    prob.loss_at(&eta) + lambda * model.coefficients.iter().map(|b| b.abs()).sum::<f64>()
}

fn linear_predictor(model: &LogisticModel, prob: &Problem) -> Vec<f64> {
    let n = prob.y.len();
    let mut eta = vec![model.intercept; n];
    for (j, b) in model.coefficients.iter().enumerate() {
        if *b != 0.0 {
            for i in 0..n {
                eta[i] += b * prob.cols[j][i];
            }
        }
    }
    eta
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_violation(model: &LogisticModel, x: &Matrix, y: &[f64], w: &[f64], lambda: f64) -> f64 {
    let prob = build(x, y, w);
    let eta = linear_predictor(model, &prob);
    let (g0, _, _) = prob.grad_hess(&eta, None);
    let mut worst = g0.abs();
    for (j, &b) in model.coefficients.iter().enumerate() {
        let (g, _, _) = prob.grad_hess(&eta, Some(j));
        let v = if b == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g + lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: &Matrix, y: &[f64], w: &[f64]) -> f64 {
    let prob = build(x, y, w);
    let sw: f64 = prob.w.iter().sum();
    let ybar = prob.y.iter().zip(&prob.w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let eta = vec![(ybar / (1.0 - ybar)).ln(); y.len()];
    (0..x.ncols())
        .map(|j| prob.grad_hess(&eta, Some(j)).0.abs())
        .fold(0.0, f64::max)
}

/// Fit at a single penalty, optionally warm-started. Also returns the
/// objective after every sweep.
pub fn l1_logistic_solve(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    warm: Option<&LogisticModel>,
    opts: SolverOptions,
) -> Result<(LogisticModel, Vec<f64>)> {
    validate(x, y, w)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid("logistic: lambda must be >= 0"));
    }
    let prob = build(x, y, w);
    let p = x.ncols();
    let mut model = warm.cloned().unwrap_or_else(|| LogisticModel::zeros(p));
    if model.coefficients.len() != p {
        model = LogisticModel::zeros(p);
    }
    let mut eta = linear_predictor(&model, &prob);
    let mut trace = Vec::new();

    for _ in 0..opts.max_sweeps {
        let mut max_step = 0.0f64;
        for j in std::iter::once(None).chain((0..p).map(Some)) {
            let (g, h, bound) = prob.grad_hess(&eta, j);
            if bound == 0.0 {
                continue;
            }
            let (current, pen) = match j {
                None => (model.intercept, 0.0),
                Some(j) => (model.coefficients[j], lambda),
            };
            let base_loss = prob.loss_at(&eta) + pen * current.abs();
            let propose = |curv: f64| soft_threshold(current - g / curv, pen / curv);
            let mut next = current;
            let newton = if h > 1e-12 { propose(h) } else { current };
            let newton_val = prob.loss_shifted(&eta, j, newton - current) + pen * newton.abs();
            if newton != current && newton_val <= base_loss {
                next = newton;
            } else {
                let mm = propose(bound);
                let mm_val = prob.loss_shifted(&eta, j, mm - current) + pen * mm.abs();
                if mm_val <= base_loss {
                    next = mm;
                }
            }
            let delta = next - current;
            if delta != 0.0 {
                match j {
                    None => {
                        model.intercept = next;
                        eta.iter_mut().for_each(|e| *e += delta);
                    }
                    Some(j) => {
                        model.coefficients[j] = next;
                        for (e, xv) in eta.iter_mut().zip(&prob.cols[j]) {
                            *e += delta * xv;
                        }
                    }
                }
                max_step = max_step.max(delta.abs());
            }
        }
        trace.push(prob.loss_at(&eta) + lambda * model.coefficients.iter().map(|b| b.abs()).sum::<f64>());
        if max_step < opts.tol {
            break;
        }
    }
    Ok((model, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CvMetric {
    #[default]
    Accuracy,
    LogLoss,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1CvResult {
    pub best_lambda: f64,
    /// Full-data fit at the selected penalty.
    pub model: LogisticModel,
    /// (lambda, mean out-of-fold score), lambdas descending. Score is
    /// accuracy, or negative log-loss, so larger is better.
    pub cv_curve: Vec<(f64, f64)>,
    /// Per-fold fits at the selected penalty.
    pub fold_models: Vec<LogisticModel>,
}

/// K-fold selection of the penalty along a warm-started path (largest
/// lambda first). Ties in mean score go to the larger lambda.
pub fn l1_logistic_fit(
    x: &Matrix,
    y: &[f64],
    lambda_grid: &[f64],
    k_folds: usize,
    metric: CvMetric,
    stream: &RngStream,
) -> Result<L1CvResult> {
    let n = x.nrows();
    let ones = vec![1.0; n];
    validate(x, y, &ones)?;
    if lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let folds = make_folds(n, k_folds, None, &stream.child(0))?;
    let opts = SolverOptions::default();

    use rayon::prelude::*;
    let per_fold: Vec<Result<Vec<(LogisticModel, f64)>>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = folds.split(f);
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let xv = x.select_rows(&test);
            let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let wt = vec![1.0; train.len()];
            let mut warm: Option<LogisticModel> = None;
            let mut out = Vec::with_capacity(grid.len());
            for &lam in &grid {
                let (m, _) = l1_logistic_solve(&xt, &yt, &wt, lam, warm.as_ref(), opts)
                    .map_err(|e| e.in_fold(f))?;
                let p = m.predict_proba(&xv);
                let score = match metric {
                    CvMetric::Accuracy => {
                        p.iter()
                            .zip(&yv)
                            .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
                            .count() as f64
                            / yv.len() as f64
                    }
                    CvMetric::LogLoss => {
                        -p.iter()
                            .zip(&yv)
                            .map(|(p, y)| {
                                let p = p.clamp(1e-15, 1.0 - 1e-15);
                                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                            })
                            .sum::<f64>()
                            / yv.len() as f64
                    }
                };
                warm = Some(m.clone());
                out.push((m, score));
            }
            Ok(out)
        })
        .collect();
    let per_fold: Vec<Vec<(LogisticModel, f64)>> = per_fold.into_iter().collect::<Result<_>>()?;

    let mut cv_curve = Vec::with_capacity(grid.len());
    let mut best = 0usize;
    for (li, &lam) in grid.iter().enumerate() {
        let s = per_fold.iter().map(|f| f[li].1).sum::<f64>() / per_fold.len() as f64;
        cv_curve.push((lam, s));
        if s > cv_curve[best].1 {
            best = li;
        }
    }
    let best_lambda = grid[best];
    // full-data fit along the same path for warm starts
    let mut warm: Option<LogisticModel> = None;
    for &lam in &grid[..=best] {
        let (m, _) = l1_logistic_solve(x, y, &ones, lam, warm.as_ref(), opts)?;
        warm = Some(m);
    }
    Ok(L1CvResult {
        best_lambda,
        model: warm.expect("grid nonempty"),
        cv_curve,
        fold_models: per_fold.into_iter().map(|mut f| f.swap_remove(best).0).collect(),
    })
}
