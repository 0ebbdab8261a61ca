//! Learner specifications shared by cross-fitting, residualization and the
//! CLI configuration (`{"kind": ..., "params": {...}}`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldAssignment;
use super::forest::{forest_fit, forest_predict, ForestParams, TreeEnsemble};
use super::logistic::{l1_logistic_solve, LogisticModel, SolverOptions};
use super::ridge::{ridge_fit, RidgeModel};
use crate::data::{Matrix, RngStream};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    pub lambda: f64,
    pub fit_intercept: bool,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct L1LogisticParams {
    pub lambda: f64,
}

impl Default for L1LogisticParams {
    fn default() -> Self {
        Self { lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Ridge(RidgeParams),
    Forest(ForestParams),
    L1Logistic(L1LogisticParams),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Forest(ForestParams::default())
    }
}

#[derive(Debug, Clone)]
pub enum FittedLearner {
    Ridge(RidgeModel),
    Forest(TreeEnsemble),
    L1Logistic(LogisticModel),
}

impl FittedLearner {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        match self {
            FittedLearner::Ridge(m) => m.predict(x),
            FittedLearner::Forest(m) => forest_predict(m, x),
            FittedLearner::L1Logistic(m) => m.predict_proba(x),
        }
    }
}

impl LearnerSpec {
    pub fn fit(&self, x: &Matrix, y: &[f64], w: &[f64], stream: &RngStream) -> Result<FittedLearner> {
        Ok(match *self {
            LearnerSpec::Ridge(p) => FittedLearner::Ridge(ridge_fit(x, y, w, p.lambda, p.fit_intercept)?),
            LearnerSpec::Forest(p) => FittedLearner::Forest(forest_fit(x, y, w, p, stream)?),
            LearnerSpec::L1Logistic(p) => FittedLearner::L1Logistic(
                l1_logistic_solve(x, y, w, p.lambda, None, SolverOptions::default())?.0,
            ),
        })
    }
}

/// Out-of-fold predictions: row `i` is predicted by a model trained
/// without fold `fold_of[i]`. Fold `f` fits with `stream.child(f)`.
pub fn cross_fit(
    x: &Matrix,
    target: &[f64],
    weights: &[f64],
    folds: &FoldAssignment,
    learner: &LearnerSpec,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    if folds.n != x.nrows() || target.len() != x.nrows() || weights.len() != x.nrows() {
        return Err(crate::error::Error::invalid("cross_fit: fold/row count mismatch"));
    }
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = folds.split(f);
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| target[i]).collect();
            let wt: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
            let model = learner
                .fit(&xt, &yt, &wt, &stream.child(f as u64))
                .map_err(|e| e.in_fold(f))?;
            Ok((test.clone(), model.predict(&x.select_rows(&test))))
        })
        .collect();
    let mut out = vec![f64::NAN; x.nrows()];
    for r in per_fold {
        let (test, pred) = r?;
        for (i, p) in test.into_iter().zip(pred) {
            out[i] = p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::derive_stream;
    use crate::numkit::folds::make_folds;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn spec_json_shape() {
        let s: LearnerSpec =
            serde_json::from_str(r#"{"kind":"ridge","params":{"lambda":0.5,"fit_intercept":false}}"#).unwrap();
        assert_eq!(s, LearnerSpec::Ridge(RidgeParams { lambda: 0.5, fit_intercept: false }));
        let s: LearnerSpec = serde_json::from_str(r#"{"kind":"forest","params":{"n_trees":10}}"#).unwrap();
        assert!(matches!(s, LearnerSpec::Forest(p) if p.n_trees == 10 && p.n_candidates == 8));
        assert!(serde_json::from_str::<LearnerSpec>(r#"{"kind":"ridge","params":{"lamda":1}}"#).is_err());
        let back: LearnerSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn self_prediction() {
        let mut rng = derive_stream(1, &[]).rng();
        let n = 400;
        let x = Matrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let target: Vec<f64> = x.column(1).iter().copied().collect();
        let folds = make_folds(n, 5, None, &derive_stream(1, &[1])).unwrap();
        let spec = LearnerSpec::Forest(ForestParams { n_trees: 50, max_depth: None, min_leaf: 1, n_candidates: 8 });
        let pred = cross_fit(&x, &target, &vec![1.0; n], &folds, &spec, &derive_stream(1, &[2])).unwrap();
        let rmse = (pred.iter().zip(&target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rmse < 0.05 * 4.0, "rmse {rmse}");
        // linear learner recovers the column essentially exactly
        let lin = LearnerSpec::Ridge(RidgeParams { lambda: 1e-9, fit_intercept: true });
        let pred = cross_fit(&x, &target, &vec![1.0; n], &folds, &lin, &derive_stream(1, &[2])).unwrap();
        let rmse = (pred.iter().zip(&target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn constant_target_and_leave_one_group_out() {
        let n = 12;
        let x = Matrix::from_fn(n, 2, |i, j| (i + j) as f64);
        let ids: Vec<String> = (0..n).map(|i| format!("b{}", i / 2)).collect();
        let folds = make_folds(n, 6, Some(&ids), &derive_stream(0, &[])).unwrap();
        let pred = cross_fit(&x, &[2.5; 12], &[1.0; 12], &folds, &LearnerSpec::default(), &derive_stream(0, &[1])).unwrap();
        assert!(pred.iter().all(|&p| p == 2.5));
    }

    #[test]
    fn own_row_never_used() {
        // changing a target value in another fold cannot change row 0's
        // prediction unless that row is in row 0's training set; changing
        // row 0's own target must leave its prediction unchanged
        let mut rng = derive_stream(5, &[]).rng();
        let n = 50;
        let x = Matrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let mut y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let folds = make_folds(n, 5, None, &derive_stream(5, &[1])).unwrap();
        let spec = LearnerSpec::Forest(ForestParams { n_trees: 20, ..Default::default() });
        let a = cross_fit(&x, &y, &vec![1.0; n], &folds, &spec, &derive_stream(5, &[2])).unwrap();
        y[0] = 1e6;
        let b = cross_fit(&x, &y, &vec![1.0; n], &folds, &spec, &derive_stream(5, &[2])).unwrap();
        for i in folds.test_indices(folds.fold_of[0]) {
            assert_eq!(a[i], b[i]);
        }
    }
}
