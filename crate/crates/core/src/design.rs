//! From a scored steered corpus to an estimation design: quintile
//! treatment, base-text matching with inverse-count weights, PCA rotation,
//! residualization, and treatment-prediction diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, RngStream, SteeredRecord};
use crate::error::{Error, Result};
use crate::numkit::stats::percentile_nearest_rank;
use crate::numkit::{cross_fit, fit_pca, FoldAssignment, ForestParams, LearnerSpec, PcaModel};

pub const MIN_VALID_RECORDS: usize = 10;
pub const CLASSIFIER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    /// Indices into the input corpus, in input order.
    pub rows: Vec<usize>,
    pub treatment: Vec<u8>,
    pub weights: Vec<f64>,
    pub base_ids: Vec<String>,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
}

impl TreatmentAssignment {
    pub fn n_bases(&self) -> usize {
        self.base_ids.iter().collect::<BTreeSet<_>>().len()
    }
}

/// Quintile treatment over the valid records of one feature.
///
/// `T=1` at or above the top-quintile threshold, `T=0` at or below the
/// bottom one (nearest rank, ties to the extreme arm). Bases lacking either
/// arm are dropped, and each row is weighted by the inverse of its
/// (base, arm) count.
pub fn assign_treatment(corpus: &[SteeredRecord]) -> Result<TreatmentAssignment> {
    let valid: Vec<usize> = (0..corpus.len()).filter(|&i| corpus[i].valid).collect();
    if valid.len() < MIN_VALID_RECORDS {
        return Err(Error::invalid(format!(
            "need at least {MIN_VALID_RECORDS} valid records, found {}",
            valid.len()
        )));
    }
    let intensities: Vec<f64> = valid.iter().map(|&i| corpus[i].intensity).collect();
    let lower = percentile_nearest_rank(&intensities, 20.0);
    let negated: Vec<f64> = intensities.iter().map(|v| -v).collect();
    let upper = -percentile_nearest_rank(&negated, 20.0);
    if lower >= upper {
        return Err(Error::invalid(
            "intensity quintile thresholds coincide; treatment arms are not separable",
        ));
    }
    let arm = |v: f64| -> Option<u8> {
        if v >= upper {
            Some(1)
        } else if v <= lower {
            Some(0)
        } else {
            None
        }
    };
    let mut counts: BTreeMap<(&str, u8), usize> = BTreeMap::new();
    for &i in &valid {
        if let Some(t) = arm(corpus[i].intensity) {
            *counts.entry((corpus[i].base_id.as_str(), t)).or_default() += 1;
        }
    }
    let mut out = TreatmentAssignment {
        rows: Vec::new(),
        treatment: Vec::new(),
        weights: Vec::new(),
        base_ids: Vec::new(),
        lower_threshold: lower,
        upper_threshold: upper,
    };
    for &i in &valid {
        let Some(t) = arm(corpus[i].intensity) else { continue };
        let base = corpus[i].base_id.as_str();
        let both = counts.contains_key(&(base, 0)) && counts.contains_key(&(base, 1));
        if !both {
            continue;
        }
        out.rows.push(i);
        out.treatment.push(t);
        out.weights.push(1.0 / counts[&(base, t)] as f64);
        out.base_ids.push(base.to_string());
    }
    if out.rows.is_empty() {
        return Err(Error::invalid("no matched bases"));
    }
    Ok(out)
}

/// Stack the embeddings of the selected records.
pub fn embedding_matrix(corpus: &[SteeredRecord], rows: &[usize]) -> Result<Matrix> {
    let d = rows
        .first()
        .map(|&i| corpus[i].embedding.len())
        .ok_or_else(|| Error::invalid("no rows selected"))?;
    if d == 0 {
        return Err(Error::invalid("empty embeddings"));
    }
    if let Some(&bad) = rows.iter().find(|&&i| corpus[i].embedding.len() != d) {
        return Err(Error::invalid(format!(
            "record {bad}: embedding length {} != {d}",
            corpus[bad].embedding.len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), d, |r, j| corpus[rows[r]].embedding[j]))
}

/// Project centered embeddings onto all `min(rows, dims)` principal axes.
pub fn rotate(embeddings: &Matrix) -> Result<(Matrix, PcaModel)> {
    let pca = fit_pca(embeddings, usize::MAX)?;
    Ok((pca.transform(embeddings), pca))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residualization {
    #[serde(alias = "raw")]
    None,
    DimByDim,
    DropPc1,
}

impl Residualization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Residualization::None => "none",
            Residualization::DimByDim => "dim_by_dim",
            Residualization::DropPc1 => "drop_pc1",
        }
    }
}

fn check_arms_per_split(t: &[u8], folds: &FoldAssignment) -> Result<()> {
    for f in 0..folds.k {
        let train = folds.train_indices(f);
        let ones = train.iter().filter(|&&i| t[i] == 1).count();
        if ones == 0 || ones == train.len() {
            return Err(Error::invalid(format!(
                "fold {f}: training split lacks a treatment arm"
            )));
        }
    }
    Ok(())
}

/// Replace each column by its residual from a cross-fitted prediction on
/// the treatment alone. Column `j` uses `stream.child(j)`.
pub fn residualize_dim_by_dim(
    x: &Matrix,
    t: &[u8],
    w: &[f64],
    folds: &FoldAssignment,
    learner: &LearnerSpec,
    stream: &RngStream,
) -> Result<Matrix> {
    if t.len() != x.nrows() {
        return Err(Error::invalid("treatment length differs from rows"));
    }
    check_arms_per_split(t, folds)?;
    let tm = Matrix::from_fn(x.nrows(), 1, |i, _| t[i] as f64);
    let cols: Vec<Result<Vec<f64>>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let target: Vec<f64> = x.column(j).iter().copied().collect();
            let fitted = cross_fit(&tm, &target, w, folds, learner, &stream.child(j as u64))
                .map_err(|e| e.in_column(j))?;
            Ok(target.iter().zip(fitted).map(|(a, b)| a - b).collect())
        })
        .collect();
    let mut out = Matrix::zeros(x.nrows(), x.ncols());
    for (j, c) in cols.into_iter().enumerate() {
        let c = c?;
        out.column_mut(j).copy_from_slice(&c);
    }
    Ok(out)
}

pub fn residualize_drop_pc1(x: &Matrix) -> Result<Matrix> {
    if x.ncols() < 2 {
        return Err(Error::invalid("drop_pc1 needs at least 2 columns"));
    }
    Ok(x.columns(1, x.ncols() - 1).into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub x_resid: Option<Matrix>,
    pub treatment: Vec<u8>,
    pub weights: Vec<f64>,
    pub base_ids: Vec<String>,
    pub residualization: Residualization,
    pub pca: PcaModel,
}

impl DesignMatrix {
    /// Covariates the estimator should control for.
    pub fn controls(&self) -> &Matrix {
        self.x_resid.as_ref().unwrap_or(&self.x)
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapDiagnostics {
    pub acc_raw: f64,
    pub acc_resid: f64,
    /// Per principal component: accuracy using that component of `X`.
    pub per_component_raw: Vec<f64>,
    /// Same component after residualization (dropped components score as a
    /// constant predictor).
    pub per_component_resid: Vec<f64>,
    pub per_component_gap: Vec<f64>,
}

/// Default classifier for treatment-prediction diagnostics.
pub fn default_diagnostic_learner() -> LearnerSpec {
    LearnerSpec::Forest(ForestParams {
        n_trees: 30,
        max_depth: Some(8),
        min_leaf: 20,
        n_candidates: 8,
    })
}

/// Fold-averaged out-of-sample accuracy of thresholded predictions.
pub fn oos_accuracy(
    x: &Matrix,
    t: &[u8],
    w: &[f64],
    folds: &FoldAssignment,
    learner: &LearnerSpec,
    stream: &RngStream,
) -> Result<f64> {
    let target: Vec<f64> = t.iter().map(|&v| v as f64).collect();
    let pred = cross_fit(x, &target, w, folds, learner, stream)?;
    let mut total = 0.0;
    for f in 0..folds.k {
        let test = folds.test_indices(f);
        let hits = test
            .iter()
            .filter(|&&i| (pred[i] >= CLASSIFIER_THRESHOLD) == (t[i] == 1))
            .count();
        total += hits as f64 / test.len() as f64;
    }
    Ok(total / folds.k as f64)
}

/// `resid_columns[j]` names the column of `x_resid` holding component `j`
/// of `x`, or `None` when residualization removed it.
#[allow(clippy::too_many_arguments)]
pub fn overlap_diagnostics(
    x: &Matrix,
    x_resid: &Matrix,
    resid_columns: &[Option<usize>],
    t: &[u8],
    w: &[f64],
    folds: &FoldAssignment,
    learner: &LearnerSpec,
    stream: &RngStream,
) -> Result<OverlapDiagnostics> {
    let ones = t.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == t.len() {
        return Err(Error::invalid("both treatment arms must be present"));
    }
    if resid_columns.len() != x.ncols() {
        return Err(Error::invalid("component map length differs from columns"));
    }
    let acc_raw = oos_accuracy(x, t, w, folds, learner, &stream.child(0))?;
    let acc_resid = oos_accuracy(x_resid, t, w, folds, learner, &stream.child(1))?;
    let n = x.nrows();
    let per: Vec<Result<(f64, f64)>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let s = stream.child(2).child(j as u64);
            let raw = oos_accuracy(&x.columns(j, 1).into_owned(), t, w, folds, learner, &s.child(0))?;
            let resid_col = match resid_columns[j] {
                Some(c) => x_resid.columns(c, 1).into_owned(),
                None => Matrix::zeros(n, 1),
            };
            let resid = oos_accuracy(&resid_col, t, w, folds, learner, &s.child(1))?;
            Ok((raw, resid))
        })
        .collect();
    let per: Vec<(f64, f64)> = per.into_iter().collect::<Result<_>>()?;
    Ok(OverlapDiagnostics {
        acc_raw,
        acc_resid,
        per_component_gap: per.iter().map(|(a, b)| a - b).collect(),
        per_component_raw: per.iter().map(|p| p.0).collect(),
        per_component_resid: per.into_iter().map(|p| p.1).collect(),
    })
}

/// Component map for a residualization strategy over `p` components.
pub fn component_map(kind: Residualization, p: usize) -> Vec<Option<usize>> {
    match kind {
        Residualization::DropPc1 => (0..p).map(|j| j.checked_sub(1)).collect(),
        _ => (0..p).map(Some).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::derive_stream;
    use crate::numkit::{make_folds, RidgeParams};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rec(base: &str, intensity: f64, valid: bool) -> SteeredRecord {
        SteeredRecord {
            base_id: base.into(),
            feature_id: "f".into(),
            alpha: 0.0,
            intensity,
            coherence: 3,
            valid,
            embedding: vec![intensity, 1.0],
        }
    }

    #[test]
    fn quintiles_one_base() {
        let corpus: Vec<_> = (1..=10).map(|v| rec("b", v as f64 / 10.0, true)).collect();
        let a = assign_treatment(&corpus).unwrap();
        let treated: Vec<usize> = a.rows.iter().zip(&a.treatment).filter(|(_, &t)| t == 1).map(|(&r, _)| r).collect();
        let control: Vec<usize> = a.rows.iter().zip(&a.treatment).filter(|(_, &t)| t == 0).map(|(&r, _)| r).collect();
        assert_eq!(treated, vec![8, 9]);
        assert_eq!(control, vec![0, 1]);
        assert!(a.weights.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn unmatched_base_removed_and_counts_weighted() {
        // 25 records: quintile rank 5. Base "a" has 3 treated, no control.
        let mut corpus = vec![];
        for v in [0.95, 0.96, 0.97] {
            corpus.push(rec("a", v, true));
        }
        for v in [0.93, 0.94, 0.0, 0.01, 0.02, 0.03, 0.04] {
            corpus.push(rec("b", v, true));
        }
        for i in 0..15 {
            corpus.push(rec("c", 0.3 + i as f64 / 100.0, true));
        }
        let a = assign_treatment(&corpus).unwrap();
        assert!(a.base_ids.iter().all(|b| b == "b"));
        for (t, w) in a.treatment.iter().zip(&a.weights) {
            assert_eq!(*w, if *t == 1 { 0.5 } else { 0.2 });
        }
    }

    #[test]
    fn invalid_records_dropped_first() {
        let mut corpus: Vec<_> = (1..=10).map(|v| rec("b", v as f64 / 10.0, true)).collect();
        corpus.push(rec("b", 1.0, false));
        let a = assign_treatment(&corpus).unwrap();
        assert!(!a.rows.contains(&10));
        assert!(assign_treatment(&corpus[..9]).is_err());
    }

    #[test]
    fn no_matched_bases() {
        let mut corpus: Vec<_> = (1..=5).map(|v| rec("lo", v as f64 / 100.0, true)).collect();
        corpus.extend((1..=5).map(|v| rec("hi", 0.9 + v as f64 / 100.0, true)));
        assert_eq!(assign_treatment(&corpus).unwrap_err().to_string(), "no matched bases");
    }

    #[test]
    fn rotate_shapes() {
        let mut rng = derive_stream(1, &[]).rng();
        let e = Matrix::from_fn(100, 384, |_, _| rng.random::<f64>());
        let (x, _) = rotate(&e).unwrap();
        assert_eq!(x.shape(), (100, 100));
        let e = Matrix::from_fn(500, 384, |_, _| rng.random::<f64>());
        let (x, pca) = rotate(&e).unwrap();
        assert_eq!(x.shape(), (500, 384));
        let var = |j: usize| x.column(j).map(|v| v * v).sum() / 500.0;
        for j in 1..384 {
            assert!(var(j) <= var(j - 1) + 1e-9);
        }
        assert_eq!(pca.n_components(), 384);
    }

    #[test]
    fn drop_pc1_shape() {
        let x = Matrix::from_fn(100, 100, |i, j| (i * 100 + j) as f64);
        let r = residualize_drop_pc1(&x).unwrap();
        assert_eq!(r.shape(), (100, 99));
        assert_eq!(r[(3, 0)], x[(3, 1)]);
        assert!(residualize_drop_pc1(&Matrix::zeros(3, 1)).is_err());
    }

    fn balanced_t(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i % 2) as u8).collect()
    }

    #[test]
    fn residualizing_the_treatment_itself() {
        let n = 200;
        let t = balanced_t(n);
        let x = Matrix::from_fn(n, 2, |i, j| if j == 0 { t[i] as f64 } else { i as f64 });
        let folds = make_folds(n, 5, None, &derive_stream(1, &[])).unwrap();
        for learner in [
            LearnerSpec::default(),
            LearnerSpec::Ridge(RidgeParams { lambda: 0.0, fit_intercept: true }),
        ] {
            let r = residualize_dim_by_dim(&x, &t, &vec![1.0; n], &folds, &learner, &derive_stream(2, &[])).unwrap();
            assert_eq!(r.shape(), x.shape());
            for arm in 0..2u8 {
                let m: f64 = (0..n).filter(|&i| t[i] == arm).map(|i| r[(i, 0)]).sum::<f64>() / (n / 2) as f64;
                assert!(m.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn residualizing_independent_column() {
        let n = 2000;
        let mut rng = derive_stream(3, &[]).rng();
        let t: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
        let x = Matrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let folds = make_folds(n, 5, None, &derive_stream(3, &[1])).unwrap();
        let r = residualize_dim_by_dim(&x, &t, &vec![1.0; n], &folds, &LearnerSpec::default(), &derive_stream(3, &[2])).unwrap();
        let var = |m: &Matrix| {
            let mu = m.mean();
            m.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64
        };
        let ratio = var(&r) / var(&x);
        assert!(ratio > 0.95 && ratio < 1.05, "variance ratio {ratio}");
    }

    #[test]
    fn arm_missing_in_training_split() {
        let n = 10;
        let t: Vec<u8> = (0..n).map(|i| (i == 0) as u8).collect();
        let ids: Vec<String> = (0..n).map(|i| if i == 0 { "a".into() } else { format!("b{}", i % 2) }).collect();
        let folds = make_folds(n, 2, Some(&ids), &derive_stream(0, &[])).unwrap();
        let x = Matrix::zeros(n, 1);
        // whichever fold holds row 0, the other training split has no treated rows
        assert!(residualize_dim_by_dim(&x, &t, &[1.0; 10], &folds, &LearnerSpec::default(), &derive_stream(0, &[])).is_err());
    }

    #[test]
    fn diagnostics_self_and_independent() {
        let n = 2000;
        let mut rng = derive_stream(4, &[]).rng();
        let t: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
        let noise = Matrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let with_t = Matrix::from_fn(n, 2, |i, j| if j == 0 { t[i] as f64 } else { noise[(i, 1)] });
        let folds = make_folds(n, 5, None, &derive_stream(4, &[1])).unwrap();
        let w = vec![1.0; n];
        let learner = default_diagnostic_learner();
        let d = overlap_diagnostics(&with_t, &noise, &component_map(Residualization::DimByDim, 2), &t, &w, &folds, &learner, &derive_stream(4, &[2])).unwrap();
        assert!(d.acc_raw >= 0.99, "{}", d.acc_raw);
        assert!((d.acc_resid - 0.5).abs() <= 0.05, "{}", d.acc_resid);
        assert!(d.per_component_gap[0] > 0.4);
        assert!(d.acc_raw <= 1.0 && d.acc_resid >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn assignment_invariants(seed in 0u64..100_000, n_base in 1usize..12, per_base in 2usize..12) {
            let mut rng = derive_stream(seed, &[]).rng();
            let mut corpus = vec![];
            for b in 0..n_base {
                let level: f64 = rng.random::<f64>() * 0.5;
                for _ in 0..per_base {
                    let v = (level + rng.random::<f64>() * 0.5).clamp(-1.0, 1.0);
                    corpus.push(rec(&format!("b{b}"), v, rng.random_bool(0.9)));
                }
            }
            match assign_treatment(&corpus) {
                Err(_) => {}
                Ok(a) => {
                    let mut sums: BTreeMap<(String, u8), f64> = BTreeMap::new();
                    for ((b, t), w) in a.base_ids.iter().zip(&a.treatment).zip(&a.weights) {
                        *sums.entry((b.clone(), *t)).or_default() += w;
                    }
                    let bases: BTreeSet<&String> = a.base_ids.iter().collect();
                    for b in &bases {
                        prop_assert!(sums.contains_key(&((*b).clone(), 0)));
                        prop_assert!(sums.contains_key(&((*b).clone(), 1)));
                    }
                    for s in sums.values() {
                        prop_assert!((s - 1.0).abs() < 1e-12);
                    }
                    for arm in 0..2u8 {
                        let total: f64 = a.weights.iter().zip(&a.treatment).filter(|(_, &t)| t == arm).map(|(w, _)| w).sum();
                        prop_assert!((total - bases.len() as f64).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
