//! Hypothesis generation: drop spurious SAE features, rank the rest by
//! class mean difference of z-scored activations, then by how persistently
//! a sparse logistic probe ranks them across CV fits.

use serde::{Deserialize, Serialize};

use crate::data::{ActivationDataset, RngStream};
use crate::error::{Error, Result};
use crate::numkit::{l1_logistic_fit, standardize, CvMetric};

pub const DEFAULT_TRAIN_RATE_MAX: f64 = 0.01;
pub const DEFAULT_CORPUS_RATE_MAX: f64 = 0.70;
pub const DEFAULT_KEYWORDS: &[&str] = &["BOS", "punctuation", "code", "math"];
pub const K_CHOICES: &[usize] = &[16, 32, 64, 128, 256];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub removed_keyword: Vec<String>,
    pub removed_train_rate: Vec<String>,
    pub removed_corpus_rate: Vec<String>,
    pub removed_zero_var: Vec<String>,
    pub kept: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub keywords: Vec<String>,
    pub train_rate_max: f64,
    pub corpus_rate_max: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            train_rate_max: DEFAULT_TRAIN_RATE_MAX,
            corpus_rate_max: DEFAULT_CORPUS_RATE_MAX,
        }
    }
}

/// Fraction of rows with activation strictly above zero, per feature.
pub fn activation_rates(dataset: &ActivationDataset) -> Vec<f64> {
    let a = dataset.activations();
    (0..a.ncols())
        .map(|j| a.column(j).iter().filter(|&&v| v > 0.0).count() as f64 / a.nrows().max(1) as f64)
        .collect()
}

/// Each feature lands in the first matching bucket, checked in the order
/// keyword, training rate, corpus rate, zero variance.
pub fn filter_candidates(
    dataset: &ActivationDataset,
    corpus_rates: &[f64],
    config: &FilterConfig,
) -> Result<FilterReport> {
    if corpus_rates.len() != dataset.n_features() {
        return Err(Error::invalid(format!(
            "corpus rates ({}) not aligned with features ({})",
            corpus_rates.len(),
            dataset.n_features()
        )));
    }
    let keywords: Vec<String> = config.keywords.iter().map(|k| k.to_lowercase()).collect();
    let train_rates = activation_rates(dataset);
    let a = dataset.activations();
    let mut report = FilterReport::default();
    for (j, meta) in dataset.features().iter().enumerate() {
        let desc = meta.description.to_lowercase();
        let col = a.column(j);
        let first = col[0];
        let id = meta.id.clone();
        if keywords.iter().any(|k| !k.is_empty() && desc.contains(k.as_str())) {
            report.removed_keyword.push(id);
        } else if train_rates[j] > config.train_rate_max {
            report.removed_train_rate.push(id);
        } else if corpus_rates[j] > config.corpus_rate_max {
            report.removed_corpus_rate.push(id);
        } else if col.iter().all(|&v| v == first) {
            report.removed_zero_var.push(id);
        } else {
            report.kept.push(id);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDifference {
    pub feature_id: String,
    pub delta: f64,
}

fn columns_for(dataset: &ActivationDataset, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            dataset
                .column_of(id)
                .ok_or_else(|| Error::invalid(format!("unknown feature id {id}")))
        })
        .collect()
}

fn require_both_classes(labels: &[u8]) -> Result<()> {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::invalid("labels contain a single class"));
    }
    Ok(())
}

/// Top-`k` kept features by `|mean(Z | Y=1) − mean(Z | Y=0)|`, descending,
/// ties broken by feature id.
pub fn rank_mean_difference(
    dataset: &ActivationDataset,
    kept: &[String],
    k: usize,
) -> Result<Vec<MeanDifference>> {
    require_both_classes(dataset.labels())?;
    if k == 0 || k > kept.len() {
        return Err(Error::invalid(format!("k={k} but {} features kept", kept.len())));
    }
    let cols = columns_for(dataset, kept)?;
    let sub = dataset.activations().select_columns(&cols);
    let z = standardize(&sub)?.z;
    let labels = dataset.labels();
    let n1 = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n0 = labels.len() as f64 - n1;
    let mut out: Vec<MeanDifference> = kept
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let (mut s1, mut s0) = (0.0, 0.0);
            for (i, &l) in labels.iter().enumerate() {
                if l == 1 {
                    s1 += z[(i, c)];
                } else {
                    s0 += z[(i, c)];
                }
            }
            MeanDifference {
                feature_id: id.clone(),
                delta: (s1 / n1 - s0 / n0).abs(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.feature_id.cmp(&b.feature_id)));
    out.truncate(k);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature_id: String,
    pub delta: f64,
    pub median_rank: f64,
    /// Coefficient in the full-data probe at the selected penalty.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRanking {
    pub k: usize,
    pub best_lambda: f64,
    pub cv_curve: Vec<(f64, f64)>,
    /// Ascending median rank, ties by larger Δ.
    pub per_feature: Vec<RankedFeature>,
    /// Same features ordered by descending |coefficient|.
    pub by_coefficient: Vec<String>,
}

/// Positions 1.. by descending |β|; every zero coefficient shares position `k`.
pub fn coefficient_positions(coefficients: &[f64]) -> Vec<f64> {
    let k = coefficients.len();
    let mut order: Vec<usize> = (0..k).filter(|&j| coefficients[j] != 0.0).collect();
    order.sort_by(|&a, &b| {
        coefficients[b]
            .abs()
            .total_cmp(&coefficients[a].abs())
            .then(a.cmp(&b))
    });
    let mut pos = vec![k as f64; k];
    for (rank, &j) in order.iter().enumerate() {
        pos[j] = (rank + 1) as f64;
    }
    pos
}

pub fn persistence_rank(
    dataset: &ActivationDataset,
    top: &[MeanDifference],
    lambda_grid: &[f64],
    k_folds: usize,
    metric: CvMetric,
    stream: &RngStream,
) -> Result<ProbeRanking> {
    if top.is_empty() {
        return Err(Error::invalid("no features to rank"));
    }
    require_both_classes(dataset.labels())?;
    let ids: Vec<String> = top.iter().map(|m| m.feature_id.clone()).collect();
    let cols = columns_for(dataset, &ids)?;
    let z = standardize(&dataset.activations().select_columns(&cols))?.z;
    let y: Vec<f64> = dataset.labels().iter().map(|&l| l as f64).collect();
    let cv = l1_logistic_fit(&z, &y, lambda_grid, k_folds, metric, stream)?;

    let k = ids.len();
    let positions: Vec<Vec<f64>> = cv
        .fold_models
        .iter()
        .map(|m| coefficient_positions(&m.coefficients))
        .collect();
    let mut per_feature: Vec<RankedFeature> = (0..k)
        .map(|j| {
            let ranks: Vec<f64> = positions.iter().map(|p| p[j]).collect();
            RankedFeature {
                feature_id: ids[j].clone(),
                delta: top[j].delta,
                median_rank: crate::numkit::stats::median(&ranks),
                coefficient: cv.model.coefficients[j],
            }
        })
        .collect();
    let mut by_coefficient: Vec<(String, f64)> = per_feature
        .iter()
        .map(|f| (f.feature_id.clone(), f.coefficient.abs()))
        .collect();
    by_coefficient.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    per_feature.sort_by(|a, b| {
        a.median_rank
            .total_cmp(&b.median_rank)
            .then(b.delta.total_cmp(&a.delta))
            .then_with(|| a.feature_id.cmp(&b.feature_id))
    });
    Ok(ProbeRanking {
        k,
        best_lambda: cv.best_lambda,
        cv_curve: cv.cv_curve,
        per_feature,
        by_coefficient: by_coefficient.into_iter().map(|(id, _)| id).collect(),
    })
}

/// Log-spaced grid from `hi` down to `lo`, `n` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::derive_stream;
    use crate::data::{FeatureMeta, Matrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn meta(id: &str, desc: &str) -> FeatureMeta {
        FeatureMeta {
            id: id.into(),
            layer: Some(20),
            description: desc.into(),
        }
    }

    #[test]
    fn filter_buckets() {
        // 100 docs; f0 keyword, f1 active in 2 docs (2%), f2 corpus-heavy,
        // f3 all zero, f4 kept (1 doc active)
        let n = 100;
        let a = Matrix::from_fn(n, 5, |i, j| match j {
            0 => (i == 0) as u8 as f64,
            1 => (i < 2) as u8 as f64,
            2 | 4 => (i == 5) as u8 as f64,
            _ => 0.0,
        });
        let feats = vec![
            meta("f0", "BOS token marker"),
            meta("f1", "sports"),
            meta("f2", "politics"),
            meta("f3", "weather"),
            meta("f4", "taxes"),
        ];
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let d = ActivationDataset::new(a, labels, feats).unwrap();
        let corpus = [0.0, 0.0, 0.9, 0.0, 0.1];
        let r = filter_candidates(&d, &corpus, &FilterConfig::default()).unwrap();
        assert_eq!(r.removed_keyword, vec!["f0"]);
        assert_eq!(r.removed_train_rate, vec!["f1"]);
        assert_eq!(r.removed_corpus_rate, vec!["f2"]);
        assert_eq!(r.removed_zero_var, vec!["f3"]);
        assert_eq!(r.kept, vec!["f4"]);
        // idempotent
        assert_eq!(r, filter_candidates(&d, &corpus, &FilterConfig::default()).unwrap());
        // keyword match is case-insensitive substring
        let cfg = FilterConfig { keywords: vec!["TAX".into()], ..Default::default() };
        let r = filter_candidates(&d, &corpus, &cfg).unwrap();
        assert_eq!(r.removed_keyword, vec!["f4"]);
    }

    fn two_class(n: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> ActivationDataset {
        let a = Matrix::from_fn(n, cols, &f);
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let feats = (0..cols).map(|j| meta(&format!("{j:03}"), "")).collect();
        ActivationDataset::new(a, labels, feats).unwrap()
    }

    #[test]
    fn delta_construction() {
        // column 0: +1 on Y=1, -1 on Y=0 -> already z-scored, Δ = 2
        // column 1: same distribution in both classes -> Δ = 0
        let d = two_class(8, 2, |i, j| match j {
            0 => if i % 2 == 1 { 1.0 } else { -1.0 },
            _ => ((i / 2) % 2) as f64,
        });
        let ids = vec!["000".to_string(), "001".to_string()];
        let r = rank_mean_difference(&d, &ids, 2).unwrap();
        assert_eq!(r[0].feature_id, "000");
        assert!((r[0].delta - 2.0).abs() < 1e-12);
        assert!(r[1].delta.abs() < 1e-12);
        assert!(rank_mean_difference(&d, &ids, 3).is_err());
    }

    #[test]
    fn single_class_is_error() {
        let a = Matrix::from_fn(4, 1, |i, _| i as f64);
        let d = ActivationDataset::new(a, vec![1; 4], vec![meta("x", "")]).unwrap();
        assert!(rank_mean_difference(&d, &["x".into()], 1).is_err());
    }

    #[test]
    fn k_choices() {
        for &k in K_CHOICES {
            let d = two_class(20, k, |i, j| ((i * 7 + j * 3) % 11) as f64);
            let ids: Vec<String> = (0..k).map(|j| format!("{j:03}")).collect();
            assert_eq!(rank_mean_difference(&d, &ids, k).unwrap().len(), k);
        }
    }

    #[test]
    fn zero_coefficients_share_last() {
        assert_eq!(coefficient_positions(&[0.0, -3.0, 1.0, 0.0]), vec![4.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn separating_feature_ranks_first() {
        let mut rng = derive_stream(11, &[]).rng();
        let n = 300;
        let d = two_class(n, 6, |i, j| {
            if j == 3 {
                if i % 2 == 1 { 1.0 + 0.1 * ((i * 13) % 7) as f64 } else { 0.0 }
            } else {
                0.0
            }
        });
        // replace noise columns by random values
        let mut a = d.activations().clone();
        for i in 0..n {
            for j in [0, 1, 2, 4, 5] {
                a[(i, j)] = rng.random::<f64>();
            }
        }
        let d = ActivationDataset::new(a, d.labels().to_vec(), d.features().to_vec()).unwrap();
        let ids: Vec<String> = d.features().iter().map(|f| f.id.clone()).collect();
        let top = rank_mean_difference(&d, &ids, 6).unwrap();
        let grid = log_grid(1e-3, 0.3, 6);
        let r = persistence_rank(&d, &top, &grid, 5, CvMetric::Accuracy, &derive_stream(1, &[])).unwrap();
        assert_eq!(r.per_feature[0].feature_id, "003");
        assert_eq!(r.per_feature[0].median_rank, 1.0);
        assert_eq!(r.by_coefficient[0], "003");
        for f in &r.per_feature {
            assert!(f.median_rank >= 1.0 && f.median_rank <= 6.0);
        }
        let again = persistence_rank(&d, &top, &grid, 5, CvMetric::Accuracy, &derive_stream(1, &[])).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn fully_shrunk_features_get_rank_k() {
        let mut rng = derive_stream(12, &[]).rng();
        let d = two_class(100, 4, |_, _| 0.0);
        let mut a = d.activations().clone();
        a.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let d = ActivationDataset::new(a, d.labels().to_vec(), d.features().to_vec()).unwrap();
        let ids: Vec<String> = d.features().iter().map(|f| f.id.clone()).collect();
        let top = rank_mean_difference(&d, &ids, 4).unwrap();
        let r = persistence_rank(&d, &top, &[100.0], 4, CvMetric::Accuracy, &derive_stream(1, &[])).unwrap();
        assert!(r.per_feature.iter().all(|f| f.median_rank == 4.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn delta_invariant_to_affine_rescaling(seed in 0u64..10_000, scale in 0.01f64..100.0, shift in 0.0f64..10.0) {
            let mut rng = derive_stream(seed, &[]).rng();
            let d = two_class(30, 3, |_, _| 0.0);
            let mut a = d.activations().clone();
            a.iter_mut().for_each(|v| *v = rng.random::<f64>());
            let d1 = ActivationDataset::new(a.clone(), d.labels().to_vec(), d.features().to_vec()).unwrap();
            let mut b = a.clone();
            b.column_mut(1).iter_mut().for_each(|v| *v = *v * scale + shift);
            let d2 = ActivationDataset::new(b, d.labels().to_vec(), d.features().to_vec()).unwrap();
            let ids: Vec<String> = d.features().iter().map(|f| f.id.clone()).collect();
            let r1 = rank_mean_difference(&d1, &ids, 3).unwrap();
            let r2 = rank_mean_difference(&d2, &ids, 3).unwrap();
            for m in &r1 {
                let o = r2.iter().find(|x| x.feature_id == m.feature_id).unwrap();
                prop_assert!((m.delta - o.delta).abs() < 1e-10);
            }
        }
    }
}
