use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::RngStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n: usize,
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub by_base: bool,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// (train, test) index lists for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (self.train_indices(fold), self.test_indices(fold))
    }
}

/// Random K-fold partition. With `base_ids`, whole groups are dealt to
/// folds so rows sharing a base id never straddle a train/test split.
pub fn make_folds(
    n: usize,
    k: usize,
    base_ids: Option<&[String]>,
    stream: &RngStream,
) -> Result<FoldAssignment> {
    let mut rng = stream.rng();
    match base_ids {
        None => {
            if k < 2 || k > n {
                return Err(Error::invalid(format!("k={k} folds out of range for n={n}")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut fold_of = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                fold_of[i] = pos % k;
            }
            Ok(FoldAssignment {
                n,
                k,
                fold_of,
                by_base: false,
            })
        }
        Some(ids) => {
            if ids.len() != n {
                return Err(Error::invalid("base_ids length differs from n"));
            }
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                groups.entry(id.as_str()).or_default().push(i);
            }
            let g = groups.len();
            if k < 2 || k > g {
                return Err(Error::invalid(format!(
                    "k={k} folds out of range for {g} distinct base ids"
                )));
            }
            let mut members: Vec<Vec<usize>> = groups.into_values().collect();
            members.shuffle(&mut rng);
            let mut fold_of = vec![0; n];
            for (pos, rows) in members.iter().enumerate() {
                for &i in rows {
                    fold_of[i] = pos % k;
                }
            }
            Ok(FoldAssignment {
                n,
                k,
                fold_of,
                by_base: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::derive_stream;

    #[test]
    fn even_split() {
        let f = make_folds(10, 5, None, &derive_stream(1, &[])).unwrap();
        for k in 0..5 {
            assert_eq!(f.test_indices(k).len(), 2);
        }
    }

    #[test]
    fn grouped_rows_share_fold() {
        let ids: Vec<String> = (0..12).map(|i| format!("b{}", i / 3)).collect();
        let f = make_folds(12, 2, Some(&ids), &derive_stream(1, &[])).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                if ids[i] == ids[j] {
                    assert_eq!(f.fold_of[i], f.fold_of[j]);
                }
            }
        }
        assert!(f.by_base);
    }

    #[test]
    fn partition_property() {
        let f = make_folds(23, 4, None, &derive_stream(2, &[])).unwrap();
        let mut seen = vec![0; 23];
        for k in 0..4 {
            for i in f.test_indices(k) {
                seen[i] += 1;
            }
            let (tr, te) = f.split(k);
            assert_eq!(tr.len() + te.len(), 23);
            assert!(!te.is_empty());
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn out_of_range_k() {
        assert!(make_folds(5, 1, None, &derive_stream(0, &[])).is_err());
        assert!(make_folds(5, 6, None, &derive_stream(0, &[])).is_err());
        let ids: Vec<String> = vec!["a".into(), "a".into(), "b".into()];
        assert!(make_folds(3, 3, Some(&ids), &derive_stream(0, &[])).is_err());
        // leave-one-base-out
        assert!(make_folds(3, 2, Some(&ids), &derive_stream(0, &[])).is_ok());
    }
}
