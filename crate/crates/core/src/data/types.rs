use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub id: String,
    #[serde(default)]
    pub layer: Option<i64>,
    #[serde(default)]
    pub description: String,
}

/// SAE activations for a labeled document collection (docs x features).
#[derive(Debug, Clone)]
pub struct ActivationDataset {
    activations: Matrix,
    labels: Vec<u8>,
    features: Vec<FeatureMeta>,
}

impl ActivationDataset {
    pub fn new(activations: Matrix, labels: Vec<u8>, features: Vec<FeatureMeta>) -> Result<Self> {
        if activations.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "activation rows ({}) != labels ({})",
                activations.nrows(),
                labels.len()
            )));
        }
        if activations.ncols() != features.len() {
            return Err(Error::invalid(format!(
                "activation columns ({}) != feature records ({})",
                activations.ncols(),
                features.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {l} is not binary")));
        }
        if activations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite activation value"));
        }
        Ok(Self {
            activations,
            labels,
            features,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn activations(&self) -> &Matrix {
        &self.activations
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn column_of(&self, feature_id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.id == feature_id)
    }
}

/// Decoder geometry of an SAE: the directions `W_dec(φ)` in model space.
#[derive(Debug, Clone)]
pub struct SaeGeometry {
    hidden_dim: usize,
    decoder_columns: BTreeMap<String, Vector>,
}

impl SaeGeometry {
    pub fn new(hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            decoder_columns: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, feature_id: impl Into<String>, column: Vector) -> Result<()> {
        if column.len() != self.hidden_dim {
            return Err(Error::invalid(format!(
                "decoder column has length {}, expected {}",
                column.len(),
                self.hidden_dim
            )));
        }
        if column.norm() == 0.0 || !column.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("decoder column must be finite and nonzero"));
        }
        self.decoder_columns.insert(feature_id.into(), column);
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn decoder(&self, feature_id: &str) -> Option<&Vector> {
        self.decoder_columns.get(feature_id)
    }
}

/// One steered generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeredRecord {
    pub base_id: String,
    pub feature_id: String,
    pub alpha: f64,
    pub intensity: f64,
    pub coherence: u8,
    pub valid: bool,
    pub embedding: Vec<f64>,
}

impl SteeredRecord {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.intensity) {
            return Err(Error::invalid("intensity out of range"));
        }
        if self.coherence > 3 {
            return Err(Error::invalid("coherence out of range"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite and >= 0"));
        }
        if self.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding value"));
        }
        Ok(())
    }
}

/// One row of an estimation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalSample {
    pub covariates: Vec<f64>,
    pub treatment: u8,
    pub outcome: f64,
    pub weight: f64,
    pub base_id: String,
    pub truth: Option<f64>,
}

impl CausalSample {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0) {
            return Err(Error::invalid("weight must be positive"));
        }
        if self.treatment > 1 {
            return Err(Error::invalid("treatment must be binary"));
        }
        if !self.outcome.is_finite() {
            return Err(Error::invalid("outcome must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> SteeredRecord {
        SteeredRecord {
            base_id: "b".into(),
            feature_id: "f".into(),
            alpha: 0.5,
            intensity: 0.1,
            coherence: 3,
            valid: true,
            embedding: vec![0.0, 1.0],
        }
    }

    #[test]
    fn steered_record_invariants() {
        assert!(rec().validate().is_ok());
        let mut r = rec();
        r.coherence = 5;
        assert_eq!(r.validate().unwrap_err().to_string(), "coherence out of range");
        let mut r = rec();
        r.intensity = 1.5;
        assert!(r.validate().is_err());
        let mut r = rec();
        r.alpha = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn dataset_shape_checks() {
        let m = Matrix::zeros(2, 1);
        let f = vec![FeatureMeta {
            id: "0".into(),
            layer: Some(1),
            description: String::new(),
        }];
        assert!(ActivationDataset::new(m.clone(), vec![0, 1], f.clone()).is_ok());
        assert!(ActivationDataset::new(m.clone(), vec![0], f.clone()).is_err());
        assert!(ActivationDataset::new(m, vec![0, 2], f).is_err());
    }

    #[test]
    fn geometry_rejects_zero_column() {
        let mut g = SaeGeometry::new(2);
        assert!(g.insert("a", Vector::from_vec(vec![0.0, 0.0])).is_err());
        assert!(g.insert("a", Vector::from_vec(vec![1.0])).is_err());
        g.insert("a", Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(g.decoder("a").unwrap()[0], 1.0);
    }

    #[test]
    fn causal_sample_checks() {
        let s = CausalSample {
            covariates: vec![],
            treatment: 1,
            outcome: 1.0,
            weight: 0.0,
            base_id: "b".into(),
            truth: None,
        };
        assert!(s.validate().is_err());
    }
}
