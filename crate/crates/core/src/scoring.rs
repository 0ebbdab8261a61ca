//! Steering-quality scores: raw intensity, normalized intensity `I*`,
//! coherence `J*`, and their product, the IC score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SteeredRecord;
use crate::error::{Error, Result};

/// Floor on the fit MAE; a perfectly linear curve saturates at this value.
pub const MAE_FLOOR: f64 = 1e-6;
/// Curve points need strictly more than this share of valid texts.
pub const MIN_VALIDATION_RATE: f64 = 0.75;

fn cosine(a: &[f64], b: &[f64], b_norm: f64) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * b_norm)
}

/// Mean token-level cosine similarity between activations and a decoder
/// direction. Zero-norm tokens contribute 0.
pub fn raw_intensity(activations: &[Vec<f64>], decoder: &[f64]) -> Result<f64> {
    if activations.is_empty() {
        return Err(Error::invalid("empty activation sequence"));
    }
    let dn = decoder.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dn == 0.0 {
        return Err(Error::invalid("decoder column has zero norm"));
    }
    if let Some(a) = activations.iter().find(|a| a.len() != decoder.len()) {
        return Err(Error::invalid(format!(
            "activation length {} != decoder length {}",
            a.len(),
            decoder.len()
        )));
    }
    Ok(activations.iter().map(|a| cosine(a, decoder, dn)).sum::<f64>() / activations.len() as f64)
}

/// Additive steering `a + α‖a‖₂·W_dec(φ)`.
///
/// Equivalent to encoding, adding `α‖a‖₂` to the feature's latent, decoding,
/// and re-adding the reconstruction error.
pub fn apply_steering(a: &[f64], alpha: f64, decoder: &[f64]) -> Vec<f64> {
    let s = alpha * a.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter().zip(decoder).map(|(x, d)| x + s * d).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub mean_intensity: f64,
    pub validation_rate: f64,
    pub mean_coherence: f64,
    pub n_records: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub mae: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityCurve {
    pub feature_id: String,
    pub points: Vec<CurvePoint>,
}

impl IntensityCurve {
    /// Points that pass the validation-rate filter.
    pub fn reliable_points(&self) -> impl Iterator<Item = &CurvePoint> {
        self.points
            .iter()
            .filter(|p| p.validation_rate > MIN_VALIDATION_RATE)
    }

    /// OLS of mean intensity on alpha over the reliable points.
    pub fn fit(&self) -> Result<LinearFit> {
        let pts: Vec<&CurvePoint> = self.reliable_points().collect();
        if pts.len() < 3 {
            return Err(Error::invalid("insufficient valid steering levels"));
        }
        let n = pts.len() as f64;
        let xbar = pts.iter().map(|p| p.alpha).sum::<f64>() / n;
        let ybar = pts.iter().map(|p| p.mean_intensity).sum::<f64>() / n;
        let dx: Vec<f64> = pts.iter().map(|p| p.alpha - xbar).collect();
        let dy: Vec<f64> = pts.iter().map(|p| p.mean_intensity - ybar).collect();
        let sxx: f64 = dx.iter().map(|d| d * d).sum();
        let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let slope = sxy / sxx;
        let mae = dx
            .iter()
            .zip(&dy)
            .map(|(x, y)| (y - slope * x).abs())
            .sum::<f64>()
            / n;
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.mean_intensity), hi.max(p.mean_intensity))
        });
        Ok(LinearFit {
            slope,
            intercept: ybar - slope * xbar,
            mae,
            range: hi - lo,
        })
    }
}

/// Group records of every feature by steering factor. Means are taken over
/// valid records; levels without any valid record are omitted.
pub fn build_curves(records: &[SteeredRecord]) -> Vec<IntensityCurve> {
    #[derive(Default)]
    struct Acc {
        total: usize,
        valid: usize,
        intensity: f64,
        coherence: f64,
    }
    let mut groups: BTreeMap<&str, BTreeMap<u64, (f64, Acc)>> = BTreeMap::new();
    for r in records {
        let slot = groups
            .entry(r.feature_id.as_str())
            .or_default()
            .entry(r.alpha.to_bits())
            .or_insert_with(|| (r.alpha, Acc::default()));
        slot.1.total += 1;
        if r.valid {
            slot.1.valid += 1;
            slot.1.intensity += r.intensity;
            slot.1.coherence += r.coherence as f64;
        }
    }
    groups
        .into_iter()
        .map(|(feature, levels)| {
            let mut points: Vec<CurvePoint> = levels
                .into_values()
                .filter(|(_, a)| a.valid > 0)
                .map(|(alpha, a)| CurvePoint {
                    alpha,
                    mean_intensity: a.intensity / a.valid as f64,
                    validation_rate: a.valid as f64 / a.total as f64,
                    mean_coherence: a.coherence / a.valid as f64,
                    n_records: a.total,
                })
                .collect();
            points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            IntensityCurve {
                feature_id: feature.to_string(),
                points,
            }
        })
        .collect()
}

/// `|β̂₁|·R_I / max(MAE, MAE_FLOOR)`.
pub fn intensity_star(curve: &IntensityCurve) -> Result<f64> {
    let fit = curve.fit()?;
    Ok(fit.slope.abs() * fit.range / fit.mae.max(MAE_FLOOR))
}

/// Unweighted mean over steering levels of the mean coherence.
pub fn coherence_star(curve: &IntensityCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::invalid("empty intensity curve"));
    }
    Ok(curve.points.iter().map(|p| p.mean_coherence).sum::<f64>() / curve.points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature_id: String,
    pub i_star: f64,
    pub j_star: f64,
    pub ic: f64,
}

pub fn ic_score(feature_id: &str, i_star: f64, j_star: f64) -> Result<FeatureScore> {
    if !(i_star >= 0.0) {
        return Err(Error::invalid("i_star must be >= 0"));
    }
    if !(0.0..=3.0).contains(&j_star) {
        return Err(Error::invalid("j_star must lie in [0, 3]"));
    }
    Ok(FeatureScore {
        feature_id: feature_id.to_string(),
        i_star,
        j_star,
        ic: i_star * j_star,
    })
}

pub fn score_curve(curve: &IntensityCurve) -> Result<FeatureScore> {
    ic_score(&curve.feature_id, intensity_star(curve)?, coherence_star(curve)?)
}
