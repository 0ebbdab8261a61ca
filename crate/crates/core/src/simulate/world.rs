//! Structural stand-in for an LLM + SAE + embedding model. Latent concepts
//! drive both token activations (measured intensity) and text embeddings;
//! steering shifts the target concept and, through spillover, nuisance
//! concepts.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, RngStream, SteeredRecord};
use crate::error::{Error, Result};
use crate::scoring::{apply_steering, raw_intensity};

pub const DEFAULT_N_ALPHA: usize = 25;
pub const DEFAULT_ALPHA_MAX: f64 = 1.2;
pub const DEFAULT_N_BASE: usize = 300;

pub fn default_alpha_grid() -> Vec<f64> {
    let n = DEFAULT_N_ALPHA;
    (0..n).map(|i| DEFAULT_ALPHA_MAX * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Latent concept count; concept 0 is the target.
    pub q: usize,
    pub embed_dim: usize,
    pub sae_dim: usize,
    pub tokens_per_text: usize,
    pub spillover: f64,
    /// Shift of the target concept per unit of steering.
    pub concept_scale: f64,
    pub alpha_grid: Vec<f64>,
    /// Per-text concept noise around the base text's concepts.
    pub text_noise: f64,
    pub embed_noise: f64,
    /// Overall embedding magnitude.
    pub embed_scale: f64,
    pub coherence_noise: f64,
    /// Per-base steering responsiveness is uniform on this range.
    pub gain_range: (f64, f64),
    /// How strongly a base text's target concept shows in its activations.
    pub base_expression: f64,
    pub feature_id: String,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            q: 8,
            embed_dim: 32,
            sae_dim: 64,
            tokens_per_text: 8,
            spillover: 3.0,
            concept_scale: 1.25,
            alpha_grid: default_alpha_grid(),
            text_noise: 0.3,
            embed_noise: 0.3,
            embed_scale: 0.05,
            coherence_noise: 0.3,
            gain_range: (0.5, 1.5),
            base_expression: 1.0,
            feature_id: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub params: WorldParams,
    /// `embed_dim × q`, orthonormal columns.
    pub mixing: Matrix,
    pub decoder_proxy: Vec<f64>,
    /// Unit direction over the nuisance concepts (zero on the target).
    pub spill_direction: Vec<f64>,
}

fn unit_gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

impl SyntheticWorld {
    pub fn new(params: WorldParams, stream: &RngStream) -> Result<Self> {
        let p = &params;
        if p.q < 2 || p.embed_dim < p.q || p.sae_dim < 2 || p.tokens_per_text == 0 {
            return Err(Error::invalid(
                "world needs q >= 2, embed_dim >= q, sae_dim >= 2, tokens_per_text >= 1",
            ));
        }
        if !(p.spillover >= 0.0) {
            return Err(Error::invalid("spillover must be nonnegative"));
        }
        if p.alpha_grid.is_empty()
            || p.alpha_grid[0] < 0.0
            || p.alpha_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid("alpha_grid must be nonnegative and increasing"));
        }
        let nonneg = [p.text_noise, p.embed_noise, p.coherence_noise, p.base_expression, p.concept_scale];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || !(p.embed_scale > 0.0)
            || !(p.gain_range.0 > 0.0 && p.gain_range.1 >= p.gain_range.0)
        {
            return Err(Error::invalid("noise scales must be nonnegative and gains positive"));
        }
        let mut rng = stream.rng();
        let g = Matrix::from_fn(p.embed_dim, p.q, |_, _| StandardNormal.sample(&mut rng));
        let mixing = g.qr().q();
        let decoder_proxy = unit_gaussian(p.sae_dim, &mut rng);
        let mut spill = unit_gaussian(p.q - 1, &mut rng);
        spill.insert(0, 0.0);
        Ok(SyntheticWorld { params, mixing, decoder_proxy, spill_direction: spill })
    }

    /// Concept shift produced by steering strength `alpha`.
    pub fn concept_shift(&self, alpha: f64) -> Vec<f64> {
        let s = alpha * self.params.concept_scale;
        let mut v: Vec<f64> = self.spill_direction.iter().map(|d| self.params.spillover * s * d).collect();
        v[0] += s;
        v
    }
}

/// `n_base × alpha_grid.len()` records, base-major. Base `b` uses
/// `stream.child(b)`.
pub fn generate_synthetic_corpus(
    world: &SyntheticWorld,
    n_base: usize,
    stream: &RngStream,
) -> Result<Vec<SteeredRecord>> {
    if n_base == 0 {
        return Err(Error::invalid("n_base must be at least 1"));
    }
    let p = &world.params;
    let text_noise = Normal::new(0.0, p.text_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let coh_noise = Normal::new(0.0, p.coherence_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let u = &world.decoder_proxy;
    let mut out = Vec::with_capacity(n_base * p.alpha_grid.len());
    for b in 0..n_base {
        let mut rng = stream.child(b as u64).rng();
        let base: Vec<f64> = (0..p.q).map(|_| StandardNormal.sample(&mut rng)).collect();
        let gain = if p.gain_range.1 > p.gain_range.0 {
            rng.random_range(p.gain_range.0..p.gain_range.1)
        } else {
            p.gain_range.0
        };
        let base_id = format!("b{b:04}");
        for &alpha in &p.alpha_grid {
            let tokens: Vec<Vec<f64>> = (0..p.tokens_per_text)
                .map(|_| {
                    let a: Vec<f64> = u
                        .iter()
                        .map(|ui| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) + p.base_expression * base[0] * ui)
                        .collect();
                    apply_steering(&a, alpha * gain, u)
                })
                .collect();
            let intensity = raw_intensity(&tokens, u)?;
            let shift = world.concept_shift(alpha);
            let concepts: Vec<f64> = (0..p.q)
                .map(|k| base[k] + shift[k] + text_noise.sample(&mut rng))
                .collect();
            let embedding: Vec<f64> = (0..p.embed_dim)
                .map(|r| {
                    let mixed: f64 = (0..p.q).map(|k| world.mixing[(r, k)] * concepts[k]).sum();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    p.embed_scale * (mixed + p.embed_noise * e)
                })
                .collect();
            let drop = (alpha * p.spillover * coh_noise.sample(&mut rng).abs()).round();
            let coherence = (3.0 - drop).clamp(0.0, 3.0) as u8;
            out.push(SteeredRecord {
                base_id: base_id.clone(),
                feature_id: p.feature_id.clone(),
                alpha,
                intensity,
                coherence,
                valid: coherence >= 1,
                embedding,
            });
        }
    }
    Ok(out)
}
