//! Semi-synthetic outcomes over residualized covariates.

use std::fmt;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, RngStream};
use crate::error::{Error, Result};

pub const MULTIPLIERS: [f64; 4] = [1.0, 50.0, 100.0, 200.0];
pub const DEFAULT_GAMMA: f64 = 5.0;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_N_SPECS: usize = 200;
/// Distinct (multiplier, form) 4-tuples.
pub const N_TUPLES: usize = 16 * 16 * 16 * 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Sin,
    Tanh,
    Square,
    Identity,
}

pub const FORMS: [Form; 4] = [Form::Sin, Form::Tanh, Form::Square, Form::Identity];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFunction {
    pub multiplier: f64,
    pub form: Form,
}

impl GFunction {
    pub fn eval(&self, v: f64) -> f64 {
        let f = match self.form {
            Form::Sin => v.sin(),
            Form::Tanh => v.tanh(),
            Form::Square => v * v,
            Form::Identity => v,
        };
        self.multiplier * f
    }

    fn from_code(code: usize) -> Self {
        GFunction {
            multiplier: MULTIPLIERS[code / 4],
            form: FORMS[code % 4],
        }
    }
}

impl fmt::Display for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match self.form {
            Form::Sin => "sin(x)",
            Form::Tanh => "tanh(x)",
            Form::Square => "x^2",
            Form::Identity => "x",
        };
        write!(f, "{}*{form}", self.multiplier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: usize,
    /// Four disjoint column blocks covering every covariate.
    pub partition: Vec<Vec<usize>>,
    pub g: [GFunction; 4],
    pub ate_gamma: f64,
    pub sigma: f64,
}

impl DgpSpec {
    pub fn n_columns(&self) -> usize {
        self.partition.iter().map(Vec::len).sum()
    }

    pub fn tuple(&self) -> String {
        self.g.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ")
    }
}

/// Split `0..n_columns` into four near-equal random blocks.
pub fn random_partition(n_columns: usize, stream: &RngStream) -> Result<Vec<Vec<usize>>> {
    if n_columns < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 covariate columns, got {n_columns}"
        )));
    }
    let mut cols: Vec<usize> = (0..n_columns).collect();
    cols.shuffle(&mut stream.rng());
    let mut blocks = vec![Vec::new(); 4];
    for (i, c) in cols.into_iter().enumerate() {
        blocks[i * 4 / n_columns].push(c);
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    Ok(blocks)
}

/// Distinct function tuples drawn without replacement, each with its own
/// column partition.
pub fn sample_dgp_specs(
    n_specs: usize,
    n_columns: usize,
    ate_gamma: f64,
    sigma: f64,
    stream: &RngStream,
) -> Result<Vec<DgpSpec>> {
    if n_specs > N_TUPLES {
        return Err(Error::invalid(format!(
            "n_specs {n_specs} exceeds the {N_TUPLES} distinct function tuples"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite() && ate_gamma.is_finite()) {
        return Err(Error::invalid("gamma must be finite and sigma nonnegative"));
    }
    let picks = index::sample(&mut stream.child(0).rng(), N_TUPLES, n_specs);
    picks
        .into_iter()
        .enumerate()
        .map(|(id, code)| {
            let g = [
                GFunction::from_code(code & 15),
                GFunction::from_code((code >> 4) & 15),
                GFunction::from_code((code >> 8) & 15),
                GFunction::from_code((code >> 12) & 15),
            ];
            Ok(DgpSpec {
                id,
                partition: random_partition(n_columns, &stream.child(1).child(id as u64))?,
                g,
                ate_gamma,
                sigma,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutcomes {
    pub y: Vec<f64>,
    pub tau: Vec<f64>,
    pub mu0: Vec<f64>,
}

pub fn block_means(x: &Matrix, row: usize, partition: &[Vec<usize>]) -> Vec<f64> {
    partition
        .iter()
        .map(|b| b.iter().map(|&j| x[(row, j)]).sum::<f64>() / b.len() as f64)
        .collect()
}

pub fn synthesize_outcomes(
    x: &Matrix,
    t: &[u8],
    spec: &DgpSpec,
    stream: &RngStream,
) -> Result<SyntheticOutcomes> {
    if t.len() != x.nrows() {
        return Err(Error::invalid("treatment length differs from rows"));
    }
    if spec.partition.len() != 4 || spec.partition.iter().any(Vec::is_empty) {
        return Err(Error::invalid("partition must have four nonempty blocks"));
    }
    let mut seen = vec![false; x.ncols()];
    for &j in spec.partition.iter().flatten() {
        if j >= x.ncols() || seen[j] {
            return Err(Error::invalid("partition does not match the covariate columns"));
        }
        seen[j] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("partition does not cover every covariate column"));
    }
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream.rng();
    let mut out = SyntheticOutcomes {
        y: Vec::with_capacity(t.len()),
        tau: Vec::with_capacity(t.len()),
        mu0: Vec::with_capacity(t.len()),
    };
    for (i, &ti) in t.iter().enumerate() {
        let m = block_means(x, i, &spec.partition);
        let tau = spec.ate_gamma + spec.g[0].eval(m[0]) + spec.g[1].eval(m[1]);
        let mu0 = spec.g[2].eval(m[2]) + spec.g[3].eval(m[3]);
        let eps = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        out.y.push(mu0 + tau * ti as f64 + eps);
        out.tau.push(tau);
        out.mu0.push(mu0);
    }
    Ok(out)
}
