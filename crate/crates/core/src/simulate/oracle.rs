//! Finite worlds where every expectation is an exact sum, used to check the
//! identification results and the imperfect-control bias bound.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::RngStream;
use crate::error::{Error, Result};

pub const EXACT_TOL: f64 = 1e-12;

/// `joint[x][c][t]` is `P(X⊥ = support[x], X̃ = c, T = t)`; the noise is
/// independent with atoms `noise`, and `Y(t) = outcome[t][x][e]`.
/// The metric on the support is `|a - b|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleWorld {
    pub support: Vec<f64>,
    pub n_tilde: usize,
    pub joint: Vec<Vec<[f64; 2]>>,
    pub noise: Vec<f64>,
    pub outcome: [Vec<Vec<f64>>; 2],
}

impl OracleWorld {
    pub fn validate(&self) -> Result<()> {
        let k = self.support.len();
        if k == 0 || self.n_tilde == 0 || self.noise.is_empty() {
            return Err(Error::invalid("empty support"));
        }
        if self.joint.len() != k || self.joint.iter().any(|r| r.len() != self.n_tilde) {
            return Err(Error::invalid("joint table shape mismatch"));
        }
        let mut total = 0.0;
        for p in self.joint.iter().flatten().flatten() {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::invalid("probabilities must be nonnegative"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("joint probabilities sum to {total}")));
        }
        let ntotal: f64 = self.noise.iter().sum();
        if self.noise.iter().any(|p| *p < 0.0) || (ntotal - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("noise probabilities must sum to 1"));
        }
        for t in 0..2 {
            if self.outcome[t].len() != k || self.outcome[t].iter().any(|r| r.len() != self.noise.len()) {
                return Err(Error::invalid("outcome table shape mismatch"));
            }
        }
        Ok(())
    }

    /// `μ_t(x⊥) = E[Y(t) | X⊥ = x⊥]`.
    pub fn mu(&self, t: usize, x: usize) -> f64 {
        self.outcome[t][x].iter().zip(&self.noise).map(|(y, p)| y * p).sum()
    }

    pub fn p_x(&self, x: usize) -> f64 {
        self.joint[x].iter().map(|c| c[0] + c[1]).sum()
    }

    /// Largest `|μ_t(a) - μ_t(b)| / d(a, b)` over support pairs and arms.
    pub fn lipschitz(&self) -> Result<f64> {
        let k = self.support.len();
        let mut l: f64 = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                let d = (self.support[a] - self.support[b]).abs();
                if d == 0.0 {
                    return Err(Error::invalid(format!(
                        "support points {a} and {b} are distinct but at distance zero"
                    )));
                }
                for t in 0..2 {
                    l = l.max((self.mu(t, a) - self.mu(t, b)).abs() / d);
                }
            }
        }
        Ok(l)
    }
}

/// 1-Wasserstein distance between two distributions on the same points of
/// the real line, via the integral of the CDF difference.
pub fn wasserstein_1d(points: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let (mut cp, mut cq, mut w) = (0.0, 0.0, 0.0);
    for win in order.windows(2) {
        cp += p[win[0]];
        cq += q[win[0]];
        w += (cp - cq).abs() * (points[win[1]] - points[win[0]]);
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropsReport {
    pub tau: f64,
    pub diff_in_means: f64,
    /// Whether `X⊥ | T=1` and `X⊥ | T=0` coincide.
    pub tight_steering: bool,
    pub diff_in_means_identifies: Option<bool>,
    pub positivity: bool,
    pub adjusted: Option<f64>,
    pub adjustment_identifies: Option<bool>,
    pub message: Option<String>,
}

/// Exhaustive-summation check of the tight-steering and perfect-control
/// identification results.
pub fn oracle_check_props(world: &OracleWorld) -> Result<PropsReport> {
    world.validate()?;
    let k = world.support.len();
    let n_e = world.noise.len();
    let tau: f64 = (0..k).map(|x| world.p_x(x) * (world.mu(1, x) - world.mu(0, x))).sum();

    // P(X⊥ = x, T = t), and E[Y | T = t] by summing over every atom
    let p_xt = |x: usize, t: usize| -> f64 { world.joint[x].iter().map(|c| c[t]).sum() };
    let mut p_t = [0.0; 2];
    let mut ey_t = [0.0; 2];
    for x in 0..k {
        for c in 0..world.n_tilde {
            for t in 0..2 {
                let p = world.joint[x][c][t];
                p_t[t] += p;
                for e in 0..n_e {
                    ey_t[t] += p * world.noise[e] * world.outcome[t][x][e];
                }
            }
        }
    }
    if p_t[0] == 0.0 || p_t[1] == 0.0 {
        return Err(Error::invalid("a treatment arm has zero probability"));
    }
    let diff_in_means = ey_t[1] / p_t[1] - ey_t[0] / p_t[0];
    let tight_steering = (0..k).all(|x| (p_xt(x, 1) / p_t[1] - p_xt(x, 0) / p_t[0]).abs() <= EXACT_TOL);

    let positivity = (0..k).all(|x| world.p_x(x) == 0.0 || (p_xt(x, 0) > 0.0 && p_xt(x, 1) > 0.0));
    let (adjusted, message) = if positivity {
        let mut adj = 0.0;
        for x in 0..k {
            let px = world.p_x(x);
            if px == 0.0 {
                continue;
            }
            let mut cond = [0.0; 2];
            for (t, v) in cond.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..world.n_tilde {
                    for e in 0..n_e {
                        s += world.joint[x][c][t] * world.noise[e] * world.outcome[t][x][e];
                    }
                }
                *v = s / p_xt(x, t);
            }
            adj += px * (cond[1] - cond[0]);
        }
        (Some(adj), None)
    } else {
        (None, Some("positivity is violated".to_string()))
    };
    let close = |a: f64| (a - tau).abs() <= EXACT_TOL * (1.0 + tau.abs());
    Ok(PropsReport {
        tau,
        diff_in_means,
        tight_steering,
        diff_in_means_identifies: tight_steering.then(|| close(diff_in_means)),
        positivity,
        adjusted,
        adjustment_identifies: adjusted.map(close),
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBound {
    pub tilde: usize,
    pub tau: f64,
    pub tau_tilde: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub lipschitz: f64,
    pub delta: f64,
    pub cells: Vec<CellBound>,
    /// Cells skipped because one arm has no mass there.
    pub skipped_cells: Vec<usize>,
    pub max_gap: f64,
    pub bound_2l_delta_holds: bool,
    pub bound_l_delta_holds: bool,
    /// `max_gap / (L·δ)`; `None` when `L·δ = 0`.
    pub ratio_to_l_delta: Option<f64>,
}

pub fn oracle_check_theorem1(world: &OracleWorld) -> Result<Theorem1Report> {
    world.validate()?;
    let l = world.lipschitz()?;
    let k = world.support.len();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..world.n_tilde {
        let mass = |t: usize| -> f64 { (0..k).map(|x| world.joint[x][c][t]).sum() };
        let (m0, m1) = (mass(0), mass(1));
        if m0 == 0.0 || m1 == 0.0 {
            if m0 + m1 > 0.0 {
                skipped.push(c);
            }
            continue;
        }
        let nu: [Vec<f64>; 2] = [
            (0..k).map(|x| world.joint[x][c][0] / m0).collect(),
            (0..k).map(|x| world.joint[x][c][1] / m1).collect(),
        ];
        let m = m0 + m1;
        let mut tau = 0.0;
        for x in 0..k {
            let p = (world.joint[x][c][0] + world.joint[x][c][1]) / m;
            tau += p * (world.mu(1, x) - world.mu(0, x));
        }
        let mut tau_tilde = 0.0;
        for x in 0..k {
            tau_tilde += nu[1][x] * world.mu(1, x) - nu[0][x] * world.mu(0, x);
        }
        cells.push(CellBound {
            tilde: c,
            tau,
            tau_tilde,
            w1: wasserstein_1d(&world.support, &nu[1], &nu[0]),
        });
    }
    let delta = cells.iter().map(|c| c.w1).fold(0.0, f64::max);
    let max_gap = cells.iter().map(|c| (c.tau - c.tau_tilde).abs()).fold(0.0, f64::max);
    let ld = l * delta;
    Ok(Theorem1Report {
        lipschitz: l,
        delta,
        cells,
        skipped_cells: skipped,
        max_gap,
        bound_2l_delta_holds: max_gap <= 2.0 * ld + EXACT_TOL,
        bound_l_delta_holds: max_gap <= ld + EXACT_TOL,
        ratio_to_l_delta: (ld > 0.0).then(|| max_gap / ld),
    })
}

/// Random world with 2..=`max_support` support points, 1..=3 control cells
/// and a two-point noise.
pub fn random_oracle_world(max_support: usize, stream: &RngStream) -> Result<OracleWorld> {
    if max_support < 2 {
        return Err(Error::invalid("max_support must be at least 2"));
    }
    let mut rng = stream.rng();
    let k = rng.random_range(2..=max_support);
    let mut support: Vec<f64> = Vec::with_capacity(k);
    let mut pos = 0.0;
    for _ in 0..k {
        pos += rng.random_range(0.05..2.0);
        support.push(pos);
    }
    let n_tilde = rng.random_range(1..=3);
    let sparse = rng.random_bool(0.3);
    let mut joint: Vec<Vec<[f64; 2]>> = (0..k)
        .map(|_| {
            (0..n_tilde)
                .map(|_| {
                    let mut cell = [rng.random::<f64>(), rng.random::<f64>()];
                    for v in &mut cell {
                        if sparse && rng.random_bool(0.3) {
                            *v = 0.0;
                        }
                    }
                    cell
                })
                .collect()
        })
        .collect();
    let total: f64 = joint.iter().flatten().flatten().sum();
    if total == 0.0 {
        joint[0][0] = [0.5, 0.5];
    } else {
        for v in joint.iter_mut().flatten().flatten() {
            *v /= total;
        }
    }
    let pn = rng.random_range(0.1..0.9);
    let noise = vec![pn, 1.0 - pn];
    let mut table = || -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..2).map(|_| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect())
            .collect()
    };
    let outcome = [table(), table()];
    let w = OracleWorld { support, n_tilde, joint, noise, outcome };
    w.validate()?;
    Ok(w)
}
