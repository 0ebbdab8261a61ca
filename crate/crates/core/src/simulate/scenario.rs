//! End-to-end synthetic experiment: world → corpus → score → design →
//! residualize → semi-synthetic outcomes → R-learner under each strategy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_stream, Matrix, RngStream};
use crate::design::{
    assign_treatment, component_map, default_diagnostic_learner, embedding_matrix, overlap_diagnostics,
    residualize_dim_by_dim, residualize_drop_pc1, rotate, OverlapDiagnostics, Residualization,
};
use crate::error::{Error, Result};
use crate::estimate::{
    default_propensity_learner, evaluate, r_learner_fit, NuisanceFits, Penalty, DEFAULT_PI_MIN,
};
use crate::numkit::stats::median;
use crate::numkit::{cross_fit, make_folds, FoldAssignment, LearnerSpec};
use crate::scoring::{build_curves, score_curve, FeatureScore};
use crate::simulate::dgp::{sample_dgp_specs, synthesize_outcomes, DEFAULT_GAMMA, DEFAULT_SIGMA};
use crate::simulate::world::{generate_synthetic_corpus, SyntheticWorld, WorldParams, DEFAULT_N_BASE};

pub const DEFAULT_IC_MIN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub k_folds: usize,
    pub pi_min: f64,
    pub outcome_learner: LearnerSpec,
    pub propensity_learner: LearnerSpec,
    /// Learner predicting each covariate from the treatment.
    pub residualization_learner: LearnerSpec,
    pub penalty: Penalty,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k_folds: 5,
            pi_min: DEFAULT_PI_MIN,
            outcome_learner: LearnerSpec::default(),
            propensity_learner: default_propensity_learner(),
            residualization_learner: LearnerSpec::default(),
            penalty: Penalty::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub world: WorldParams,
    pub n_base: usize,
    pub n_specs: usize,
    pub ate_gamma: f64,
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub ic_min: f64,
    pub strategies: Vec<Residualization>,
    pub diagnostics: bool,
    pub diagnostic_learner: LearnerSpec,
    pub estimator: EstimatorConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            world: WorldParams::default(),
            n_base: DEFAULT_N_BASE,
            n_specs: 20,
            ate_gamma: DEFAULT_GAMMA,
            sigma: DEFAULT_SIGMA,
            seeds: vec![0],
            ic_min: DEFAULT_IC_MIN,
            strategies: vec![Residualization::None, Residualization::DimByDim, Residualization::DropPc1],
            diagnostics: true,
            diagnostic_learner: default_diagnostic_learner(),
            estimator: EstimatorConfig::default(),
        }
    }
}

pub fn strategy_label(r: Residualization) -> &'static str {
    match r {
        Residualization::None => "raw",
        other => other.as_str(),
    }
}

/// A scored, rotated and residualized synthetic design.
#[derive(Debug, Clone)]
pub struct PreparedWorld {
    pub seed: u64,
    pub score: FeatureScore,
    pub n_records: usize,
    pub x: Matrix,
    pub x_dim_by_dim: Matrix,
    pub x_drop_pc1: Matrix,
    pub t: Vec<u8>,
    pub w: Vec<f64>,
    pub base_ids: Vec<String>,
    pub folds: FoldAssignment,
}

impl PreparedWorld {
    pub fn controls(&self, r: Residualization) -> &Matrix {
        match r {
            Residualization::None => &self.x,
            Residualization::DimByDim => &self.x_dim_by_dim,
            Residualization::DropPc1 => &self.x_drop_pc1,
        }
    }
}

fn root(seed: u64) -> RngStream {
    derive_stream(seed, &[])
}

pub fn prepare_world(cfg: &ScenarioConfig, seed: u64) -> Result<PreparedWorld> {
    let s = root(seed);
    let world = SyntheticWorld::new(cfg.world.clone(), &s.child(0))?;
    let corpus = generate_synthetic_corpus(&world, cfg.n_base, &s.child(1))?;
    let curves = build_curves(&corpus);
    let curve = curves.first().ok_or_else(|| Error::invalid("empty corpus"))?;
    let score = score_curve(curve)?;
    let assignment = assign_treatment(&corpus)?;
    let (x, _) = rotate(&embedding_matrix(&corpus, &assignment.rows)?)?;
    let folds = make_folds(x.nrows(), cfg.estimator.k_folds, Some(&assignment.base_ids), &s.child(2))?;
    let x_dd = residualize_dim_by_dim(
        &x,
        &assignment.treatment,
        &assignment.weights,
        &folds,
        &cfg.estimator.residualization_learner,
        &s.child(3),
    )?;
    let x_pc1 = residualize_drop_pc1(&x)?;
    Ok(PreparedWorld {
        seed,
        score,
        n_records: corpus.len(),
        x,
        x_dim_by_dim: x_dd,
        x_drop_pc1: x_pc1,
        t: assignment.treatment,
        w: assignment.weights,
        base_ids: assignment.base_ids,
        folds,
    })
}

pub fn world_diagnostics(
    cfg: &ScenarioConfig,
    world: &PreparedWorld,
    kind: Residualization,
) -> Result<OverlapDiagnostics> {
    let p = world.x.ncols();
    overlap_diagnostics(
        &world.x,
        world.controls(kind),
        &component_map(kind, p),
        &world.t,
        &world.w,
        &world.folds,
        &cfg.diagnostic_learner,
        &root(world.seed).child(4).child(kind as u64),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub seed: u64,
    pub score: FeatureScore,
    pub kept: bool,
    pub n_records: usize,
    pub n_design: usize,
    pub n_treated: usize,
    pub n_bases: usize,
    pub n_columns: usize,
    pub diagnostics: Option<OverlapDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecResult {
    pub seed: u64,
    pub spec_id: usize,
    pub functions: String,
    pub strategy: String,
    pub ate_hat: f64,
    pub ate_bias: f64,
    pub abs_bias: f64,
    pub cate_rmse: f64,
    pub lambda: f64,
    pub n_clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub n: usize,
    pub median_abs_bias: f64,
    pub median_rmse: f64,
    pub mean_abs_bias: f64,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResults {
    pub worlds: Vec<WorldSummary>,
    pub rows: Vec<SpecResult>,
    pub summary: Vec<StrategySummary>,
}

impl ScenarioResults {
    pub fn strategy(&self, label: &str) -> Option<&StrategySummary> {
        self.summary.iter().find(|s| s.strategy == label)
    }
}

fn summarize(rows: &[SpecResult], strategies: &[Residualization]) -> Vec<StrategySummary> {
    strategies
        .iter()
        .map(|&r| {
            let label = strategy_label(r);
            let sel: Vec<&SpecResult> = rows.iter().filter(|x| x.strategy == label).collect();
            let b: Vec<f64> = sel.iter().map(|x| x.abs_bias).collect();
            let e: Vec<f64> = sel.iter().map(|x| x.cate_rmse).collect();
            let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            StrategySummary {
                strategy: label.to_string(),
                n: sel.len(),
                median_abs_bias: if b.is_empty() { f64::NAN } else { median(&b) },
                median_rmse: if e.is_empty() { f64::NAN } else { median(&e) },
                mean_abs_bias: avg(&b),
                mean_rmse: avg(&e),
            }
        })
        .collect()
}

/// Run every DGP spec under every strategy on one prepared world.
pub fn estimate_world(cfg: &ScenarioConfig, world: &PreparedWorld) -> Result<Vec<SpecResult>> {
    let s = root(world.seed);
    let est = &cfg.estimator;
    let specs = sample_dgp_specs(cfg.n_specs, world.x_dim_by_dim.ncols(), cfg.ate_gamma, cfg.sigma, &s.child(5))?;
    let tf: Vec<f64> = world.t.iter().map(|&v| v as f64).collect();
    // propensities do not depend on the outcome: one fit per strategy
    let pis: Vec<Vec<f64>> = cfg
        .strategies
        .iter()
        .map(|&r| {
            let p = cross_fit(world.controls(r), &tf, &world.w, &world.folds, &est.propensity_learner, &s.child(7).child(r as u64))?;
            Ok(p.into_iter().map(|v| v.clamp(est.pi_min, 1.0 - est.pi_min)).collect())
        })
        .collect::<Result<_>>()?;
    let per_spec: Vec<Result<Vec<SpecResult>>> = specs
        .par_iter()
        .map(|spec| {
            let out = synthesize_outcomes(&world.x_dim_by_dim, &world.t, spec, &s.child(6).child(spec.id as u64))?;
            let mut rows = Vec::new();
            for (k, &r) in cfg.strategies.iter().enumerate() {
                let x = world.controls(r);
                let mu = cross_fit(x, &out.y, &world.w, &world.folds, &est.outcome_learner, &s.child(8).child(spec.id as u64).child(r as u64))?;
                let nuis = NuisanceFits { mu_hat: mu, pi_hat: pis[k].clone(), n_clipped: 0 };
                let rep = r_learner_fit(x, &out.y, &world.t, &world.w, &nuis, &est.penalty, Some(&world.folds))?;
                let (bias, rmse) = evaluate(&rep, &out.tau, spec.ate_gamma, &world.w)?;
                rows.push(SpecResult {
                    seed: world.seed,
                    spec_id: spec.id,
                    functions: spec.tuple(),
                    strategy: strategy_label(r).to_string(),
                    ate_hat: rep.ate_hat,
                    ate_bias: bias,
                    abs_bias: bias.abs(),
                    cate_rmse: rmse,
                    lambda: rep.lambda,
                    n_clipped: pis[k].iter().filter(|&&p| p == est.pi_min || p == 1.0 - est.pi_min).count(),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_spec {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Validate cheap invariants before any compute.
pub fn validate_config(cfg: &ScenarioConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("seeds must not be empty"));
    }
    if cfg.strategies.is_empty() {
        return Err(Error::invalid("strategies must not be empty"));
    }
    if cfg.n_base == 0 {
        return Err(Error::invalid("n_base must be at least 1"));
    }
    if !(cfg.estimator.pi_min > 0.0 && cfg.estimator.pi_min < 0.5) {
        return Err(Error::invalid("estimator.pi_min must lie in (0, 0.5)"));
    }
    if cfg.estimator.k_folds < 2 {
        return Err(Error::invalid("estimator.k_folds must be at least 2"));
    }
    SyntheticWorld::new(cfg.world.clone(), &root(0))?;
    Ok(())
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResults> {
    validate_config(cfg)?;
    let mut worlds = Vec::new();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let world = prepare_world(cfg, seed)?;
        let kept = world.score.ic >= cfg.ic_min;
        let diagnostics = if cfg.diagnostics {
            Some(world_diagnostics(cfg, &world, Residualization::DimByDim)?)
        } else {
            None
        };
        worlds.push(WorldSummary {
            seed,
            score: world.score.clone(),
            kept,
            n_records: world.n_records,
            n_design: world.t.len(),
            n_treated: world.t.iter().filter(|&&v| v == 1).count(),
            n_bases: world.base_ids.iter().collect::<std::collections::BTreeSet<_>>().len(),
            n_columns: world.x.ncols(),
            diagnostics,
        });
        if kept {
            rows.extend(estimate_world(cfg, &world)?);
        }
    }
    let summary = summarize(&rows, &cfg.strategies);
    Ok(ScenarioResults { worlds, rows, summary })
}
