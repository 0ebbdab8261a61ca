use std::path::PathBuf;

use latent_treat::data::derive_stream;
use latent_treat::estimate::{fit_nuisances, r_learner_fit, EstimationReport};
use latent_treat::numkit::make_folds;
use latent_treat::simulate::dgp::{random_partition, sample_dgp_specs, synthesize_outcomes, DgpSpec, GFunction};
use latent_treat::simulate::scenario::EstimatorConfig;
use serde::{Deserialize, Serialize};

use super::design::load_bundle;
use super::require_path;
use crate::config::default_schema_version;
use crate::error::{CliError, CliResult};
use crate::output::{csv_text, num, Outputs};
use crate::svg;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomesFile {
    /// CSV with a header; column `y` is required, `tau` is optional truth.
    pub path: PathBuf,
    /// True ATE for bias; defaults to the weighted mean of `tau`.
    #[serde(default)]
    pub ate_gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSection {
    pub ate_gamma: f64,
    pub sigma: f64,
    /// Explicit (g1, g2, g3, g4); drawn from the seed when absent.
    pub functions: Option<[GFunction; 4]>,
}

impl Default for DgpSection {
    fn default() -> Self {
        DgpSection { ate_gamma: 5.0, sigma: 0.1, functions: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Directory written by the design stage.
    pub design: Option<PathBuf>,
    pub outcomes: Option<OutcomesFile>,
    pub dgp: Option<DgpSection>,
    pub estimator: EstimatorConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            schema_version: default_schema_version(),
            seed: 0,
            design: None,
            outcomes: None,
            dgp: None,
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateOutput<'a> {
    feature_id: &'a str,
    n: usize,
    dgp: Option<&'a DgpSpec>,
    report: &'a EstimationReport,
}

fn read_outcomes(bytes: &[u8], path: &str, n: usize) -> CliResult<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{path}: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let yc = col("y").ok_or_else(|| CliError::validation(format!("{path}: missing column y")))?;
    let tc = col("tau");
    let (mut y, mut tau) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::validation(format!("{path}: {e}")))?;
        let parse = |c: usize| -> CliResult<f64> {
            rec.get(c)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::validation(format!("{path}: row {}: bad number", i + 1)))
        };
        y.push(parse(yc)?);
        if let Some(c) = tc {
            tau.push(parse(c)?);
        }
    }
    if y.len() != n {
        return Err(CliError::validation(format!("{path}: {} rows, design has {n}", y.len())));
    }
    Ok((y, tc.map(|_| tau)))
}

pub fn run(cfg: &EstimateConfig, out: &mut Outputs) -> CliResult<()> {
    let dir = require_path(&cfg.design, "design")?;
    let design = load_bundle(dir, out)?;
    let b = &design.bundle;
    let x = design.controls();
    let n = b.treatment.len();
    let (y, truth, gamma, spec) = match (&cfg.outcomes, &cfg.dgp) {
        (Some(o), None) => {
            let bytes = out.input(&o.path)?;
            let (y, tau) = read_outcomes(&bytes, &o.path.display().to_string(), n)?;
            let gamma = o.ate_gamma.or_else(|| {
                tau.as_ref().map(|t| {
                    t.iter().zip(&b.weights).map(|(a, w)| a * w).sum::<f64>() / b.weights.iter().sum::<f64>()
                })
            });
            (y, tau, gamma, None)
        }
        (None, Some(d)) => {
            let stream = derive_stream(cfg.seed, &[3]);
            let mut spec = sample_dgp_specs(1, x.ncols(), d.ate_gamma, d.sigma, &stream)?.remove(0);
            if let Some(g) = d.functions {
                spec.g = g;
                spec.partition = random_partition(x.ncols(), &stream.child(2))?;
            }
            let o = synthesize_outcomes(x, &b.treatment, &spec, &stream.child(3))?;
            (o.y, Some(o.tau), Some(d.ate_gamma), Some(spec))
        }
        (Some(_), Some(_)) => return Err(CliError::validation("set only one of outcomes or dgp")),
        (None, None) => return Err(CliError::validation("missing required key: outcomes or dgp")),
    };
    let est = &cfg.estimator;
    let folds = make_folds(n, est.k_folds, Some(&b.base_ids), &derive_stream(cfg.seed, &[1]))?;
    let nuis = fit_nuisances(
        x,
        &y,
        &b.treatment,
        &b.weights,
        &folds,
        &est.outcome_learner,
        &est.propensity_learner,
        est.pi_min,
        &derive_stream(cfg.seed, &[2]),
    )?;
    let mut report = r_learner_fit(x, &y, &b.treatment, &b.weights, &nuis, &est.penalty, Some(&folds))?;
    if let (Some(t), Some(g)) = (&truth, gamma) {
        report.attach_truth(t, g, &b.weights)?;
    }
    out.add_json(
        "report.json",
        &EstimateOutput { feature_id: &b.feature_id, n, dgp: spec.as_ref(), report: &report },
    )?;
    let rows = (0..n).map(|i| {
        vec![
            i.to_string(),
            b.base_ids[i].clone(),
            b.treatment[i].to_string(),
            num(b.weights[i]),
            num(report.cate_hat[i]),
            truth.as_ref().map(|t| num(t[i])).unwrap_or_default(),
        ]
    });
    out.add("cate.csv", csv_text(&["row", "base_id", "treatment", "weight", "tau_hat", "tau_true"], rows)?);
    out.add("cate.svg", cate_chart(&report.cate_hat, truth.as_deref()));
    Ok(())
}

pub fn cate_chart(tau_hat: &[f64], truth: Option<&[f64]>) -> String {
    let mut series = vec![("estimated".to_string(), tau_hat.to_vec())];
    let mut charts = Vec::new();
    if let Some(t) = truth {
        series.push(("true".to_string(), t.to_vec()));
    }
    charts.push(svg::histogram_overlay("CATE distribution", "treatment effect", &series, 30));
    if let Some(t) = truth {
        let pts: Vec<(f64, f64)> = t.iter().copied().zip(tau_hat.iter().copied()).collect();
        charts.push(svg::scatter("estimated vs true CATE", "true", "estimated", &pts, true));
    }
    svg::render(&charts)
}
