use std::path::PathBuf;

use latent_treat::data::{derive_stream, load_activation_dataset, load_matrix, MatrixFormat};
use latent_treat::numkit::CvMetric;
use latent_treat::probing::{
    activation_rates, filter_candidates, log_grid, persistence_rank, rank_mean_difference, FilterConfig,
};
use serde::{Deserialize, Serialize};

use super::require_path;
use crate::config::default_schema_version;
use crate::error::{CliError, CliResult};
use crate::output::{csv_text, num, Outputs};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub activations: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub matrix_header: bool,
    /// Activations on a broad reference corpus; the training matrix is used
    /// when absent.
    pub corpus_activations: Option<PathBuf>,
    pub filter: FilterConfig,
    pub k: usize,
    pub lambda_grid: Option<Vec<f64>>,
    pub k_folds: usize,
    pub metric: CvMetric,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            schema_version: default_schema_version(),
            seed: 0,
            activations: None,
            sidecar: None,
            matrix_header: false,
            corpus_activations: None,
            filter: FilterConfig::default(),
            k: 64,
            lambda_grid: None,
            k_folds: 5,
            metric: CvMetric::default(),
        }
    }
}

fn format_for(path: &std::path::Path, header: bool) -> MatrixFormat {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv { .. } => MatrixFormat::Csv { header },
        f => f,
    }
}

pub fn run(cfg: &ProbeConfig, out: &mut Outputs) -> CliResult<()> {
    let act = require_path(&cfg.activations, "activations")?;
    let side = require_path(&cfg.sidecar, "sidecar")?;
    out.input(act)?;
    out.input(side)?;
    let dataset = load_activation_dataset(act, format_for(act, cfg.matrix_header), side)?;
    let corpus_rates = match &cfg.corpus_activations {
        Some(p) => {
            out.input(p)?;
            let m = load_matrix(p, format_for(p, cfg.matrix_header))?;
            if m.ncols() != dataset.n_features() {
                return Err(CliError::validation(format!(
                    "corpus_activations has {} columns, expected {}",
                    m.ncols(),
                    dataset.n_features()
                )));
            }
            (0..m.ncols())
                .map(|j| m.column(j).iter().filter(|&&v| v > 0.0).count() as f64 / m.nrows() as f64)
                .collect()
        }
        None => activation_rates(&dataset),
    };
    let report = filter_candidates(&dataset, &corpus_rates, &cfg.filter)?;
    if report.kept.is_empty() {
        return Err(CliError::validation("no features survive filtering"));
    }
    let k = cfg.k.min(report.kept.len());
    let top = rank_mean_difference(&dataset, &report.kept, k)?;
    let grid = cfg.lambda_grid.clone().unwrap_or_else(|| log_grid(1e-4, 1.0, 20));
    let ranking = persistence_rank(&dataset, &top, &grid, cfg.k_folds, cfg.metric, &derive_stream(cfg.seed, &[0]))?;
    out.add_json("filter_report.json", &report)?;
    out.add_json("ranking.json", &ranking)?;
    let desc = |id: &str| -> String {
        dataset
            .features()
            .iter()
            .find(|f| f.id == id)
            .map(|f| f.description.clone())
            .unwrap_or_default()
    };
    let rows = ranking.per_feature.iter().map(|f| {
        vec![
            f.feature_id.clone(),
            num(f.delta),
            num(f.median_rank),
            num(f.coefficient),
            desc(&f.feature_id),
        ]
    });
    out.add(
        "leaderboard.csv",
        csv_text(&["feature_id", "delta", "median_rank", "coefficient", "description"], rows)?,
    );
    Ok(())
}
