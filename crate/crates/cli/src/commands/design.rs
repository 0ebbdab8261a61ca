use std::path::{Path, PathBuf};

use latent_treat::data::io::{encode_binary, format_csv};
use latent_treat::data::{derive_stream, load_matrix, load_steered_corpus, Matrix, MatrixFormat};
use latent_treat::design::{
    assign_treatment, component_map, default_diagnostic_learner, embedding_matrix, overlap_diagnostics,
    residualize_dim_by_dim, residualize_drop_pc1, rotate, OverlapDiagnostics, Residualization,
};
use latent_treat::numkit::{make_folds, LearnerSpec, PcaModel};
use serde::{Deserialize, Serialize};

use super::{display_strategy, require_path};
use crate::config::default_schema_version;
use crate::error::{CliError, CliResult};
use crate::output::{csv_text, num, Outputs};
use crate::svg;

pub const BUNDLE_NAME: &str = "design.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixEncoding {
    Binary,
    Csv,
}

impl MatrixEncoding {
    fn ext(self) -> &'static str {
        match self {
            MatrixEncoding::Binary => "ltmat",
            MatrixEncoding::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    /// Required when the corpus holds more than one feature.
    pub feature_id: Option<String>,
    pub residualization: Residualization,
    pub k_folds: usize,
    pub residualization_learner: LearnerSpec,
    pub diagnostics: bool,
    pub diagnostic_learner: LearnerSpec,
    pub matrix_format: MatrixEncoding,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            schema_version: default_schema_version(),
            seed: 0,
            corpus: None,
            feature_id: None,
            residualization: Residualization::DimByDim,
            k_folds: 5,
            residualization_learner: LearnerSpec::default(),
            diagnostics: true,
            diagnostic_learner: default_diagnostic_learner(),
            matrix_format: MatrixEncoding::Binary,
        }
    }
}

/// Sidecar describing a design bundle directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBundle {
    pub schema_version: u32,
    pub feature_id: String,
    pub residualization: Residualization,
    pub x: String,
    pub x_resid: Option<String>,
    /// Corpus line indices (0-based over non-blank records).
    pub rows: Vec<usize>,
    pub treatment: Vec<u8>,
    pub weights: Vec<f64>,
    pub base_ids: Vec<String>,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub pca: PcaModel,
}

pub struct LoadedDesign {
    pub bundle: DesignBundle,
    pub x: Matrix,
    pub x_resid: Option<Matrix>,
}

impl LoadedDesign {
    pub fn controls(&self) -> &Matrix {
        self.x_resid.as_ref().unwrap_or(&self.x)
    }
}

fn matrix_format_of(name: &str) -> MatrixFormat {
    match MatrixFormat::from_path(Path::new(name)) {
        MatrixFormat::Csv { .. } => MatrixFormat::Csv { header: false },
        f => f,
    }
}

pub fn load_bundle(dir: &Path, out: &mut Outputs) -> CliResult<LoadedDesign> {
    let side = dir.join(BUNDLE_NAME);
    let bytes = out.input(&side)?;
    let bundle: DesignBundle = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", side.display())))?;
    let load = |name: &str, out: &mut Outputs| -> CliResult<Matrix> {
        let p = dir.join(name);
        out.input(&p)?;
        Ok(load_matrix(&p, matrix_format_of(name))?)
    };
    let x = load(&bundle.x, out)?;
    let x_resid = match &bundle.x_resid {
        Some(n) => Some(load(n, out)?),
        None => None,
    };
    let n = bundle.treatment.len();
    if x.nrows() != n || bundle.weights.len() != n || bundle.base_ids.len() != n || x_resid.as_ref().is_some_and(|m| m.nrows() != n) {
        return Err(CliError::validation(format!("{}: row counts disagree", side.display())));
    }
    Ok(LoadedDesign { bundle, x, x_resid })
}

fn encode_matrix(m: &Matrix, enc: MatrixEncoding) -> Vec<u8> {
    match enc {
        MatrixEncoding::Binary => encode_binary(m),
        MatrixEncoding::Csv => format_csv(m, None).into_bytes(),
    }
}

pub fn accuracy_chart(d: &OverlapDiagnostics, kind: Residualization) -> String {
    let resid = display_strategy(kind.as_str()).to_string();
    let comps = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().enumerate().map(|(j, a)| ((j + 1) as f64, *a)).collect() };
    svg::render(&[
        svg::histogram_overlay(
            "per-component treatment prediction accuracy",
            "accuracy",
            &[("raw".into(), d.per_component_raw.clone()), (resid.clone(), d.per_component_resid.clone())],
            20,
        ),
        svg::line_chart(
            "accuracy by principal component",
            "component",
            "accuracy",
            &[
                svg::Series { label: "raw".into(), points: comps(&d.per_component_raw) },
                svg::Series { label: resid, points: comps(&d.per_component_resid) },
            ],
        ),
    ])
}

pub fn run(cfg: &DesignConfig, out: &mut Outputs) -> CliResult<()> {
    let path = require_path(&cfg.corpus, "corpus")?;
    out.input(path)?;
    let records = load_steered_corpus(path)?;
    let mut ids: Vec<&str> = records.iter().map(|r| r.feature_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let feature = match (&cfg.feature_id, ids.as_slice()) {
        (Some(f), _) => f.clone(),
        (None, [one]) => one.to_string(),
        (None, []) => return Err(CliError::validation("corpus is empty")),
        (None, _) => return Err(CliError::validation("corpus holds several features; set feature_id")),
    };
    let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].feature_id == feature).collect();
    if idx.is_empty() {
        return Err(CliError::validation(format!("feature_id {feature} not found in corpus")));
    }
    let subset: Vec<_> = idx.iter().map(|&i| records[i].clone()).collect();
    let a = assign_treatment(&subset)?;
    let (x, pca) = rotate(&embedding_matrix(&subset, &a.rows)?)?;
    let folds = make_folds(x.nrows(), cfg.k_folds, Some(&a.base_ids), &derive_stream(cfg.seed, &[0]))?;
    let x_resid = match cfg.residualization {
        Residualization::None => None,
        Residualization::DimByDim => Some(residualize_dim_by_dim(
            &x,
            &a.treatment,
            &a.weights,
            &folds,
            &cfg.residualization_learner,
            &derive_stream(cfg.seed, &[1]),
        )?),
        Residualization::DropPc1 => Some(residualize_drop_pc1(&x)?),
    };
    let ext = cfg.matrix_format.ext();
    out.add(format!("x.{ext}"), encode_matrix(&x, cfg.matrix_format));
    if let Some(r) = &x_resid {
        out.add(format!("x_resid.{ext}"), encode_matrix(r, cfg.matrix_format));
    }
    let bundle = DesignBundle {
        schema_version: default_schema_version(),
        feature_id: feature,
        residualization: cfg.residualization,
        x: format!("x.{ext}"),
        x_resid: x_resid.as_ref().map(|_| format!("x_resid.{ext}")),
        rows: a.rows.iter().map(|&r| idx[r]).collect(),
        treatment: a.treatment.clone(),
        weights: a.weights.clone(),
        base_ids: a.base_ids.clone(),
        lower_threshold: a.lower_threshold,
        upper_threshold: a.upper_threshold,
        pca,
    };
    out.add_json(BUNDLE_NAME, &bundle)?;
    if cfg.diagnostics {
        let resid = x_resid.as_ref().unwrap_or(&x);
        let d = overlap_diagnostics(
            &x,
            resid,
            &component_map(cfg.residualization, x.ncols()),
            &a.treatment,
            &a.weights,
            &folds,
            &cfg.diagnostic_learner,
            &derive_stream(cfg.seed, &[2]),
        )?;
        let rows = (0..x.ncols()).map(|j| {
            vec![
                (j + 1).to_string(),
                num(d.per_component_raw[j]),
                num(d.per_component_resid[j]),
                num(d.per_component_gap[j]),
            ]
        });
        out.add("diagnostics.csv", csv_text(&["component", "acc_raw", "acc_resid", "gap"], rows)?);
        out.add("accuracy.svg", accuracy_chart(&d, cfg.residualization));
        out.add_json("diagnostics.json", &d)?;
    }
    Ok(())
}
