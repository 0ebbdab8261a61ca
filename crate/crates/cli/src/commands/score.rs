use std::path::PathBuf;

use latent_treat::data::load_steered_corpus;
use latent_treat::scoring::{build_curves, score_curve, FeatureScore};
use serde::{Deserialize, Serialize};

use super::{require_path, slug};
use crate::config::default_schema_version;
use crate::error::CliResult;
use crate::output::{csv_text, num, Outputs};
use crate::svg;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { schema_version: default_schema_version(), seed: 0, corpus: None }
    }
}

#[derive(Debug, Serialize)]
struct ScoreEntry {
    feature_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<FeatureScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(cfg: &ScoreConfig, out: &mut Outputs) -> CliResult<()> {
    let path = require_path(&cfg.corpus, "corpus")?;
    out.input(path)?;
    let records = load_steered_corpus(path)?;
    let curves = build_curves(&records);
    let mut entries = Vec::new();
    let mut feature_rows = Vec::new();
    let mut curve_rows = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for p in &c.points {
            curve_rows.push(vec![
                c.feature_id.clone(),
                num(p.alpha),
                num(p.mean_intensity),
                num(p.mean_coherence),
                num(p.validation_rate),
                p.n_records.to_string(),
            ]);
        }
        match score_curve(c) {
            Ok(s) => {
                feature_rows.push(vec![s.feature_id.clone(), num(s.i_star), num(s.j_star), num(s.ic)]);
                entries.push(ScoreEntry { feature_id: c.feature_id.clone(), score: Some(s), error: None });
            }
            Err(e) => entries.push(ScoreEntry { feature_id: c.feature_id.clone(), score: None, error: Some(e.to_string()) }),
        }
        let chart = svg::line_chart(
            &format!("intensity curve: {}", c.feature_id),
            "steering factor",
            "value",
            &[
                svg::Series { label: "mean intensity".into(), points: c.points.iter().map(|p| (p.alpha, p.mean_intensity)).collect() },
                svg::Series { label: "validation rate".into(), points: c.points.iter().map(|p| (p.alpha, p.validation_rate)).collect() },
            ],
        );
        out.add(format!("intensity_{i:03}_{}.svg", slug(&c.feature_id)), svg::render(&[chart]));
    }
    out.add("features.csv", csv_text(&["feature_id", "i_star", "j_star", "ic"], feature_rows)?);
    out.add(
        "curves.csv",
        csv_text(&["feature_id", "alpha", "mean_intensity", "mean_coherence", "validation_rate", "n_records"], curve_rows)?,
    );
    out.add_json("scores.json", &entries)?;
    Ok(())
}
