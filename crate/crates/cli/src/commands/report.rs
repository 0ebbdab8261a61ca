use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::estimate::cate_chart;
use super::simulate::bias_rmse_chart;
use crate::config::default_schema_version;
use crate::error::{CliError, CliResult};
use crate::output::{csv_text, load_artifact, read_manifest, Manifest, Outputs};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub manifests: Vec<PathBuf>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { schema_version: default_schema_version(), seed: 0, manifests: Vec::new() }
    }
}

struct Loaded {
    path: PathBuf,
    manifest: Manifest,
}

impl Loaded {
    fn artifact(&self, name: &str) -> CliResult<Vec<u8>> {
        let entry = self
            .manifest
            .artifacts
            .iter()
            .find(|a| a.path == name)
            .ok_or_else(|| CliError::validation(format!("{}: no artifact {name}", self.path.display())))?;
        load_artifact(&self.path, entry)
    }
}

fn read_table(bytes: &[u8], what: &str) -> CliResult<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let err = |e: csv::Error| CliError::validation(format!("{what}: {e}"));
    let header = rdr.headers().map_err(err)?.clone();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(err)?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, what: &str) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::validation(format!("{what}: missing column {name}")))
}

fn float(rec: &csv::StringRecord, c: usize, what: &str) -> CliResult<f64> {
    rec.get(c)
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| CliError::validation(format!("{what}: bad number in column {c}")))
}

fn estimate_panel(m: &Loaded) -> CliResult<String> {
    let what = "cate.csv";
    let (h, rows) = read_table(&m.artifact(what)?, what)?;
    let hat = column(&h, "tau_hat", what)?;
    let truth = column(&h, "tau_true", what)?;
    let tau_hat = rows.iter().map(|r| float(r, hat, what)).collect::<CliResult<Vec<_>>>()?;
    let has_truth = rows.iter().all(|r| r.get(truth).is_some_and(|v| !v.is_empty()));
    let tau = if has_truth && !rows.is_empty() {
        Some(rows.iter().map(|r| float(r, truth, what)).collect::<CliResult<Vec<_>>>()?)
    } else {
        None
    };
    Ok(cate_chart(&tau_hat, tau.as_deref()))
}

fn simulate_panel(m: &Loaded) -> CliResult<String> {
    let what = "results.csv";
    let (h, rows) = read_table(&m.artifact(what)?, what)?;
    let s = column(&h, "strategy", what)?;
    let b = column(&h, "abs_bias", what)?;
    let r = column(&h, "cate_rmse", what)?;
    let data = rows
        .iter()
        .map(|x| Ok((x.get(s).unwrap_or_default().to_string(), float(x, b, what)?, float(x, r, what)?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(bias_rmse_chart(&data))
}

pub fn run(cfg: &ReportConfig, out: &mut Outputs) -> CliResult<()> {
    if cfg.manifests.is_empty() {
        return Err(CliError::validation("no manifests given"));
    }
    let mut index = Vec::new();
    for (i, path) in cfg.manifests.iter().enumerate() {
        let path = if path.is_dir() { path.join(crate::output::MANIFEST_NAME) } else { path.clone() };
        out.input(&path)?;
        let m = Loaded { manifest: read_manifest(&path)?, path: path.clone() };
        // every listed artifact must be present and intact
        for a in &m.manifest.artifacts {
            load_artifact(&path, a)?;
        }
        let prefix = format!("m{i}_");
        let mut produced: Vec<String> = Vec::new();
        let mut emit = |name: String, bytes: Vec<u8>, out: &mut Outputs| {
            produced.push(name.clone());
            out.add(name, bytes);
        };
        match m.manifest.command.as_str() {
            "estimate" => {
                emit(format!("{prefix}cate_density.svg"), estimate_panel(&m)?.into_bytes(), out);
                emit(format!("{prefix}cate.csv"), m.artifact("cate.csv")?, out);
            }
            "simulate" => {
                emit(format!("{prefix}bias_rmse.svg"), simulate_panel(&m)?.into_bytes(), out);
                emit(format!("{prefix}results.csv"), m.artifact("results.csv")?, out);
            }
            "design" => {
                for name in ["accuracy.svg", "diagnostics.csv"] {
                    if m.manifest.artifacts.iter().any(|a| a.path == name) {
                        emit(format!("{prefix}{name}"), m.artifact(name)?, out);
                    }
                }
            }
            "score" | "probe" => {
                for a in &m.manifest.artifacts {
                    if a.path.ends_with(".svg") || a.path.ends_with(".csv") {
                        emit(format!("{prefix}{}", a.path), m.artifact(&a.path)?, out);
                    }
                }
            }
            other => {
                return Err(CliError::validation(format!(
                    "{}: cannot report on command {other}",
                    path.display()
                )))
            }
        }
        for name in produced {
            index.push(vec![i.to_string(), display(&path), m.manifest.command.clone(), name]);
        }
    }
    out.add("report.csv", csv_text(&["manifest_index", "manifest", "command", "artifact"], index)?);
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
