pub mod design;
pub mod estimate;
pub mod probe;
pub mod report;
pub mod score;
pub mod simulate;

use std::path::Path;

use crate::error::{CliError, CliResult};

/// File-name-safe rendering of a feature id.
pub fn slug(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if out.is_empty() {
        "feature".into()
    } else {
        out
    }
}

pub fn require_path<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::validation(format!("missing required key: {key}")))
}

/// Legend name for a residualization strategy.
pub fn display_strategy(s: &str) -> &str {
    match s {
        "none" | "raw" => "raw",
        "dim_by_dim" => "residualized",
        other => other,
    }
}
