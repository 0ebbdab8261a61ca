//! Matrix, corpus and activation-dataset files.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{ActivationDataset, FeatureMeta, Matrix, SteeredRecord};
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"LTMAT01\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv { header: bool },
    Binary,
}

impl MatrixFormat {
    /// Binary for `.bin`/`.ltmat`, headerless CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("ltmat") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv { header: false },
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match format {
        MatrixFormat::Binary => decode_binary(&bytes),
        MatrixFormat::Csv { header } => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::parse(path.display().to_string(), "not valid UTF-8"))?;
            parse_csv(&text, header)
        }
    }
}

pub fn save_matrix(path: &Path, matrix: &Matrix, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Binary => encode_binary(matrix),
        MatrixFormat::Csv { .. } => format_csv(matrix, None).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Parse a numeric CSV. Row numbers in errors are 1-based data rows.
pub fn parse_csv(text: &str, header: bool) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if header {
        lines.next();
    }
    for (r, line) in lines.enumerate() {
        let row_no = r + 1;
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(
                    format!("row {row_no}, column {}", c + 1),
                    format!("not a number: {:?}", cell.trim()),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("row {row_no}, column {}", c + 1),
                    "non-finite value",
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("row {row_no}"),
                    format!("ragged row {row_no}"),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse("file", "no rows"));
    }
    let ncols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// 17 significant digits so that parsing recovers the exact value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_csv(matrix: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| fmt_f64(matrix[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn encode_binary(matrix: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * matrix.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            out.extend_from_slice(&matrix[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 24 || &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::parse("header", "missing LTMAT01 magic"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::parse("header", "dimension overflow"))?;
    if bytes.len() - 24 != expected {
        return Err(Error::parse(
            "body",
            format!("expected {expected} payload bytes, found {}", bytes.len() - 24),
        ));
    }
    if rows == 0 {
        return Err(Error::parse("header", "no rows"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[24..].chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            let k = data.len();
            return Err(Error::parse(
                format!("row {}, column {}", k / cols.max(1) + 1, k % cols.max(1) + 1),
                "non-finite value",
            ));
        }
        data.push(v);
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    base_id: String,
    feature_id: String,
    alpha: f64,
    intensity: f64,
    coherence: i64,
    #[serde(default)]
    valid: Option<bool>,
    embedding: Vec<f64>,
}

/// Parse one JSONL line; `line_no` is 1-based.
pub fn parse_steered_line(line: &str, line_no: usize) -> Result<SteeredRecord> {
    let raw: RawRecord = serde_json::from_str(line)
        .map_err(|e| Error::parse(format!("line {line_no}"), e.to_string()))?;
    if !(0..=3).contains(&raw.coherence) {
        return Err(Error::parse(format!("line {line_no}"), "coherence out of range"));
    }
    let coherence = raw.coherence as u8;
    let record = SteeredRecord {
        base_id: raw.base_id,
        feature_id: raw.feature_id,
        alpha: raw.alpha,
        intensity: raw.intensity,
        coherence,
        valid: raw.valid.unwrap_or(coherence >= 1),
        embedding: raw.embedding,
    };
    record
        .validate()
        .map_err(|e| Error::parse(format!("line {line_no}"), e.to_string()))?;
    Ok(record)
}

pub fn load_steered_corpus(path: &Path) -> Result<Vec<SteeredRecord>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_steered_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn format_steered_corpus(records: &[SteeredRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSidecar {
    pub labels: Vec<u8>,
    pub features: Vec<FeatureMeta>,
}

pub fn load_activation_dataset(
    matrix_path: &Path,
    format: MatrixFormat,
    sidecar_path: &Path,
) -> Result<ActivationDataset> {
    let activations = load_matrix(matrix_path, format)?;
    let text = fs::read_to_string(sidecar_path).map_err(|e| io_err(sidecar_path, e))?;
    let sidecar: ActivationSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::parse(sidecar_path.display().to_string(), e.to_string()))?;
    ActivationDataset::new(activations, sidecar.labels, sidecar.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_two_by_two() {
        let m = parse_csv("1,2\n3,4", false).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn csv_header_is_skipped() {
        let m = parse_csv("a,b\n1,2\n", true).unwrap();
        assert_eq!(m.nrows(), 1);
    }

    #[test]
    fn csv_empty_is_error() {
        let e = parse_csv("", false).unwrap_err().to_string();
        assert!(e.contains("no rows"), "{e}");
    }

    #[test]
    fn csv_ragged_is_error() {
        let e = parse_csv("1,2\n1", false).unwrap_err().to_string();
        assert!(e.contains("ragged row 2"), "{e}");
    }

    #[test]
    fn csv_bad_cell_names_location() {
        let e = parse_csv("1,2\n3,x", false).unwrap_err().to_string();
        assert!(e.contains("row 2, column 2"), "{e}");
        assert!(parse_csv("1,NaN", false).is_err());
        assert!(parse_csv("1,inf", false).is_err());
    }

    #[test]
    fn binary_rejects_bad_magic_and_nan() {
        assert!(decode_binary(b"NOPE0000").is_err());
        let mut bytes = encode_binary(&Matrix::from_row_slice(1, 2, &[1.0, 2.0]));
        bytes[32..40].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_binary(&bytes).is_err());
    }

    #[test]
    fn jsonl_valid_defaults_from_coherence() {
        let r = parse_steered_line(
            r#"{"base_id":"b1","feature_id":"f","alpha":0.5,"intensity":0.05,"coherence":3,"embedding":[1,2]}"#,
            1,
        )
        .unwrap();
        assert!(r.valid);
        let r = parse_steered_line(
            r#"{"base_id":"b1","feature_id":"f","alpha":0.5,"intensity":0.05,"coherence":0,"embedding":[1,2]}"#,
            1,
        )
        .unwrap();
        assert!(!r.valid);
        let r = parse_steered_line(
            r#"{"base_id":"b1","feature_id":"f","alpha":0.5,"intensity":0.05,"coherence":0,"valid":true,"embedding":[]}"#,
            1,
        )
        .unwrap();
        assert!(r.valid);
    }

    #[test]
    fn jsonl_errors_name_line_and_field() {
        let e = parse_steered_line(
            r#"{"base_id":"b1","feature_id":"f","alpha":0.5,"coherence":3,"embedding":[1]}"#,
            7,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("line 7") && e.contains("intensity"), "{e}");
        let e = parse_steered_line(
            r#"{"base_id":"b1","feature_id":"f","alpha":0.5,"intensity":0.1,"coherence":5,"embedding":[1]}"#,
            2,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("coherence out of range"), "{e}");
    }

    #[test]
    fn empty_corpus_is_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_steered_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn activation_dataset_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("a.csv");
        let s = dir.path().join("a.json");
        std::fs::write(&m, "0,1\n2,0\n").unwrap();
        std::fs::write(
            &s,
            r#"{"labels":[0,1],"features":[{"id":"10","layer":9,"description":"x"},{"id":"11","layer":9,"description":"y"}]}"#,
        )
        .unwrap();
        let d = load_activation_dataset(&m, MatrixFormat::Csv { header: false }, &s).unwrap();
        assert_eq!(d.n_docs(), 2);
        assert_eq!(d.column_of("11"), Some(1));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e300..1e300f64, -1.0..1.0f64, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)]
    }

    proptest! {
        #[test]
        fn matrix_round_trips(rows in 1usize..6, cols in 1usize..6, seed in proptest::collection::vec(finite(), 36)) {
            let m = Matrix::from_fn(rows, cols, |i, j| seed[i * 6 + j]);
            prop_assert_eq!(decode_binary(&encode_binary(&m)).unwrap(), m.clone());
            let back = parse_csv(&format_csv(&m, None), false).unwrap();
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
