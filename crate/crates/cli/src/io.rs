use std::fs;
use std::io::Write;
use std::path::Path;

use sieve_vrc::Dataset;

use crate::error::{CliError, Result};

/// Reads a CSV with header columns `y`, `x1` and `w1` (others ignored).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let bad = |message: String| CliError::BadData {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (iy, ix, iw) = (col("y")?, col("x1")?, col("w1")?);
    let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::BadRow {
            path: path.to_path_buf(),
            row: e.position().map_or(row, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::BadRow {
                    path: path.to_path_buf(),
                    row,
                    message: format!("column `{name}` is not a finite number: {raw:?}"),
                })
        };
        y.push(field(iy, "y")?);
        x.push(field(ix, "x1")?);
        w.push(field(iw, "w1")?);
    }
    if y.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(Dataset::from_columns(y, x, w)?)
}

pub fn write_dataset(data: &Dataset) -> Result<Vec<u8>> {
    let mut out = String::from("y,x1,w1\n");
    for j in 0..data.n() {
        out.push_str(&format!("{},{},{}\n", data.y[j], data.x[(j, 0)], data.w[(j, 0)]));
    }
    Ok(out.into_bytes())
}

pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|source| CliError::Write {
            path: "<stdout>".into(),
            source,
        }),
    }
}
