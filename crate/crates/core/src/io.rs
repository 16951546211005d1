//! CSV datasets and JSON documents on disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::EnvironmentData;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Parses a comma-separated table with a mandatory header row.
///
/// `source` names the input in error messages.
pub fn read_environment<R: Read>(reader: R, env_id: usize, source: &str) -> Result<EnvironmentData<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Input(format!("{source}: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Input(format!("{source}: empty file or missing header row")));
    }
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::Input(format!(
            "{source}: first line is numeric; a header row with column names is required"
        )));
    }
    if let Some(j) = header.iter().position(|h| h.is_empty()) {
        return Err(Error::Input(format!("{source}: column {} has an empty name", j + 1)));
    }
    let d = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Input(format!("{source}: line {line}: {e}")))?;
        if rec.len() != d {
            return Err(Error::Input(format!(
                "{source}: line {line} has {} fields, header has {d}",
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Input(format!(
                    "{source}: line {line}, column '{}': cannot parse '{field}' as a number",
                    header[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "{source}: line {line}, column '{}': non-finite value '{field}'",
                    header[j]
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Input(format!("{source}: no data rows")));
    }
    EnvironmentData::new(Matrix::from_vec(rows, d, values)?, env_id)?.with_names(header)
}

pub fn read_environment_csv(path: &Path, env_id: usize) -> Result<EnvironmentData<f64>> {
    let file = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_environment(BufReader::new(file), env_id, &path.display().to_string())
}

/// Writes values with the shortest representation that parses back exactly.
pub fn write_environment<W: Write>(data: &EnvironmentData<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(data.names())?;
    let mut buf = Vec::with_capacity(data.num_vars());
    for row in data.values.rows_iter() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_environment_csv(data: &EnvironmentData<f64>, path: &Path) -> Result<()> {
    write_environment(data, BufWriter::new(File::create(path)?))
}

/// Environments must agree on column names, in order.
pub fn check_same_columns(datasets: &[EnvironmentData<f64>]) -> Result<Vec<String>> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InvalidParameter("no datasets".into()))?
        .names();
    for e in &datasets[1..] {
        let names = e.names();
        if names != first {
            return Err(Error::DimensionMismatch(format!(
                "environment {} has columns [{}], expected [{}]",
                e.env_id,
                names.join(","),
                first.join(",")
            )));
        }
    }
    Ok(first)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let file = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}
