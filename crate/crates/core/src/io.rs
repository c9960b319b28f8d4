//! On-disk formats: a small binary matrix container, metric CSVs and the run
//! manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::simulation::SolverFailure;

/// Magic bytes of the matrix container: `MTX1`, then rows and columns as
/// little-endian `u64`, then row-major little-endian `f64`.
pub const MATRIX_MAGIC: &[u8; 4] = b"MTX1";

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MATRIX_MAGIC)?;
    put(&(m.nrows() as u64).to_le_bytes())?;
    put(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 20];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..4] != MATRIX_MAGIC {
        return Err(Error::Format(format!("{}: not a matrix file", path.display())));
    }
    let rows = u64::from_le_bytes(header[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::Format(format!("{}: shape {rows}x{cols} overflows", path.display())))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} payload bytes for {rows}x{cols}, found {}",
            path.display(),
            len * 8,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    write_csv(path, records)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    read_csv(path)
}

pub fn write_failures(path: impl AsRef<Path>, failures: &[SolverFailure]) -> Result<()> {
    write_csv(path, failures)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of the canonical (compact) JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub command: String,
    pub n_records: usize,
    pub n_failures: usize,
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64) -> Result<Self> {
        Ok(Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash(config)?,
            command: command.to_string(),
            n_records: 0,
            n_failures: 0,
        })
    }
}
