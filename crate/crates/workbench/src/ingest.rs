//! Empirical demand or generation distributions from measured profiles.

use std::io::Read;
use std::path::Path;

use smartleak_core::Pmf;

use crate::error::{Result, WorkbenchError};

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub pmf: Pmf,
    /// Fraction of samples that fell above the top bin.
    pub clipped_mass: f64,
    pub samples: usize,
}

/// Bins the first column of a CSV at `quantum` with `floor(v / quantum + 0.5)`,
/// clipping to `alphabet_size - 1`. A non-numeric first row is taken as a
/// header.
pub fn ingest_profile(path: &Path, quantum: f64, alphabet_size: usize) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| WorkbenchError::Input(format!("{}: {e}", path.display())))?;
    ingest_reader(file, quantum, alphabet_size)
}

pub fn ingest_reader(reader: impl Read, quantum: f64, alphabet_size: usize) -> Result<Ingested> {
    if !(quantum > 0.0) || !quantum.is_finite() {
        return Err(WorkbenchError::Config(format!("quantum {quantum} must be positive")));
    }
    if alphabet_size == 0 {
        return Err(WorkbenchError::Config("alphabet size must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut counts = vec![0usize; alphabet_size];
    let (mut samples, mut clipped) = (0usize, 0usize);
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let field = record.get(0).unwrap_or("");
        if field.is_empty() {
            continue;
        }
        let value: f64 = match field.parse() {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(WorkbenchError::Input(format!("row {}: {field:?} is not a number", i + 1))),
        };
        if !value.is_finite() || value < 0.0 {
            return Err(WorkbenchError::Input(format!("row {}: invalid energy value {value}", i + 1)));
        }
        let bin = (value / quantum + 0.5).floor();
        let bin = if bin > (alphabet_size - 1) as f64 {
            clipped += 1;
            alphabet_size - 1
        } else {
            bin as usize
        };
        counts[bin] += 1;
        samples += 1;
    }
    if samples == 0 {
        return Err(WorkbenchError::Input("no samples".into()));
    }
    if clipped == samples && alphabet_size > 1 {
        return Err(WorkbenchError::Input("every sample exceeds the alphabet".into()));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(Ingested {
        pmf: Pmf::from_weights(&weights)?,
        clipped_mass: clipped as f64 / samples as f64,
        samples,
    })
}
