//! Raw signal files: little-endian interleaved `re, im` f64 pairs with a
//! JSON sidecar holding `dt`, `t0` and `length`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scene::ComplexSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub dt: f64,
    pub t0: f64,
    pub length: usize,
}

/// Sidecar path for a sample file: `x.bin` -> `x.json`.
pub fn sidecar_path(samples: &Path) -> PathBuf {
    samples.with_extension("json")
}

pub fn encode(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 16);
    for z in samples {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if !bytes.len().is_multiple_of(16) {
        return invalid(format!("sample file size {} is not a multiple of 16 bytes", bytes.len()));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
    Ok(bytes.chunks_exact(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect())
}

/// Writes `path` and its sidecar.
pub fn write_signal(path: &Path, series: &ComplexSeries) -> Result<()> {
    fs::write(path, encode(series.samples()))?;
    let meta = SignalMeta { dt: series.dt(), t0: series.t0(), length: series.len() };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_signal(path: &Path) -> Result<ComplexSeries> {
    let meta: SignalMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let samples = decode(&fs::read(path)?)?;
    if samples.len() != meta.length {
        return invalid(format!(
            "{}: sidecar says {} samples, file holds {}",
            path.display(),
            meta.length,
            samples.len()
        ));
    }
    ComplexSeries::new(samples, meta.dt, meta.t0)
}
