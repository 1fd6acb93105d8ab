//! Trained-network serialization.
//!
//! Structured-text (JSON) file with a format-version field; sparse matrices
//! in triplet form, the readout dense row-major. Floats round-trip exactly.

use super::sparse::SparseRowMatrix;
use super::{ReservoirConfig, TrainedEsn};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct DenseRowMajor {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EsnFile {
    format_version: u32,
    config: ReservoirConfig,
    g: Vec<f64>,
    w_in: Triplets,
    w: Triplets,
    w_out: DenseRowMajor,
}

fn dense_to_triplets(m: &DMatrix<f64>) -> Triplets {
    let mut entries = Vec::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(r, c)] != 0.0 {
                entries.push((r, c, m[(r, c)]));
            }
        }
    }
    Triplets { nrows: m.nrows(), ncols: m.ncols(), entries }
}

pub fn save_esn(esn: &TrainedEsn, path: &Path) -> Result<()> {
    let file = EsnFile {
        format_version: FORMAT_VERSION,
        config: esn.config.clone(),
        g: esn.g.iter().copied().collect(),
        w_in: dense_to_triplets(&esn.w_in),
        w: Triplets {
            nrows: esn.w.nrows,
            ncols: esn.w.ncols,
            entries: esn.w.triplets(),
        },
        w_out: DenseRowMajor {
            nrows: esn.w_out.nrows(),
            ncols: esn.w_out.ncols(),
            data: esn
                .w_out
                .row_iter()
                .flat_map(|row| row.iter().copied().collect::<Vec<_>>())
                .collect(),
        },
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::NetworkFormat(format!("serialize: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_esn(path: &Path) -> Result<TrainedEsn> {
    let text = std::fs::read_to_string(path)?;
    let file: EsnFile =
        serde_json::from_str(&text).map_err(|e| Error::NetworkFormat(format!("parse: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::NetworkFormat(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let n_r = file.config.n_reservoir;
    let n_q = file.g.len();
    if file.w_in.nrows != n_r || file.w_in.ncols != n_q + 1 {
        return Err(Error::NetworkFormat("input matrix dimensions inconsistent".into()));
    }
    if file.w.nrows != n_r || file.w.ncols != n_r {
        return Err(Error::NetworkFormat("reservoir matrix dimensions inconsistent".into()));
    }
    if file.w_out.nrows != n_q || file.w_out.ncols != n_r + 1 {
        return Err(Error::NetworkFormat("readout dimensions inconsistent".into()));
    }
    let mut w_in = DMatrix::zeros(n_r, n_q + 1);
    for &(r, c, v) in &file.w_in.entries {
        if r >= n_r || c > n_q {
            return Err(Error::NetworkFormat("input matrix entry out of bounds".into()));
        }
        w_in[(r, c)] = v;
    }
    let w = SparseRowMatrix::from_triplets(n_r, n_r, &file.w.entries);
    let w_out = DMatrix::from_row_slice(n_q, n_r + 1, &file.w_out.data);
    Ok(TrainedEsn {
        w_in,
        w,
        w_out,
        g: DVector::from_vec(file.g),
        config: file.config,
    })
}
