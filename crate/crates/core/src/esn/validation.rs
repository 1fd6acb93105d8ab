//! Recycle-validation hyperparameter selection.
//!
//! For every grid candidate the readout is trained once; the closed-loop
//! mean-square prediction error is then measured on folds recycled from the
//! training span (reservoir states harvested in open loop, prediction run in
//! closed loop with the trained readout held fixed).

use super::sparse::SparseRowMatrix;
use super::train::{harvest_dataset, input_normalization, train};
use super::{ReservoirConfig, ReservoirState, TrainedEsn};
use crate::error::{Error, Result};
use crate::series::TimeSeries;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Candidate values for (sigma_in, rho), iterated in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub sigma_in: Vec<f64>,
    pub rho: Vec<f64>,
}

impl HyperGrid {
    /// Logarithmically spaced sigma_in, linearly spaced rho.
    pub fn log_sigma_linear_rho(sigma_range: (f64, f64), rho_range: (f64, f64), n: usize) -> Self {
        assert!(n >= 1 && sigma_range.0 > 0.0);
        let sigma_in = if n == 1 {
            vec![sigma_range.0]
        } else {
            (0..n)
                .map(|i| {
                    let f = i as f64 / (n - 1) as f64;
                    (sigma_range.0.ln() + f * (sigma_range.1.ln() - sigma_range.0.ln())).exp()
                })
                .collect()
        };
        let rho = if n == 1 {
            vec![rho_range.0]
        } else {
            (0..n)
                .map(|i| rho_range.0 + i as f64 / (n - 1) as f64 * (rho_range.1 - rho_range.0))
                .collect()
        };
        Self { sigma_in, rho }
    }

    pub fn singleton(sigma_in: f64, rho: f64) -> Self {
        Self { sigma_in: vec![sigma_in], rho: vec![rho] }
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_in.is_empty() || self.rho.is_empty()
    }
}

/// Result of the grid search: the winning candidate, its trained network,
/// and the error of every evaluated candidate.
#[derive(Debug, Clone)]
pub struct RvOutcome {
    pub sigma_in: f64,
    pub rho: f64,
    pub mse: f64,
    pub esn: TrainedEsn,
    pub evaluations: Vec<(f64, f64, f64)>,
}

/// Disjoint fold start indices (target-index space), evenly spaced over the
/// usable training span after an initial synchronization margin.
fn fold_starts(n_samples: usize, n_val: usize, n_folds: usize) -> Result<Vec<usize>> {
    let margin = n_val;
    let last_target = n_samples - 1;
    if last_target < n_val + margin {
        return Err(Error::InvalidDataset("dataset too short for validation folds".into()));
    }
    let last_start = last_target - n_val;
    if n_folds == 1 {
        return Ok(vec![margin]);
    }
    let spacing = (last_start - margin) as f64 / (n_folds - 1) as f64;
    if spacing < n_val as f64 {
        return Err(Error::InvalidDataset(
            "dataset too short for disjoint validation folds".into(),
        ));
    }
    Ok((0..n_folds)
        .map(|i| margin + (i as f64 * spacing).round() as usize)
        .collect())
}

/// Closed-loop mean-square prediction error over recycled folds.
pub fn closed_loop_mse(
    esn: &TrainedEsn,
    w_in: &DMatrix<f64>,
    w: &SparseRowMatrix,
    datasets: &[TimeSeries],
    n_folds: usize,
    t_val: f64,
) -> Result<f64> {
    let n_val = (t_val / esn.config.dt_esn).round() as usize;
    if n_val == 0 {
        return Err(Error::InvalidDataset("t_val shorter than one network step".into()));
    }
    let n_q = esn.n_q();
    let per_dataset: Vec<Result<(f64, usize)>> = datasets
        .par_iter()
        .enumerate()
        .map(|(l, series)| {
            let harvest = harvest_dataset(series, &esn.g, w_in, w, &esn.config, l as u64);
            let starts = fold_starts(series.len(), n_val, n_folds)?;
            let mut sq_sum = 0.0;
            let mut count = 0usize;
            for &s in &starts {
                let r = harvest.r_matrix.view((0, s - 1), (esn.n_reservoir(), 1)).into_owned();
                let mut state = ReservoirState {
                    r: DVector::from_column_slice(r.as_slice()),
                    last_output: Some(series.sample(s)),
                };
                for j in 1..=n_val {
                    let (next, out) = esn.step_closed_loop(&state)?;
                    state = next;
                    let truth = series.sample(s + j);
                    sq_sum += (out - truth).norm_squared();
                    count += n_q;
                }
            }
            Ok((sq_sum, count))
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for item in per_dataset {
        let (s, c) = item?;
        total += s;
        count += c;
    }
    Ok(total / count as f64)
}

/// Grid search: train each candidate once, score it in closed loop over the
/// recycled folds, return the argmin (ties break toward smaller sigma_in,
/// then smaller rho).
pub fn recycle_validation(
    w_in: &DMatrix<f64>,
    w: &SparseRowMatrix,
    datasets: &[TimeSeries],
    grid: &HyperGrid,
    n_folds: usize,
    t_val: f64,
    base_config: &ReservoirConfig,
) -> Result<RvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidHyperGrid);
    }
    // fail fast on degenerate data before the expensive loop
    input_normalization(datasets)?;
    let mut best: Option<RvOutcome> = None;
    let mut evaluations = Vec::with_capacity(grid.sigma_in.len() * grid.rho.len());
    for &sigma_in in &grid.sigma_in {
        for &rho in &grid.rho {
            let mut config = base_config.clone();
            config.sigma_in = sigma_in;
            config.rho = rho;
            let esn = train(w_in, w, datasets, &config)?;
            let mse = closed_loop_mse(&esn, w_in, w, datasets, n_folds, t_val)?;
            evaluations.push((sigma_in, rho, mse));
            let better = best.as_ref().map_or(true, |b| mse < b.mse);
            if better {
                best = Some(RvOutcome { sigma_in, rho, mse, esn, evaluations: Vec::new() });
            }
        }
    }
    let mut outcome = best.expect("non-empty grid");
    outcome.evaluations = evaluations;
    Ok(outcome)
}
