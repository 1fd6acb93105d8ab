//! Ridge-regression training of the readout.

use super::sparse::SparseRowMatrix;
use super::{ReservoirConfig, TrainedEsn};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamId};
use crate::series::TimeSeries;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Fixed number of accumulation chunks, independent of the thread count, so
/// the summation order (and hence the bit pattern) never depends on --jobs.
const ACCUMULATION_CHUNKS: usize = 8;

/// Pooled per-channel normalization: g_q = 1 / (max_q - min_q) over all
/// datasets.
pub fn input_normalization(datasets: &[TimeSeries]) -> Result<DVector<f64>> {
    let n_q = datasets[0].n_channels();
    let mut min = vec![f64::INFINITY; n_q];
    let mut max = vec![f64::NEG_INFINITY; n_q];
    for series in datasets {
        for q in 0..n_q {
            for v in series.channel(q).iter() {
                min[q] = min[q].min(*v);
                max[q] = max[q].max(*v);
            }
        }
    }
    let mut g = DVector::zeros(n_q);
    for q in 0..n_q {
        let range = max[q] - min[q];
        if !(range > 0.0) {
            return Err(Error::TrainingFailure(format!(
                "training component {q} has zero range"
            )));
        }
        g[q] = 1.0 / range;
    }
    Ok(g)
}

/// Training inputs with the regularizing noise: each channel gets additive
/// Gaussian noise with standard deviation `config.input_noise` std(channel)
/// (0.03 by default).
///
/// Rows are samples, columns channels; the draw order is fixed
/// (sample-major) and the stream is derived from the config seed and the
/// dataset index.
pub fn noisy_inputs(series: &TimeSeries, config: &ReservoirConfig, dataset_index: u64) -> DMatrix<f64> {
    let n = series.len();
    let n_q = series.n_channels();
    let mut sigma = vec![0.0; n_q];
    for q in 0..n_q {
        let col = series.channel(q);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        sigma[q] = config.input_noise * var.sqrt();
    }
    let mut rng = stream(config.seed, StreamId::TrainingNoise(dataset_index));
    let mut noisy = series.data.clone();
    for k in 0..n {
        for q in 0..n_q {
            let z: f64 = rng.sample(StandardNormal);
            noisy[(k, q)] += sigma[q] * z;
        }
    }
    noisy
}

/// Open-loop reservoir trajectory of one dataset.
///
/// Column k holds [r(t_{k+1}); 1], the state reached after consuming the
/// noisy inputs b(t_0..t_k); the paired target column is the noise-free
/// b(t_{k+1}). The first reservoir sample (r = 0) is skipped.
pub(crate) struct Harvest {
    pub r_matrix: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

pub(crate) fn harvest_dataset(
    series: &TimeSeries,
    g: &DVector<f64>,
    w_in: &DMatrix<f64>,
    w: &SparseRowMatrix,
    config: &ReservoirConfig,
    dataset_index: u64,
) -> Harvest {
    let n = series.len();
    let n_q = series.n_channels();
    let n_r = config.n_reservoir;
    let inputs = noisy_inputs(series, config, dataset_index);
    let mut r_matrix = DMatrix::zeros(n_r + 1, n - 1);
    let mut targets = DMatrix::zeros(n_q, n - 1);
    let mut r = DVector::zeros(n_r);
    let mut z = DVector::zeros(n_r);
    let w_in1 = w_in.columns(0, n_q);
    let affine = w_in.column(n_q) * (config.sigma_in * config.delta_r);
    let mut scaled = DVector::zeros(n_q);
    for k in 0..n - 1 {
        for q in 0..n_q {
            scaled[q] = inputs[(k, q)] * g[q];
        }
        z.copy_from(&affine);
        z.gemv(config.sigma_in, &w_in1, &scaled, 1.0);
        w.mul_add_into(&mut z, config.rho, &r);
        for i in 0..n_r {
            r[i] = z[i].tanh();
        }
        r_matrix.view_mut((0, k), (n_r, 1)).copy_from(&r);
        r_matrix[(n_r, k)] = 1.0;
        for q in 0..n_q {
            targets[(q, k)] = series.data[(k + 1, q)];
        }
    }
    Harvest { r_matrix, targets }
}

/// Solve the ridge problem over all datasets:
/// (sum_l R_l R_l^T + lambda I) W_out^T = sum_l R_l B_l^T.
///
/// Accumulation runs over a fixed chunking of the dataset list, in index
/// order, so results are bit-reproducible under any thread count.
pub fn train(
    w_in: &DMatrix<f64>,
    w: &SparseRowMatrix,
    datasets: &[TimeSeries],
    config: &ReservoirConfig,
) -> Result<TrainedEsn> {
    if datasets.is_empty() {
        return Err(Error::InvalidDataset("no training datasets".into()));
    }
    let n_q = datasets[0].n_channels();
    config.validate(n_q)?;
    for (l, series) in datasets.iter().enumerate() {
        if series.len() < 2 {
            return Err(Error::InvalidDataset(format!("dataset {l} shorter than 2 samples")));
        }
        if series.n_channels() != n_q {
            return Err(Error::InvalidDataset(format!(
                "dataset {l} has {} channels, expected {n_q}",
                series.n_channels()
            )));
        }
    }
    let g = input_normalization(datasets)?;
    let n_r = config.n_reservoir;

    let chunk_bounds: Vec<(usize, usize)> = (0..ACCUMULATION_CHUNKS)
        .map(|c| {
            let lo = c * datasets.len() / ACCUMULATION_CHUNKS;
            let hi = (c + 1) * datasets.len() / ACCUMULATION_CHUNKS;
            (lo, hi)
        })
        .collect();

    let partials: Vec<(DMatrix<f64>, DMatrix<f64>)> = chunk_bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut g_acc = DMatrix::zeros(n_r + 1, n_r + 1);
            let mut h_acc = DMatrix::zeros(n_r + 1, n_q);
            for l in lo..hi {
                let harvest = harvest_dataset(&datasets[l], &g, w_in, w, config, l as u64);
                g_acc += &harvest.r_matrix * harvest.r_matrix.transpose();
                h_acc += &harvest.r_matrix * harvest.targets.transpose();
            }
            (g_acc, h_acc)
        })
        .collect();

    let mut gram = DMatrix::zeros(n_r + 1, n_r + 1);
    let mut rhs = DMatrix::zeros(n_r + 1, n_q);
    for (g_acc, h_acc) in partials {
        gram += g_acc;
        rhs += h_acc;
    }
    for i in 0..=n_r {
        gram[(i, i)] += config.lambda;
    }

    let chol = match nalgebra::Cholesky::new(gram.clone()) {
        Some(c) => c,
        None => {
            // semidefinite at roundoff (low-rank state manifold): one jitter
            // retry keeps the solve well-posed without touching lambda
            let jitter = 1e-12 * gram.trace() / (n_r + 1) as f64;
            for i in 0..=n_r {
                gram[(i, i)] += jitter;
            }
            nalgebra::Cholesky::new(gram)
                .ok_or_else(|| Error::TrainingFailure("singular normal matrix".into()))?
        }
    };
    let w_out_t = chol.solve(&rhs);
    let w_out = w_out_t.transpose();

    Ok(TrainedEsn { w_in: w_in.clone(), w: w.clone(), w_out, g, config: clone_config(config) })
}

fn clone_config(config: &ReservoirConfig) -> ReservoirConfig {
    config.clone()
}

/// Convenience: generate the reservoir from the config, then train on the
/// datasets.
pub fn generate_and_train(datasets: &[TimeSeries], config: &ReservoirConfig) -> Result<TrainedEsn> {
    let n_q = datasets
        .first()
        .ok_or_else(|| Error::InvalidDataset("no training datasets".into()))?
        .n_channels();
    let (w_in, w) = super::generate::generate_reservoir(config, n_q)?;
    train(&w_in, &w, datasets, config)
}
