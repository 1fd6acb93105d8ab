//! MAE and normalized RMS error metrics with the pre-DA / DA / post-DA
//! windowing convention.

use crate::error::{Error, Result};
use crate::series::{format_float, TimeSeries};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// The three reporting windows, each of length t_err.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorWindows {
    pub t_err: f64,
    /// t_err before the assimilation starts.
    pub pre_da: (f64, f64),
    /// Last t_err of the assimilation.
    pub da: (f64, f64),
    /// t_err after the filter is removed.
    pub post_da: (f64, f64),
}

impl ErrorWindows {
    pub fn new(t_start_da: f64, t_stop_da: f64, t_err: f64) -> Self {
        Self {
            t_err,
            pre_da: (t_start_da - t_err, t_start_da),
            da: (t_stop_da - t_err, t_stop_da),
            post_da: (t_stop_da, t_stop_da + t_err),
        }
    }
}

/// Moving-average absolute error normalized by the per-channel maximum of
/// the truth over its full horizon:
/// (1/N_err) sum_k sum_q |w_q - z_q| / max(d_q^t).
pub fn mae(
    w: &TimeSeries,
    z: &TimeSeries,
    truth_for_norm: &TimeSeries,
    window: (f64, f64),
) -> Result<f64> {
    assert_eq!(w.n_channels(), z.n_channels());
    let (k0, k1) = w.window_indices(window.0, window.1)?;
    let (z0, _) = z.window_indices(window.0, window.1)?;
    let norm = truth_for_norm.max_per_channel();
    let n_err = k1 - k0;
    let mut acc = 0.0;
    for k in 0..n_err {
        for q in 0..w.n_channels() {
            acc += (w.data[(k0 + k, q)] - z.data[(z0 + k, q)]).abs() / norm[q];
        }
    }
    Ok(acc / n_err as f64)
}

/// Normalized root mean square error over a window:
/// sqrt( sum (w - z)^2 / sum w^2 ).
///
/// Returns NaN when the reference power is zero (undefined normalization).
pub fn rms(w: &TimeSeries, z: &TimeSeries, window: (f64, f64)) -> Result<f64> {
    assert_eq!(w.n_channels(), z.n_channels());
    let (k0, k1) = w.window_indices(window.0, window.1)?;
    let (z0, _) = z.window_indices(window.0, window.1)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..k1 - k0 {
        for q in 0..w.n_channels() {
            let wv = w.data[(k0 + k, q)];
            let zv = z.data[(z0 + k, q)];
            num += (wv - zv) * (wv - zv);
            den += wv * wv;
        }
    }
    if den == 0.0 {
        return Ok(f64::NAN);
    }
    Ok((num / den).sqrt())
}

/// One metrics row per run, in the named-window terminology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub l_sets: usize,
    pub gamma: f64,
    pub m: usize,
    pub biased_rms_pre: f64,
    pub biased_rms_da: f64,
    pub unbiased_rms_da: f64,
    pub biased_rms_post: f64,
    pub unbiased_rms_post: f64,
    pub true_biased_rms: f64,
    pub mae_biased_pre: f64,
    pub mae_biased_da: f64,
    pub mae_unbiased_da: f64,
    pub mae_biased_post: f64,
    pub mae_unbiased_post: f64,
}

impl MetricsSummary {
    pub const CSV_HEADER: [&'static str; 14] = [
        "L",
        "gamma",
        "m",
        "biased_rms_pre",
        "biased_rms_da",
        "unbiased_rms_da",
        "biased_rms_post",
        "unbiased_rms_post",
        "true_biased_rms",
        "mae_biased_pre",
        "mae_biased_da",
        "mae_unbiased_da",
        "mae_biased_post",
        "mae_unbiased_post",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.l_sets.to_string(),
            format_float(self.gamma),
            self.m.to_string(),
            format_float(self.biased_rms_pre),
            format_float(self.biased_rms_da),
            format_float(self.unbiased_rms_da),
            format_float(self.biased_rms_post),
            format_float(self.unbiased_rms_post),
            format_float(self.true_biased_rms),
            format_float(self.mae_biased_pre),
            format_float(self.mae_biased_da),
            format_float(self.mae_unbiased_da),
            format_float(self.mae_biased_post),
            format_float(self.mae_unbiased_post),
        ]
    }

    pub fn write_csv<W: Write>(rows: &[MetricsSummary], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for row in rows {
            w.write_record(row.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }
}
