//! Uniformly sampled multichannel time series.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, DVectorView};
use std::io::Write;
use std::path::Path;

/// A multichannel signal on a uniform time grid.
///
/// Samples are rows, channels are columns. `t0` is the time of row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub data: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, data: DMatrix<f64>) -> Self {
        assert!(dt > 0.0, "sampling interval must be positive");
        Self { t0, dt, data }
    }

    /// Build a series by evaluating `f(sample_index) -> channel vector`.
    pub fn from_fn(
        t0: f64,
        dt: f64,
        n_samples: usize,
        n_channels: usize,
        mut f: impl FnMut(usize) -> DVector<f64>,
    ) -> Self {
        let mut data = DMatrix::zeros(n_samples, n_channels);
        for k in 0..n_samples {
            data.row_mut(k).tr_copy_from(&f(k));
        }
        Self { t0, dt, data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Nearest sample index for a time instant.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        assert!(k >= -0.5, "time {t} precedes series start {}", self.t0);
        (k as usize).min(self.len().saturating_sub(1))
    }

    /// Row `k` as a channel vector.
    pub fn sample(&self, k: usize) -> DVector<f64> {
        self.data.row(k).transpose()
    }

    pub fn channel(&self, q: usize) -> DVectorView<'_, f64> {
        self.data.column(q)
    }

    /// Half-open index window [start, end) covering times [t_start, t_end).
    pub fn window_indices(&self, t_start: f64, t_end: f64) -> Result<(usize, usize)> {
        if t_end <= t_start {
            return Err(Error::InvalidWindow(t_start, t_end));
        }
        let k0 = ((t_start - self.t0) / self.dt).round() as i64;
        let k1 = ((t_end - self.t0) / self.dt).round() as i64;
        if k0 < 0 || k1 as usize > self.len() || k0 >= k1 {
            return Err(Error::InvalidWindow(t_start, t_end));
        }
        Ok((k0 as usize, k1 as usize))
    }

    /// Sub-series on the given index window.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            t0: self.time_at(start),
            dt: self.dt,
            data: self.data.rows(start, end - start).into_owned(),
        }
    }

    /// Elementwise scaled copy.
    pub fn scaled(&self, factor: f64) -> TimeSeries {
        TimeSeries {
            t0: self.t0,
            dt: self.dt,
            data: &self.data * factor,
        }
    }

    /// Per-channel mean of |x|.
    pub fn mean_abs(&self) -> DVector<f64> {
        let n = self.len().max(1) as f64;
        DVector::from_iterator(
            self.n_channels(),
            (0..self.n_channels()).map(|q| self.data.column(q).iter().map(|v| v.abs()).sum::<f64>() / n),
        )
    }

    /// Per-channel maximum.
    pub fn max_per_channel(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_channels(),
            (0..self.n_channels())
                .map(|q| self.data.column(q).iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    }

    /// Write as CSV with columns `t, channel_0, ..., channel_{N-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n_channels()).map(|q| format!("channel_{q}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(1 + self.n_channels());
        for k in 0..self.len() {
            record.clear();
            record.push(format_float(self.time_at(k)));
            for q in 0..self.n_channels() {
                record.push(format_float(self.data[(k, q)]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read a CSV produced by [`TimeSeries::write_csv`].
    pub fn read_csv_file(path: &Path) -> Result<TimeSeries> {
        let mut r = csv::Reader::from_path(path)?;
        let n_channels = r.headers()?.len().saturating_sub(1);
        let mut times = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidDataset(format!("bad float {s:?}: {e}")))
            };
            times.push(parse(&rec[0])?);
            for q in 0..n_channels {
                rows.push(parse(&rec[1 + q])?);
            }
        }
        if times.len() < 2 {
            return Err(Error::InvalidDataset("need at least two samples".into()));
        }
        let dt = times[1] - times[0];
        let data = DMatrix::from_row_slice(times.len(), n_channels, &rows);
        Ok(TimeSeries::new(times[0], dt, data))
    }
}

/// Shortest round-trip float formatting (used by every CSV writer here).
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_like(v);
    if buf.is_empty() {
        buf.push('0');
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 is the shortest representation that round-trips.
    format!("{v}")
}
