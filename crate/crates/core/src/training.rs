//! Multi-parameter training-set generation with data augmentation.
//!
//! L forecasts are launched from uniform draws around the initial guess;
//! their innovations against the observations become the bias training
//! series, augmented with scaled copies so the network can also represent
//! small-amplitude biases.

use crate::error::{Error, Result};
use crate::models::{ForecastModel, Integrator};
use crate::rng::{stream, Rng, StreamId};
use crate::series::TimeSeries;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sign convention of the two augmentation copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// Factors (-0.1, 0.01), following the training algorithm listing.
    #[default]
    Signed,
    /// Factors (0.1, 0.01), the plain-amplitude variant.
    Unsigned,
}

impl Augmentation {
    pub fn factors(self) -> [f64; 2] {
        match self {
            Augmentation::Signed => [-0.1, 0.01],
            Augmentation::Unsigned => [0.1, 0.01],
        }
    }
}

/// Configuration of the multi-parameter training-set generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Number of original training series L.
    pub l_sets: usize,
    /// Half-width of the uniform draw around the initial guess.
    pub sigma_l: f64,
    /// Training window length (s).
    pub t_train: f64,
    /// Sampling interval of the bias series (s).
    pub dt_esn: f64,
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_sets < 1 {
            return Err(Error::InvalidDataset("l_sets must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.sigma_l) {
            return Err(Error::InvalidDataset(format!(
                "sigma_l = {} outside [0, 1)",
                self.sigma_l
            )));
        }
        if self.t_train / self.dt_esn < 2.0 {
            return Err(Error::InvalidDataset("t_train shorter than two network steps".into()));
        }
        Ok(())
    }
}

/// The 3L bias series plus the parameter draws behind the originals.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Order: L originals, then the two scaled-copy blocks.
    pub series: Vec<TimeSeries>,
    /// (phi, alpha) draw behind each original series.
    pub draws: Vec<(DVector<f64>, DVector<f64>)>,
}

fn uniform_around(c: f64, sigma: f64, rng: &mut Rng) -> f64 {
    let (a, b) = (c * (1.0 - sigma), c * (1.0 + sigma));
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Generate the 3L training series (Algorithm: draw, forecast, subtract,
/// augment).
///
/// `observations` must cover [0, t_train] and its sampling interval must
/// divide dt_esn; `model_dt` is the forecast integration step.
pub fn build_training_set(
    model: &dyn ForecastModel,
    phi0: &DVector<f64>,
    alpha0: &DVector<f64>,
    observations: &TimeSeries,
    model_dt: f64,
    config: &TrainingConfig,
) -> Result<TrainingSet> {
    config.validate()?;
    let obs_stride = (config.dt_esn / observations.dt).round() as usize;
    if obs_stride == 0 || (config.dt_esn - obs_stride as f64 * observations.dt).abs() > 1e-9 * config.dt_esn {
        return Err(Error::InvalidDataset(
            "observation sampling does not divide dt_esn".into(),
        ));
    }
    let esn_steps_per = (config.dt_esn / model_dt).round() as usize;
    if esn_steps_per == 0 || (config.dt_esn - esn_steps_per as f64 * model_dt).abs() > 1e-9 * config.dt_esn {
        return Err(Error::InvalidDataset("model_dt does not divide dt_esn".into()));
    }
    let n_tr = (config.t_train / config.dt_esn).floor() as usize;
    if observations.len() < (n_tr - 1) * obs_stride + 1 {
        return Err(Error::InvalidDataset(format!(
            "observations cover {} samples, need {}",
            observations.len(),
            (n_tr - 1) * obs_stride + 1
        )));
    }
    let n_q = model.n_obs();

    let originals: Vec<Result<(TimeSeries, (DVector<f64>, DVector<f64>))>> = (0..config.l_sets)
        .into_par_iter()
        .map(|l| {
            let mut rng = stream(config.seed, StreamId::TrainingDraw(l as u64));
            let mut attempts = 0;
            loop {
                let phi_draw = DVector::from_iterator(
                    phi0.len(),
                    phi0.iter().map(|&c| uniform_around(c, config.sigma_l, &mut rng)),
                );
                let alpha_draw = DVector::from_iterator(
                    alpha0.len(),
                    alpha0.iter().map(|&c| uniform_around(c, config.sigma_l, &mut rng)),
                );
                match forecast_bias(
                    model,
                    &phi_draw,
                    &alpha_draw,
                    observations,
                    obs_stride,
                    esn_steps_per,
                    model_dt,
                    n_tr,
                    n_q,
                    config.dt_esn,
                ) {
                    Ok(series) => return Ok((series, (phi_draw, alpha_draw))),
                    Err(_) if attempts < 10 => {
                        attempts += 1;
                        continue;
                    }
                    Err(e) => {
                        return Err(Error::InvalidDataset(format!(
                            "training draw {l} failed after {attempts} retries: {e}"
                        )))
                    }
                }
            }
        })
        .collect();

    let mut series = Vec::with_capacity(3 * config.l_sets);
    let mut draws = Vec::with_capacity(config.l_sets);
    for item in originals {
        let (s, d) = item?;
        series.push(s);
        draws.push(d);
    }
    for factor in config.augmentation.factors() {
        for l in 0..config.l_sets {
            series.push(series[l].scaled(factor));
        }
    }
    Ok(TrainingSet { series, draws })
}

#[allow(clippy::too_many_arguments)]
fn forecast_bias(
    model: &dyn ForecastModel,
    phi0: &DVector<f64>,
    alpha: &DVector<f64>,
    observations: &TimeSeries,
    obs_stride: usize,
    esn_steps_per: usize,
    model_dt: f64,
    n_tr: usize,
    n_q: usize,
    dt_esn: f64,
) -> Result<TimeSeries> {
    let mut integ = Integrator::new(model, model_dt);
    let mut phi = phi0.clone();
    model.project(&mut phi);
    let mut data = DMatrix::zeros(n_tr, n_q);
    for k in 0..n_tr {
        let predicted = model.observe(&phi);
        let observed = observations.sample(k * obs_stride);
        data.row_mut(k).tr_copy_from(&(observed - predicted));
        if k + 1 < n_tr {
            integ.advance(&mut phi, alpha, esn_steps_per)?;
        }
    }
    Ok(TimeSeries::new(0.0, dt_esn, data))
}
