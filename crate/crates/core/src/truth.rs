//! Twin-experiment ground truth: true trajectories, prescribed bias forms,
//! observation noise (Gaussian and colored), and SNR computation.

use crate::error::{Error, Result};
use crate::models::{ForecastModel, Integrator};
use crate::rng::{stream, StreamId};
use crate::series::TimeSeries;
use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Prescribed bias forms of the twin experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    None,
    /// d = eta + cos(eta): the oscillator twin.
    VdpCosine,
    /// b = a1 p + a2 max(p(x_h)): calibration-offset twin.
    Linear,
    /// b = a3 max(p(x_h)) cos(a4 p / max(p(x_h))).
    NonlinearPeriodic,
    /// b = a5 p sin^2(a6 pi t): quasi-periodic twin.
    TimeDependent,
}

/// Bias form plus its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    /// End of the window over which max(p(x_h)) is taken (defaults to the
    /// full horizon; experiments use the pre-assimilation window).
    pub t_max_ref: Option<f64>,
}

impl BiasSpec {
    pub fn new(kind: BiasKind) -> Self {
        Self { kind, a1: 0.3, a2: 0.1, a3: 0.2, a4: 2.0, a5: 0.4, a6: 2.0, t_max_ref: None }
    }
}

/// Observation-noise color and strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub color: NoiseColor,
    /// Fraction of the per-channel mean absolute true amplitude.
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    GaussianWhite,
    White,
    Pink,
    Brown,
}

/// True trajectory with its observables, bias, and biased observables.
#[derive(Debug, Clone)]
pub struct Truth {
    /// State at every sample of the time grid.
    pub states: Vec<DVector<f64>>,
    /// M psi^t.
    pub observables: TimeSeries,
    /// b^t.
    pub bias: TimeSeries,
    /// d^t = M psi^t + b^t.
    pub biased: TimeSeries,
}

/// Integrate the true model and apply the prescribed bias.
///
/// The state is integrated from `initial_state` for `transient` seconds
/// (discarded), then recorded on [0, t_end] at `dt`.
pub fn generate_truth(
    model: &dyn ForecastModel,
    true_alpha: &DVector<f64>,
    bias_spec: &BiasSpec,
    t_end: f64,
    dt: f64,
    transient: f64,
    initial_state: &DVector<f64>,
) -> Result<Truth> {
    let bounds = model.param_bounds();
    for (a, (lo, hi)) in true_alpha.iter().zip(&bounds) {
        if a < lo || a > hi {
            return Err(Error::TruthGenerationFailure(format!(
                "true parameter {a} outside physical bounds [{lo}, {hi}]"
            )));
        }
    }
    let mut integ = Integrator::new(model, dt);
    let mut phi = initial_state.clone();
    model.project(&mut phi);
    let n_transient = (transient / dt).round() as usize;
    integ
        .advance(&mut phi, true_alpha, n_transient)
        .map_err(|e| Error::TruthGenerationFailure(format!("transient: {e}")))?;

    let n = (t_end / dt).round() as usize + 1;
    let n_q = model.n_obs();
    let mut states = Vec::with_capacity(n);
    let mut observables = nalgebra::DMatrix::zeros(n, n_q);
    for k in 0..n {
        states.push(phi.clone());
        observables.row_mut(k).tr_copy_from(&model.observe(&phi));
        if k + 1 < n {
            integ
                .step(&mut phi, true_alpha)
                .map_err(|e| Error::TruthGenerationFailure(format!("t = {}: {e}", k as f64 * dt)))?;
        }
    }
    let observables = TimeSeries::new(0.0, dt, observables);

    // reference maximum of the first channel (the heat-source sensor)
    let ref_end = bias_spec.t_max_ref.unwrap_or(t_end);
    let ref_idx = observables.index_at(ref_end);
    let p_max = (0..=ref_idx)
        .map(|k| observables.data[(k, 0)])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut bias = nalgebra::DMatrix::zeros(n, n_q);
    for k in 0..n {
        let t = k as f64 * dt;
        for q in 0..n_q {
            let p = observables.data[(k, q)];
            bias[(k, q)] = match bias_spec.kind {
                BiasKind::None => 0.0,
                BiasKind::VdpCosine => p.cos(),
                BiasKind::Linear => bias_spec.a1 * p + bias_spec.a2 * p_max,
                BiasKind::NonlinearPeriodic => {
                    bias_spec.a3 * p_max * (bias_spec.a4 * p / p_max).cos()
                }
                BiasKind::TimeDependent => {
                    bias_spec.a5 * p * (bias_spec.a6 * std::f64::consts::PI * t).sin().powi(2)
                }
            };
        }
    }
    let bias = TimeSeries::new(0.0, dt, bias);
    let biased = TimeSeries::new(0.0, dt, &observables.data + &bias.data);
    Ok(Truth { states, observables, bias, biased })
}

/// Additive Gaussian noise with per-channel standard deviation
/// sigma_d * mean|d_q|.
pub fn add_gaussian_noise(d_t: &TimeSeries, sigma_d: f64, seed: u64) -> TimeSeries {
    let scale = d_t.mean_abs() * sigma_d;
    let mut rng = stream(seed, StreamId::ObservationNoise);
    let mut data = d_t.data.clone();
    for k in 0..d_t.len() {
        for q in 0..d_t.n_channels() {
            let z: f64 = rng.sample(StandardNormal);
            data[(k, q)] += scale[q] * z;
        }
    }
    TimeSeries::new(d_t.t0, d_t.dt, data)
}

/// Additive colored noise synthesized in the frequency domain.
///
/// Amplitude shaping: white f^0, pink f^(-1/2), brown f^(-1); random phases;
/// DC removed. Every color is normalized to unit variance before scaling by
/// factor * mean|d_q| per channel, so the three colors carry equal energy.
pub fn add_colored_noise(
    d_t: &TimeSeries,
    color: NoiseColor,
    factor: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if factor < 0.0 {
        return Err(Error::InvalidNoise(format!("negative factor {factor}")));
    }
    if color == NoiseColor::GaussianWhite {
        return Ok(add_gaussian_noise(d_t, factor, seed));
    }
    let n = d_t.len();
    let nfft = n.next_power_of_two().max(8);
    let exponent = match color {
        NoiseColor::White => 0.0,
        NoiseColor::Pink => -0.5,
        NoiseColor::Brown => -1.0,
        NoiseColor::GaussianWhite => unreachable!(),
    };
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(nfft);
    let scale = d_t.mean_abs() * factor;
    let mut rng = stream(seed, StreamId::ObservationNoise);
    let mut data = d_t.data.clone();
    for q in 0..d_t.n_channels() {
        let mut spectrum = vec![Complex::new(0.0, 0.0); nfft];
        for k in 1..=nfft / 2 {
            let amplitude = (k as f64).powf(exponent);
            let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let value = Complex::from_polar(amplitude, phase);
            spectrum[k] = value;
            if k < nfft / 2 {
                spectrum[nfft - k] = value.conj();
            } else {
                // Nyquist bin must be real
                spectrum[k] = Complex::new(amplitude * phase.cos(), 0.0);
            }
        }
        let mut buf = spectrum;
        ifft.process(&mut buf);
        let raw: Vec<f64> = buf.iter().take(n).map(|c| c.re).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 0.0 {
            for k in 0..n {
                data[(k, q)] += scale[q] * (raw[k] - mean) / std;
            }
        }
    }
    Ok(TimeSeries::new(d_t.t0, d_t.dt, data))
}

/// Apply the configured noise to the biased truth.
pub fn apply_noise(d_t: &TimeSeries, spec: &NoiseSpec) -> Result<TimeSeries> {
    if spec.level < 0.0 {
        return Err(Error::InvalidNoise(format!("negative level {}", spec.level)));
    }
    match spec.color {
        NoiseColor::GaussianWhite => Ok(add_gaussian_noise(d_t, spec.level, spec.seed)),
        color => add_colored_noise(d_t, color, spec.level, spec.seed),
    }
}

/// Channel-averaged signal-to-noise ratio in dB. Returns +inf when the
/// series are identical.
pub fn snr_db(true_series: &TimeSeries, noisy_series: &TimeSeries) -> f64 {
    assert_eq!(true_series.len(), noisy_series.len());
    assert_eq!(true_series.n_channels(), noisy_series.n_channels());
    let n = true_series.len() as f64;
    let n_q = true_series.n_channels();
    let mut total = 0.0;
    for q in 0..n_q {
        let signal: f64 =
            true_series.channel(q).iter().map(|v| v * v).sum::<f64>() / n;
        let noise: f64 = true_series
            .channel(q)
            .iter()
            .zip(noisy_series.channel(q).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        if noise == 0.0 {
            return f64::INFINITY;
        }
        total += 10.0 * (signal / noise).log10();
    }
    total / n_q as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{RijkeModel, VdpModel};
    use approx::assert_relative_eq;

    fn vdp_truth(kind: BiasKind, t_end: f64) -> Truth {
        let model = VdpModel::table_defaults();
        let alpha = VdpModel::alpha_from(55.0, 75.0, 3.4);
        let ic = DVector::from_vec(vec![0.01, 0.0]);
        generate_truth(&model, &alpha, &BiasSpec::new(kind), t_end, 1e-4, 1.0, &ic).unwrap()
    }

    #[test]
    fn zero_bias_means_observables_equal_biased() {
        let truth = vdp_truth(BiasKind::None, 0.05);
        assert_eq!(truth.biased.data, truth.observables.data);
        assert_eq!(truth.bias.data.amax(), 0.0);
    }

    #[test]
    fn bias_identity_holds_at_all_samples() {
        let truth = vdp_truth(BiasKind::VdpCosine, 0.05);
        // d^t == M psi^t + b^t exactly as constructed, and b^t = cos(eta^t)
        for k in 0..truth.biased.len() {
            let d = truth.biased.data[(k, 0)];
            let p = truth.observables.data[(k, 0)];
            let b = truth.bias.data[(k, 0)];
            assert_eq!(d, p + b);
            assert_eq!(b, p.cos());
        }
    }

    #[test]
    fn unphysical_true_parameters_are_rejected() {
        let model = VdpModel::table_defaults();
        let alpha = VdpModel::alpha_from(55.0, 300.0, 3.4); // beta beyond limits
        let ic = DVector::from_vec(vec![0.01, 0.0]);
        assert!(matches!(
            generate_truth(&model, &alpha, &BiasSpec::new(BiasKind::None), 0.01, 1e-4, 0.0, &ic),
            Err(Error::TruthGenerationFailure(_))
        ));
    }

    #[test]
    fn time_dependent_bias_vanishes_at_the_sine_zeros() {
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(4.2, 1.4e-3);
        let mut ic = DVector::zeros(model.n_phi());
        ic[0] = 0.05;
        let truth = generate_truth(
            &model,
            &alpha,
            &BiasSpec::new(BiasKind::TimeDependent),
            1.0,
            1e-4,
            1.0,
            &ic,
        )
        .unwrap();
        let scale = truth.observables.data.amax();
        // a6 = 2: zeros at t = k/2
        for t in [0.0, 0.5, 1.0] {
            let k = truth.bias.index_at(t);
            for q in 0..truth.bias.n_channels() {
                assert!(
                    truth.bias.data[(k, q)].abs() < 1e-10 * scale,
                    "bias at t={t} is {}",
                    truth.bias.data[(k, q)]
                );
            }
        }
        // away from the zeros the bias is alive
        let k = truth.bias.index_at(0.25);
        assert!(truth.bias.data[(k, 0)].abs() > 1e-4 * scale);
    }

    #[test]
    fn rijke_linear_bias_matches_the_formula() {
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(4.2, 1.4e-3);
        let mut ic = DVector::zeros(model.n_phi());
        ic[0] = 0.05;
        let spec = BiasSpec::new(BiasKind::Linear);
        let truth = generate_truth(&model, &alpha, &spec, 0.2, 1e-4, 1.0, &ic).unwrap();
        let p_max = (0..truth.observables.len())
            .map(|k| truth.observables.data[(k, 0)])
            .fold(f64::NEG_INFINITY, f64::max);
        for k in (0..truth.bias.len()).step_by(97) {
            for q in 0..truth.bias.n_channels() {
                let p = truth.observables.data[(k, q)];
                assert_relative_eq!(
                    truth.bias.data[(k, q)],
                    0.3 * p + 0.1 * p_max,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn zero_noise_is_the_identity() {
        let truth = vdp_truth(BiasKind::VdpCosine, 0.02);
        let noisy = add_gaussian_noise(&truth.biased, 0.0, 3);
        assert_eq!(noisy.data, truth.biased.data);
        let colored = add_colored_noise(&truth.biased, NoiseColor::Pink, 0.0, 3).unwrap();
        assert_eq!(colored.data, truth.biased.data);
    }

    #[test]
    fn gaussian_noise_std_matches_the_request() {
        let d = TimeSeries::from_fn(0.0, 1e-4, 100_000, 1, |k| {
            DVector::from_vec(vec![(k as f64 * 0.01).sin()])
        });
        let sigma_d = 0.05;
        let noisy = add_gaussian_noise(&d, sigma_d, 7);
        let target = sigma_d * d.mean_abs()[0];
        let diffs: Vec<f64> = (0..d.len()).map(|k| noisy.data[(k, 0)] - d.data[(k, 0)]).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let std = (diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / diffs.len() as f64)
            .sqrt();
        assert!((std - target).abs() / target < 0.03, "std {std} vs target {target}");
    }

    #[test]
    fn negative_noise_levels_are_rejected() {
        let truth = vdp_truth(BiasKind::None, 0.01);
        assert!(matches!(
            add_colored_noise(&truth.biased, NoiseColor::Pink, -0.1, 0),
            Err(Error::InvalidNoise(_))
        ));
    }

    /// Periodogram log-log slope over roughly a decade of frequencies.
    fn psd_slope(noise: &[f64], dt: f64) -> f64 {
        let seg = 1024usize;
        let n_seg = noise.len() / seg;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(seg);
        let mut psd = vec![0.0f64; seg / 2];
        for s in 0..n_seg {
            let mut buf: Vec<Complex<f64>> =
                noise[s * seg..(s + 1) * seg].iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.process(&mut buf);
            for k in 0..seg / 2 {
                psd[k] += buf[k].norm_sqr();
            }
        }
        // regress log PSD on log f over bins [4, 40)
        let pts: Vec<(f64, f64)> = (4..40)
            .map(|k| (((k as f64) / (seg as f64 * dt)).ln(), (psd[k] / n_seg as f64).ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn colored_noise_has_the_advertised_spectral_slopes() {
        let d = TimeSeries::from_fn(0.0, 1e-4, 1 << 14, 1, |_| DVector::zeros(1));
        // zero signal: mean|d| = 0 would null the noise, so use a constant
        let d = TimeSeries::new(0.0, 1e-4, d.data.add_scalar(1.0));
        for (color, expected) in [
            (NoiseColor::White, 0.0),
            (NoiseColor::Pink, -1.0),
            (NoiseColor::Brown, -2.0),
        ] {
            let noisy = add_colored_noise(&d, color, 0.25, 11).unwrap();
            let noise: Vec<f64> =
                (0..d.len()).map(|k| noisy.data[(k, 0)] - d.data[(k, 0)]).collect();
            let slope = psd_slope(&noise, 1e-4);
            assert!(
                (slope - expected).abs() < 0.3,
                "{color:?}: slope {slope} vs {expected}"
            );
        }
    }

    #[test]
    fn colors_carry_equal_energy() {
        let d = TimeSeries::from_fn(0.0, 1e-4, 4096, 2, |k| {
            DVector::from_vec(vec![(k as f64 * 0.02).sin() + 2.0, 1.5])
        });
        let variance = |color: NoiseColor| -> f64 {
            let noisy = add_colored_noise(&d, color, 0.3, 5).unwrap();
            let mut var = 0.0;
            for q in 0..2 {
                let diffs: Vec<f64> =
                    (0..d.len()).map(|k| noisy.data[(k, q)] - d.data[(k, q)]).collect();
                let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
                var += diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / diffs.len() as f64;
            }
            var
        };
        let w = variance(NoiseColor::White);
        let p = variance(NoiseColor::Pink);
        let b = variance(NoiseColor::Brown);
        assert!((p - w).abs() / w < 0.02);
        assert!((b - w).abs() / w < 0.02);
    }

    #[test]
    fn snr_of_identical_series_is_infinite() {
        let truth = vdp_truth(BiasKind::None, 0.01);
        assert_eq!(snr_db(&truth.biased, &truth.biased), f64::INFINITY);
    }

    #[test]
    fn snr_of_a_tenth_amplitude_error_is_twenty_db() {
        let d = TimeSeries::from_fn(0.0, 1e-3, 5000, 1, |k| {
            DVector::from_vec(vec![(k as f64 * 0.13).sin()])
        });
        let noisy = TimeSeries::new(0.0, 1e-3, &d.data * 1.1);
        assert_relative_eq!(snr_db(&d, &noisy), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn paper_snr_targets_within_one_db() {
        // nonlinear-bias truth of the time-delayed model; factors 0.1, 0.25,
        // 0.5 should land near 21.55, 13.70, 7.72 dB
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(4.2, 1.4e-3);
        let mut ic = DVector::zeros(model.n_phi());
        ic[0] = 0.05;
        let truth = generate_truth(
            &model,
            &alpha,
            &BiasSpec::new(BiasKind::NonlinearPeriodic),
            0.5,
            1e-4,
            1.0,
            &ic,
        )
        .unwrap();
        for (factor, target) in [(0.1, 21.55), (0.25, 13.70), (0.5, 7.72)] {
            for color in [NoiseColor::White, NoiseColor::Pink, NoiseColor::Brown] {
                let noisy = add_colored_noise(&truth.biased, color, factor, 13).unwrap();
                let snr = snr_db(&truth.biased, &noisy);
                assert!(
                    (snr - target).abs() < 1.0,
                    "{color:?} factor {factor}: snr {snr} vs {target}"
                );
            }
        }
    }
}
