//! Experiment orchestration: training, initialization, washout, sequential
//! assimilation, and the filter-removed forecast, with full recording.

use crate::ensemble::{ensemble_mean, init_ensemble, AugmentedState, Ensemble};
use crate::error::{Error, Result};
use crate::esn::{train, generate_reservoir, ReservoirConfig, ReservoirState, TrainedEsn};
use crate::filters::{perturb_observations, reject_inflate, renkf_analysis, AnalysisInputs, FilterConfig};
use crate::metrics::{mae, rms, ErrorWindows, MetricsSummary};
use crate::models::{ForecastModel, Integrator};
use crate::series::{format_float, TimeSeries};
use crate::training::{build_training_set, TrainingConfig};
use crate::truth::{apply_noise, generate_truth, BiasSpec, NoiseSpec, Truth};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::io::Write;

/// Everything that defines one twin experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Model integration step (s).
    pub model_dt: f64,
    /// Network step (s); must be a multiple of `model_dt`.
    pub dt_esn: f64,
    /// Analysis interval (s); must be a multiple of `dt_esn`.
    pub dt_analysis: f64,
    pub n_wash: usize,
    pub t_start_da: f64,
    pub t_stop_da: f64,
    /// Filter-removed horizon after t_stop_da (s).
    pub t_post: f64,
    /// Metrics window length (s).
    pub t_err: f64,
    /// Ensemble size.
    pub m: usize,
    pub sigma_phi: f64,
    pub sigma_alpha: f64,
    /// Initial parameter guess (ensemble and training center).
    pub alpha_guess: DVector<f64>,
    /// True parameters behind the synthetic observations.
    pub alpha_true: DVector<f64>,
    /// State used to start the truth integration (before its transient).
    pub initial_state: DVector<f64>,
    /// Transient discarded before t = 0 (s).
    pub t_transient: f64,
    pub bias: BiasSpec,
    pub noise: NoiseSpec,
    /// Bias regularization factor.
    pub gamma: f64,
    /// Bias-norm weight scale: C_bb = diag((c_bb_scale * mean|d_q|)^2).
    /// None keeps the default C_bb = C_dd.
    pub c_bb_scale: Option<f64>,
    pub inflation_accept: f64,
    pub inflation_reject: f64,
    pub training: TrainingConfig,
    pub reservoir: ReservoirConfig,
    /// Time at which the ensemble is drawn and released (defaults to the
    /// end of the training window).
    pub t_ens_init: Option<f64>,
    /// Master seed for ensemble and observation perturbations.
    pub seed: u64,
}

impl ExperimentConfig {
    /// Ensemble release time (defaults to the end of the training window).
    pub fn ensemble_init_time(&self) -> f64 {
        self.t_ens_init.unwrap_or(self.training.t_train)
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_esn = self.dt_esn / self.model_dt;
        if (ratio_esn - ratio_esn.round()).abs() > 1e-9 || ratio_esn < 1.0 {
            return Err(Error::InvalidDataset("dt_esn must be a multiple of model_dt".into()));
        }
        let ratio_d = self.dt_analysis / self.dt_esn;
        if (ratio_d - ratio_d.round()).abs() > 1e-9 || ratio_d < 1.0 {
            return Err(Error::InvalidDataset("dt_analysis must be a multiple of dt_esn".into()));
        }
        let t_init = self.ensemble_init_time();
        if t_init < 0.0 {
            return Err(Error::InvalidDataset("t_ens_init must be >= 0".into()));
        }
        let t_ws = self.t_start_da - self.n_wash as f64 * self.dt_esn - 2.0 * self.dt_analysis;
        if t_ws < t_init {
            return Err(Error::InvalidDataset(format!(
                "t_start_da = {} leaves no room for spin-up, washout, and the 2 dt_d lead after t = {t_init}",
                self.t_start_da
            )));
        }
        if self.t_stop_da <= self.t_start_da {
            return Err(Error::InvalidDataset("empty assimilation window".into()));
        }
        if self.t_post < self.t_err {
            return Err(Error::InvalidDataset("t_post must cover the post-DA metrics window".into()));
        }
        if self.t_err > self.t_start_da - t_init {
            return Err(Error::InvalidDataset("t_err exceeds the pre-DA record".into()));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.t_stop_da + self.t_post
    }

    pub fn n_analyses(&self) -> usize {
        ((self.t_stop_da - self.t_start_da) / self.dt_analysis).floor() as usize
    }
}

/// Per-analysis diagnostics.
#[derive(Debug, Clone)]
pub struct AnalysisRow {
    pub t: f64,
    pub observation: DVector<f64>,
    /// d - M mean(psi^a), the network re-initialization signal.
    pub innovation: DVector<f64>,
    pub alpha_mean: DVector<f64>,
    pub alpha_spread: DVector<f64>,
    pub accepted: bool,
}

/// Time-indexed experiment record on the dt_esn grid.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    /// d^t.
    pub truth_biased: TimeSeries,
    /// M psi^t (for the true-biased reference error).
    pub truth_observables: TimeSeries,
    /// Ensemble-mean biased estimate M mean(psi).
    pub biased_estimate: TimeSeries,
    /// Per-channel ensemble standard deviation of the observables.
    pub spread: TimeSeries,
    /// Network bias estimate b^f (zero before initialization).
    pub bias_estimate: TimeSeries,
    /// Unbiased estimate y = M mean(psi) + b^f.
    pub unbiased_estimate: TimeSeries,
    pub analyses: Vec<AnalysisRow>,
}

impl ExperimentRecord {
    /// One wide CSV table: the dt_esn series plus analysis columns (empty
    /// between analyses).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_q = self.truth_biased.n_channels();
        let n_alpha = self.analyses.first().map_or(0, |a| a.alpha_mean.len());
        let mut header = vec!["t".to_string()];
        for (prefix, count) in [
            ("d_t", n_q),
            ("m_psi", n_q),
            ("spread", n_q),
            ("b_f", n_q),
            ("y", n_q),
            ("obs", n_q),
            ("innovation", n_q),
        ] {
            header.extend((0..count).map(|q| format!("{prefix}_{q}")));
        }
        header.extend((0..n_alpha).map(|i| format!("alpha_mean_{i}")));
        header.extend((0..n_alpha).map(|i| format!("alpha_spread_{i}")));
        header.push("accepted".into());
        w.write_record(&header)?;

        let mut analysis_at = std::collections::HashMap::new();
        for (i, row) in self.analyses.iter().enumerate() {
            analysis_at.insert(self.truth_biased.index_at(row.t), i);
        }
        let empty = String::new();
        for k in 0..self.truth_biased.len() {
            let mut record: Vec<String> = vec![format_float(self.truth_biased.time_at(k))];
            for series in [
                &self.truth_biased,
                &self.biased_estimate,
                &self.spread,
                &self.bias_estimate,
                &self.unbiased_estimate,
            ] {
                for q in 0..n_q {
                    record.push(format_float(series.data[(k, q)]));
                }
            }
            if let Some(&i) = analysis_at.get(&k) {
                let row = &self.analyses[i];
                for q in 0..n_q {
                    record.push(format_float(row.observation[q]));
                }
                for q in 0..n_q {
                    record.push(format_float(row.innovation[q]));
                }
                for v in row.alpha_mean.iter() {
                    record.push(format_float(*v));
                }
                for v in row.alpha_spread.iter() {
                    record.push(format_float(*v));
                }
                record.push(if row.accepted { "1".into() } else { "0".into() });
            } else {
                for _ in 0..(2 * n_q + 2 * n_alpha) {
                    record.push(empty.clone());
                }
                record.push(empty.clone());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Output of one full experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub record: ExperimentRecord,
    pub metrics: MetricsSummary,
    pub esn: TrainedEsn,
    pub windows: ErrorWindows,
}

fn observable_stats(members: &[AugmentedState]) -> (DVector<f64>, DVector<f64>) {
    let n_q = members[0].n_obs();
    let m = members.len() as f64;
    let mut mean = DVector::zeros(n_q);
    for member in members {
        mean += &member.observables;
    }
    mean /= m;
    let mut var = DVector::zeros(n_q);
    for member in members {
        let d = &member.observables - &mean;
        var += d.component_mul(&d);
    }
    var /= m - 1.0;
    (mean, var.map(f64::sqrt))
}

fn alpha_stats(members: &[AugmentedState]) -> (DVector<f64>, DVector<f64>) {
    let n_a = members[0].n_alpha();
    let m = members.len() as f64;
    let mut mean = DVector::zeros(n_a);
    for member in members {
        mean += &member.alpha;
    }
    mean /= m;
    let mut var = DVector::zeros(n_a);
    for member in members {
        let d = &member.alpha - &mean;
        var += d.component_mul(&d);
    }
    var /= m - 1.0;
    (mean, var.map(f64::sqrt))
}

/// Advance every member by `n_chunks` network intervals, re-deriving the
/// observables; `record` runs after each interval.
fn forecast_members(
    model: &dyn ForecastModel,
    members: &mut [AugmentedState],
    model_dt: f64,
    steps_per_chunk: usize,
    n_chunks: usize,
    mut record: impl FnMut(usize, &[AugmentedState]),
) -> Result<()> {
    for chunk in 0..n_chunks {
        members.par_iter_mut().try_for_each(|member| -> Result<()> {
            let mut integ = Integrator::new(model, model_dt);
            integ.advance(&mut member.phi, &member.alpha, steps_per_chunk)?;
            member.observables = model.observe(&member.phi);
            Ok(())
        })?;
        record(chunk, members);
    }
    Ok(())
}

/// Forecast the ensemble through the washout window while collecting the
/// mean innovations, then initialize the reservoir with one open-loop pass.
///
/// Returns the advanced ensemble, the initialized reservoir state, and the
/// bias output at the end of the washout.
pub fn run_washout(
    model: &dyn ForecastModel,
    ensemble: &mut Ensemble,
    esn: &TrainedEsn,
    observations: &TimeSeries,
    t_washout_start: f64,
    n_wash: usize,
    model_dt: f64,
    dt_esn: f64,
    mut record: impl FnMut(usize, &[AugmentedState]),
) -> Result<(ReservoirState, DVector<f64>)> {
    let needed = observations.index_at(t_washout_start) + 1;
    if observations.len() < needed {
        return Err(Error::InsufficientWashoutData { needed, got: observations.len() });
    }
    let steps_per_chunk = (dt_esn / model_dt).round() as usize;
    let mut innovations = Vec::with_capacity(n_wash);
    for k in 0..n_wash {
        let t = t_washout_start + k as f64 * dt_esn;
        let d = observations.sample(observations.index_at(t));
        let (mean_obs, _) = observable_stats(&ensemble.members);
        innovations.push(d - mean_obs);
        forecast_members(model, &mut ensemble.members, model_dt, steps_per_chunk, 1, |_, members| {
            record(k, members)
        })?;
    }
    let (state, output) = esn.washout(&innovations)?;
    Ok((state, output))
}

/// One analysis: Jacobian, perturbed observations, regularized update,
/// reject-inflate, observable re-derivation, and the re-initialization
/// innovation for the network.
pub fn assimilation_step(
    model: &dyn ForecastModel,
    ensemble: &Ensemble,
    esn: &TrainedEsn,
    esn_state: &ReservoirState,
    current_bias: &DVector<f64>,
    observation: &DVector<f64>,
    filter: &FilterConfig,
    t: f64,
) -> Result<(Ensemble, AnalysisRow)> {
    let jacobian = esn.jacobian_open_loop(esn_state, current_bias);
    let mut analysis_input = ensemble.clone();
    let perturbed = perturb_observations(observation, &filter.c_dd, &mut analysis_input.rng_streams)?;
    let inputs = AnalysisInputs {
        observation: observation.clone(),
        bias_forecast: current_bias.clone(),
        jacobian,
    };
    let analysis = renkf_analysis(&analysis_input, &inputs, &perturbed, filter)?;
    let (mut chosen, accepted) = reject_inflate(&analysis, &analysis_input, filter)?;
    for member in &mut chosen.members {
        model.project(&mut member.phi);
        member.observables = model.observe(&member.phi);
    }
    let (mean_obs, _) = observable_stats(&chosen.members);
    let (alpha_mean, alpha_spread) = alpha_stats(&chosen.members);
    let row = AnalysisRow {
        t,
        observation: observation.clone(),
        innovation: observation - mean_obs,
        alpha_mean,
        alpha_spread,
        accepted,
    };
    Ok((chosen, row))
}

/// Run the full pipeline: truth, training (unless a trained network is
/// supplied), initialization, assimilation, and the filter-removed forecast.
pub fn run_experiment(
    model: &dyn ForecastModel,
    config: &ExperimentConfig,
    pretrained: Option<TrainedEsn>,
) -> Result<ExperimentOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let dt = config.model_dt;
    let dt_esn = config.dt_esn;
    let n_q = model.n_obs();

    // --- truth and observations over the full horizon
    let mut bias_spec = config.bias;
    if bias_spec.t_max_ref.is_none() {
        bias_spec.t_max_ref = Some(config.t_start_da);
    }
    let truth: Truth = generate_truth(
        model,
        &config.alpha_true,
        &bias_spec,
        config.t_end(),
        dt,
        config.t_transient,
        &config.initial_state,
    )
    .map_err(|e| e.in_stage("truth"))?;
    let observations = apply_noise(&truth.biased, &config.noise).map_err(|e| e.in_stage("noise"))?;

    // --- network training
    let esn = match pretrained {
        Some(esn) => esn,
        None => {
            let phi0 = truth.states[0].clone();
            let set = build_training_set(model, &phi0, &config.alpha_guess, &observations, dt, &config.training)
                .map_err(|e| e.in_stage("training-data"))?;
            let (w_in, w) =
                generate_reservoir(&config.reservoir, n_q).map_err(|e| e.in_stage("reservoir"))?;
            train(&w_in, &w, &set.series, &config.reservoir).map_err(|e| e.in_stage("training"))?
        }
    };
    if esn.n_q() != n_q {
        return Err(Error::InvalidDataset(format!(
            "network expects {} observables, model has {n_q}",
            esn.n_q()
        ))
        .in_stage("network"));
    }

    // --- filter weights from the observation-noise scale
    let scale = truth.biased.mean_abs();
    let mut c_dd = DMatrix::zeros(n_q, n_q);
    for q in 0..n_q {
        let std = (config.noise.level * scale[q]).max(1e-12 * scale[q].max(1e-300));
        c_dd[(q, q)] = std * std;
    }
    let mut filter = FilterConfig::new(config.gamma, c_dd, model.param_bounds());
    if let Some(cb) = config.c_bb_scale {
        let mut c_bb = DMatrix::zeros(n_q, n_q);
        for q in 0..n_q {
            let std = (cb * scale[q]).max(1e-12 * scale[q].max(1e-300));
            c_bb[(q, q)] = std * std;
        }
        filter.c_bb = c_bb;
    }
    filter.inflation_accept = config.inflation_accept;
    filter.inflation_reject = config.inflation_reject;

    // --- ensemble initialization around the state guess at the release time
    let t_init = config.ensemble_init_time();
    let esn_stride = (dt_esn / dt).round() as usize;
    let init_row = (t_init / dt_esn).round() as usize;
    let init_state = truth.states[init_row * esn_stride].clone();
    let mean_state = AugmentedState::new(
        init_state.clone(),
        config.alpha_guess.clone(),
        model.observe(&init_state),
    );
    let mut ensemble = init_ensemble(
        &mean_state,
        config.sigma_phi,
        config.sigma_alpha,
        config.m,
        config.seed,
        |phi| model.observe(phi),
    )
    .map_err(|e| e.in_stage("ensemble-init"))?;
    for member in &mut ensemble.members {
        model.project(&mut member.phi);
        member.observables = model.observe(&member.phi);
    }

    // --- recording layout on the dt_esn grid
    let n_rows = (config.t_end() / dt_esn).round() as usize + 1;
    let mut biased = DMatrix::zeros(n_rows, n_q);
    let mut spread = DMatrix::zeros(n_rows, n_q);
    let mut bias_est = DMatrix::zeros(n_rows, n_q);
    let mut truth_ds = DMatrix::zeros(n_rows, n_q);
    let mut truth_obs_ds = DMatrix::zeros(n_rows, n_q);
    for k in 0..n_rows {
        let src = k * esn_stride;
        for q in 0..n_q {
            truth_ds[(k, q)] = truth.biased.data[(src, q)];
            truth_obs_ds[(k, q)] = truth.observables.data[(src, q)];
        }
    }
    let mut write_row = |row: usize,
                         members: &[AugmentedState],
                         bias: &DVector<f64>,
                         biased: &mut DMatrix<f64>,
                         spread: &mut DMatrix<f64>,
                         bias_est: &mut DMatrix<f64>| {
        let (mean_obs, std_obs) = observable_stats(members);
        for q in 0..n_q {
            biased[(row, q)] = mean_obs[q];
            spread[(row, q)] = std_obs[q];
            bias_est[(row, q)] = bias[q];
        }
    };

    let zero_bias = DVector::zeros(n_q);
    // rows before the release hold the initial ensemble statistics
    for row in 0..=init_row {
        write_row(row, &ensemble.members, &zero_bias, &mut biased, &mut spread, &mut bias_est);
    }

    // --- spin-up to the washout start
    let t_ws = config.t_start_da - config.n_wash as f64 * dt_esn - 2.0 * config.dt_analysis;
    let ws_row = (t_ws / dt_esn).round() as usize;
    forecast_members(model, &mut ensemble.members, dt, esn_stride, ws_row - init_row, |chunk, members| {
        write_row(init_row + chunk + 1, members, &zero_bias, &mut biased, &mut spread, &mut bias_est);
    })
    .map_err(|e| e.in_stage("spin-up"))?;

    // --- washout
    let (mut esn_state, mut current_bias) = run_washout(
        model,
        &mut ensemble,
        &esn,
        &observations,
        t_ws,
        config.n_wash,
        dt,
        dt_esn,
        |k, members| {
            write_row(ws_row + 1 + k, members, &zero_bias, &mut biased, &mut spread, &mut bias_est);
        },
    )
    .map_err(|e| e.in_stage("washout"))?;

    // --- 2 dt_d lead: network runs closed loop alongside the forecast
    let per_analysis = (config.dt_analysis / dt_esn).round() as usize;
    let lead_row = ws_row + config.n_wash;
    {
        let mut row = lead_row;
        for _ in 0..2 * per_analysis {
            let (next, out) = esn.step_closed_loop(&esn_state).map_err(|e| e.in_stage("lead"))?;
            esn_state = next;
            current_bias = out;
            forecast_members(model, &mut ensemble.members, dt, esn_stride, 1, |_, members| {
                write_row(row + 1, members, &current_bias, &mut biased, &mut spread, &mut bias_est);
            })
            .map_err(|e| e.in_stage("lead"))?;
            row += 1;
        }
        // the bias recorded at the washout-end row is the washout output
        let (mean_obs, std_obs) = observable_stats(&ensemble.members);
        let _ = (mean_obs, std_obs);
    }

    // --- sequential assimilation
    let start_row = (config.t_start_da / dt_esn).round() as usize;
    let n_analyses = config.n_analyses();
    let mut analyses = Vec::with_capacity(n_analyses);
    let mut row = start_row;
    for k in 0..n_analyses {
        let t = config.t_start_da + k as f64 * config.dt_analysis;
        let d = observations.sample(observations.index_at(t));
        let (updated, analysis_row) = assimilation_step(
            model,
            &ensemble,
            &esn,
            &esn_state,
            &current_bias,
            &d,
            &filter,
            t,
        )
        .map_err(|e| e.in_stage("analysis"))?;
        ensemble = updated;
        // overwrite the row at the analysis instant with the posterior
        write_row(row, &ensemble.members, &current_bias, &mut biased, &mut spread, &mut bias_est);
        // network re-initialization with the analysis innovation, then
        // closed loop to the next analysis
        let (next, out) = esn
            .step_open_loop(&esn_state, &analysis_row.innovation)
            .map_err(|e| e.in_stage("reinit"))?;
        esn_state = next;
        current_bias = out;
        analyses.push(analysis_row);
        for j in 0..per_analysis {
            forecast_members(model, &mut ensemble.members, dt, esn_stride, 1, |_, members| {
                write_row(row + 1 + j, members, &current_bias, &mut biased, &mut spread, &mut bias_est);
            })
            .map_err(|e| e.in_stage("forecast"))?;
            if j + 1 < per_analysis {
                let (next, out) = esn.step_closed_loop(&esn_state).map_err(|e| e.in_stage("forecast"))?;
                esn_state = next;
                current_bias = out;
            }
        }
        row += per_analysis;
    }

    // --- filter removed: free forecast with the network in closed loop
    let post_chunks = n_rows - 1 - row;
    for j in 0..post_chunks {
        let (next, out) = esn.step_closed_loop(&esn_state).map_err(|e| e.in_stage("post"))?;
        esn_state = next;
        current_bias = out;
        forecast_members(model, &mut ensemble.members, dt, esn_stride, 1, |_, members| {
            write_row(row + 1 + j, members, &current_bias, &mut biased, &mut spread, &mut bias_est);
        })
        .map_err(|e| e.in_stage("post"))?;
    }

    let truth_biased = TimeSeries::new(0.0, dt_esn, truth_ds);
    let truth_observables = TimeSeries::new(0.0, dt_esn, truth_obs_ds);
    let biased_estimate = TimeSeries::new(0.0, dt_esn, biased);
    let bias_estimate = TimeSeries::new(0.0, dt_esn, bias_est);
    let unbiased_estimate =
        TimeSeries::new(0.0, dt_esn, &biased_estimate.data + &bias_estimate.data);
    let record = ExperimentRecord {
        truth_biased,
        truth_observables,
        biased_estimate,
        spread: TimeSeries::new(0.0, dt_esn, spread),
        bias_estimate,
        unbiased_estimate,
        analyses,
    };

    let windows = ErrorWindows::new(config.t_start_da, config.t_stop_da, config.t_err);
    let metrics = compute_metrics(&record, config, &windows)?;
    Ok(ExperimentOutput { record, metrics, esn, windows })
}

fn compute_metrics(
    record: &ExperimentRecord,
    config: &ExperimentConfig,
    windows: &ErrorWindows,
) -> Result<MetricsSummary> {
    let d_t = &record.truth_biased;
    Ok(MetricsSummary {
        l_sets: config.training.l_sets,
        gamma: config.gamma,
        m: config.m,
        biased_rms_pre: rms(d_t, &record.biased_estimate, windows.pre_da)?,
        biased_rms_da: rms(d_t, &record.biased_estimate, windows.da)?,
        unbiased_rms_da: rms(d_t, &record.unbiased_estimate, windows.da)?,
        biased_rms_post: rms(d_t, &record.biased_estimate, windows.post_da)?,
        unbiased_rms_post: rms(d_t, &record.unbiased_estimate, windows.post_da)?,
        true_biased_rms: rms(d_t, &record.truth_observables, windows.da)?,
        mae_biased_pre: mae(d_t, &record.biased_estimate, d_t, windows.pre_da)?,
        mae_biased_da: mae(d_t, &record.biased_estimate, d_t, windows.da)?,
        mae_unbiased_da: mae(d_t, &record.unbiased_estimate, d_t, windows.da)?,
        mae_biased_post: mae(d_t, &record.biased_estimate, d_t, windows.post_da)?,
        mae_unbiased_post: mae(d_t, &record.unbiased_estimate, d_t, windows.post_da)?,
    })
}
