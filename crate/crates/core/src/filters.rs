//! Analysis-step mathematics: bias-unaware EnKF, regularized bias-aware
//! EnKF, observation perturbation, and the reject-inflate guard.
//!
//! The augmented-state layout makes the measurement operator the selector of
//! the trailing observables block, so gains are assembled from covariance
//! blocks without materializing M.

use crate::ensemble::{ensemble_covariance, inflate, Ensemble};
use crate::error::{Error, Result};
use crate::rng::Rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Weights and guards of the analysis step.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Bias regularization factor, >= 0.
    pub gamma: f64,
    /// Observation-error covariance, N_q x N_q SPD.
    pub c_dd: DMatrix<f64>,
    /// Bias-norm weight, N_q x N_q SPD; defaults to `c_dd`.
    pub c_bb: DMatrix<f64>,
    /// Inflation applied to an accepted analysis.
    pub inflation_accept: f64,
    /// Inflation applied to the forecast when the analysis is rejected.
    pub inflation_reject: f64,
    /// Physical bounds per inferred parameter.
    pub param_bounds: Vec<(f64, f64)>,
    /// Clamp parameters to their bounds after inflation. Without the clamp,
    /// a run of consecutive rejections can inflate a parameter out of its
    /// physical box and keep it there forever.
    pub clip_params: bool,
}

impl FilterConfig {
    pub fn new(gamma: f64, c_dd: DMatrix<f64>, param_bounds: Vec<(f64, f64)>) -> Self {
        let c_bb = c_dd.clone();
        Self {
            gamma,
            c_dd,
            c_bb,
            inflation_accept: 1.002,
            inflation_reject: 1.05,
            param_bounds,
            clip_params: true,
        }
    }
}

/// Inputs of one regularized analysis: the observation, the bias forecast
/// of the shared network, and its open-loop Jacobian.
#[derive(Debug, Clone)]
pub struct AnalysisInputs {
    pub observation: DVector<f64>,
    pub bias_forecast: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

/// Draw one perturbed observation per member: d_j = d + chol(C_dd) z_j.
pub fn perturb_observations(
    d: &DVector<f64>,
    c_dd: &DMatrix<f64>,
    rngs: &mut [Rng],
) -> Result<Vec<DVector<f64>>> {
    let chol = nalgebra::Cholesky::new(c_dd.clone()).ok_or(Error::InvalidCovariance)?;
    let l = chol.l();
    Ok(rngs
        .iter_mut()
        .map(|rng| {
            let z = DVector::from_iterator(d.len(), (0..d.len()).map(|_| rng.sample(StandardNormal)));
            d + &l * z
        })
        .collect())
}

/// Covariance blocks entering the gain: C M^T and M C M^T.
fn observation_blocks(forecast: &Ensemble) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = forecast.state_len();
    let n_q = forecast.n_obs();
    let cov = ensemble_covariance(forecast)?.cov;
    let cmt = cov.columns(n - n_q, n_q).into_owned();
    let mcmt = cov.view((n - n_q, n - n_q), (n_q, n_q)).into_owned();
    Ok((cmt, mcmt))
}

fn observables_of(member: &crate::ensemble::AugmentedState) -> &DVector<f64> {
    &member.observables
}

/// Bias-unaware EnKF analysis.
///
/// psi_j^a = psi_j^f + C M^T (C_dd + M C M^T)^{-1} (d_j - M psi_j^f).
pub fn enkf_analysis(
    forecast: &Ensemble,
    perturbed_obs: &[DVector<f64>],
    c_dd: &DMatrix<f64>,
) -> Result<Ensemble> {
    assert_eq!(perturbed_obs.len(), forecast.m());
    let (cmt, mcmt) = observation_blocks(forecast)?;
    let mut bracket = c_dd + mcmt;
    // symmetrize against roundoff before factorization
    bracket = (&bracket + bracket.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(bracket)
        .ok_or_else(|| Error::AnalysisFailure("innovation covariance not SPD".into()))?;
    let mut analysis = forecast.clone();
    let vectors: Vec<DVector<f64>> = forecast
        .members
        .iter()
        .zip(perturbed_obs)
        .map(|(member, d_j)| {
            let innovation = d_j - observables_of(member);
            let u = chol.solve(&innovation);
            member.to_vector() + &cmt * u
        })
        .collect();
    analysis.set_from_vectors(&vectors);
    Ok(analysis)
}

/// Regularized bias-aware EnKF analysis.
///
/// Solves the stationarity condition of the regularized cost with the bias
/// linearized about the forecast:
///
/// [C^-1 + M^T A M] (psi^a - psi^f) = M^T v_j,
/// A   = (I+J)^T C_dd^-1 (I+J) + gamma J^T C_bb^-1 J,
/// v_j = (I+J)^T C_dd^-1 (d_j - y_j^f) - gamma J^T C_bb^-1 b^f,
///
/// applied in the push-through form psi^a = psi^f + C M^T (I + A S)^{-1} v_j
/// with S = M C M^T, which never inverts the (singular) ensemble covariance.
/// With b = 0 and J = 0 this reduces to the bias-unaware EnKF; with J = 0 it
/// assimilates the bias-corrected innovations d_j - M psi_j - b^f.
pub fn renkf_analysis(
    forecast: &Ensemble,
    inputs: &AnalysisInputs,
    perturbed_obs: &[DVector<f64>],
    config: &FilterConfig,
) -> Result<Ensemble> {
    assert_eq!(perturbed_obs.len(), forecast.m());
    let n_q = forecast.n_obs();
    assert_eq!(inputs.bias_forecast.len(), n_q, "bias forecast dimension");
    assert_eq!(inputs.jacobian.nrows(), n_q, "jacobian dimension");
    if config.gamma < 0.0 {
        return Err(Error::AnalysisFailure("gamma must be >= 0".into()));
    }

    let (cmt, s) = observation_blocks(forecast)?;
    let eye = DMatrix::identity(n_q, n_q);
    let i_plus_j = &eye + &inputs.jacobian;

    let cdd_chol =
        nalgebra::Cholesky::new(config.c_dd.clone()).ok_or(Error::InvalidCovariance)?;
    let cbb_chol =
        nalgebra::Cholesky::new(config.c_bb.clone()).ok_or(Error::InvalidCovariance)?;

    // A = (I+J)^T C_dd^-1 (I+J) + gamma J^T C_bb^-1 J
    let cdd_inv_ipj = cdd_chol.solve(&i_plus_j);
    let mut a = i_plus_j.transpose() * &cdd_inv_ipj;
    if config.gamma > 0.0 {
        let cbb_inv_j = cbb_chol.solve(&inputs.jacobian);
        a += inputs.jacobian.transpose() * cbb_inv_j * config.gamma;
    }

    // gamma J^T C_bb^-1 b^f is shared by all members
    let bias_term = if config.gamma > 0.0 {
        inputs.jacobian.transpose() * cbb_chol.solve(&inputs.bias_forecast) * config.gamma
    } else {
        DVector::zeros(n_q)
    };

    let bracket = &eye + &a * &s;
    let lu = bracket.clone().lu();
    let solve_bracket = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        if let Some(u) = lu.solve(rhs) {
            if u.iter().all(|x| x.is_finite()) {
                return Ok(u);
            }
        }
        // one jitter retry on a near-singular bracket, then fail hard
        let jitter = 1e-12 * bracket.trace();
        let retry = (&bracket + DMatrix::identity(n_q, n_q) * jitter).lu();
        match retry.solve(rhs) {
            Some(u) if u.iter().all(|x| x.is_finite()) => Ok(u),
            _ => Err(Error::AnalysisFailure("singular regularized bracket".into())),
        }
    };

    let mut analysis = forecast.clone();
    let mut vectors = Vec::with_capacity(forecast.m());
    for (member, d_j) in forecast.members.iter().zip(perturbed_obs) {
        let y_f = observables_of(member) + &inputs.bias_forecast;
        let residual = d_j - y_f;
        let v = i_plus_j.transpose() * cdd_chol.solve(&residual) - &bias_term;
        let u = solve_bracket(&v)?;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::AnalysisFailure("non-finite gain application".into()));
        }
        vectors.push(member.to_vector() + &cmt * u);
    }
    analysis.set_from_vectors(&vectors);
    Ok(analysis)
}

/// Accept the analysis (mild inflation) when every inferred parameter is
/// physical; otherwise keep the forecast with a stronger inflation.
///
/// Returns the resulting ensemble and whether the analysis was accepted.
pub fn reject_inflate(
    analysis: &Ensemble,
    forecast: &Ensemble,
    config: &FilterConfig,
) -> Result<(Ensemble, bool)> {
    let physical = analysis.members.iter().all(|member| {
        member
            .alpha
            .iter()
            .zip(&config.param_bounds)
            .all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    });
    let mut out = if physical {
        inflate(analysis, config.inflation_accept)?
    } else {
        inflate(forecast, config.inflation_reject)?
    };
    if config.clip_params {
        for member in &mut out.members {
            for (a, &(lo, hi)) in member.alpha.iter_mut().zip(&config.param_bounds) {
                *a = a.clamp(lo, hi);
            }
        }
    }
    Ok((out, physical))
}
