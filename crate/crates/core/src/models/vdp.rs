//! Van der Pol oscillator with a nonlinear heat-release forcing law.

use super::ForecastModel;
use crate::error::{Error, Result};
use nalgebra::DVector;

/// Parameters of the forced oscillator. `omega` is fixed; the damping
/// `zeta`, forcing strength `beta`, and nonlinearity `kappa` are inferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    /// Angular frequency (rad/s).
    pub omega: f64,
    /// Damping (Hz).
    pub zeta: f64,
    /// Forcing strength (Hz).
    pub beta: f64,
    /// Nonlinearity coefficient.
    pub kappa: f64,
}

impl VdpParams {
    pub fn new(zeta: f64, beta: f64, kappa: f64) -> Self {
        Self { omega: 240.0 * std::f64::consts::PI, zeta, beta, kappa }
    }
}

/// Time derivative of (eta, mu).
///
/// d(eta)/dt = mu;
/// d(mu)/dt = -omega^2 eta + mu (beta - zeta - beta kappa eta^2 / (beta + kappa eta^2)).
pub fn vdp_rhs(state: (f64, f64), params: &VdpParams) -> Result<(f64, f64)> {
    let (eta, mu) = state;
    if !(eta.is_finite() && mu.is_finite()) {
        return Err(Error::NonFiniteState("vdp_rhs"));
    }
    let k_eta2 = params.kappa * eta * eta;
    let d_eta = mu;
    let d_mu = -params.omega * params.omega * eta
        + mu * (params.beta - params.zeta - params.beta * k_eta2 / (params.beta + k_eta2));
    Ok((d_eta, d_mu))
}

/// Van der Pol model behind the common forecast interface.
///
/// State layout: phi = [eta, mu]; parameters: alpha = [zeta, beta, kappa];
/// the observable is the acoustic velocity eta.
#[derive(Debug, Clone)]
pub struct VdpModel {
    pub omega: f64,
    pub zeta_limits: (f64, f64),
    pub beta_limits: (f64, f64),
    pub kappa_limits: (f64, f64),
}

impl VdpModel {
    /// Reference configuration: omega = 240 pi rad/s, zeta/beta in (20, 120) Hz,
    /// kappa in (0.1, 10).
    pub fn table_defaults() -> Self {
        Self {
            omega: 240.0 * std::f64::consts::PI,
            zeta_limits: (20.0, 120.0),
            beta_limits: (20.0, 120.0),
            kappa_limits: (0.1, 10.0),
        }
    }

    pub fn params_from_alpha(&self, alpha: &DVector<f64>) -> VdpParams {
        VdpParams { omega: self.omega, zeta: alpha[0], beta: alpha[1], kappa: alpha[2] }
    }

    pub fn alpha_from(zeta: f64, beta: f64, kappa: f64) -> DVector<f64> {
        DVector::from_vec(vec![zeta, beta, kappa])
    }
}

impl ForecastModel for VdpModel {
    fn n_phi(&self) -> usize {
        2
    }

    fn n_alpha(&self) -> usize {
        3
    }

    fn n_obs(&self) -> usize {
        1
    }

    fn rhs_into(&self, phi: &DVector<f64>, alpha: &DVector<f64>, out: &mut DVector<f64>) {
        let (eta, mu) = (phi[0], phi[1]);
        let (zeta, beta, kappa) = (alpha[0], alpha[1], alpha[2]);
        let k_eta2 = kappa * eta * eta;
        out[0] = mu;
        out[1] = -self.omega * self.omega * eta + mu * (beta - zeta - beta * k_eta2 / (beta + k_eta2));
    }

    fn observe(&self, phi: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![phi[0]])
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![self.zeta_limits, self.beta_limits, self.kappa_limits]
    }
}
