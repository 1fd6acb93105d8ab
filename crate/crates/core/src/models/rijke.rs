//! Nonlinear time-delayed thermoacoustic model of an open-ended duct.
//!
//! Acoustics are discretized with a Galerkin sine/cosine basis (pressure
//! pinned to zero at both ends); the delayed velocity history at the heat
//! source is carried by a Chebyshev-discretized advection equation, which
//! turns the delay problem into an initial-value problem.

use super::chebyshev::{chebyshev_grid, ChebyshevGrid};
use super::ForecastModel;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Specific gas constant of air, J/(kg K).
const R_GAS: f64 = 287.0;

/// Inferred thermoacoustic parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RijkeParams {
    /// Heat-release strength (dimensionless).
    pub beta: f64,
    /// Time delay (s).
    pub tau: f64,
}

/// State blocks of the discretized system.
#[derive(Debug, Clone, PartialEq)]
pub struct RijkeState {
    /// Velocity modes, length N_m.
    pub eta: DVector<f64>,
    /// Pressure modes, length N_m.
    pub mu: DVector<f64>,
    /// Chebyshev advection values, length N_c + 1.
    pub nu: DVector<f64>,
}

impl RijkeState {
    pub fn from_phi(phi: &DVector<f64>, n_modes: usize) -> Self {
        let n = phi.len() - 2 * n_modes;
        Self {
            eta: phi.rows(0, n_modes).into_owned(),
            mu: phi.rows(n_modes, n_modes).into_owned(),
            nu: phi.rows(2 * n_modes, n).into_owned(),
        }
    }

    pub fn to_phi(&self) -> DVector<f64> {
        let n = self.eta.len() + self.mu.len() + self.nu.len();
        let mut phi = DVector::zeros(n);
        phi.rows_mut(0, self.eta.len()).copy_from(&self.eta);
        phi.rows_mut(self.eta.len(), self.mu.len()).copy_from(&self.mu);
        phi.rows_mut(self.eta.len() + self.mu.len(), self.nu.len()).copy_from(&self.nu);
        phi
    }
}

/// Time-delayed square-root heat release law.
///
/// q = u_bar p_bar beta (sqrt|1/3 + u_delayed/u_bar| - sqrt(1/3)), in W/m^2.
pub fn heat_release(u_delayed: f64, beta: f64, u_bar: f64, p_bar: f64) -> f64 {
    let third: f64 = 1.0 / 3.0;
    u_bar * p_bar * beta * ((third + u_delayed / u_bar).abs().sqrt() - third.sqrt())
}

/// Advection right-hand side: out = -(1/tau_nu) D nu for every row.
///
/// The transport carries the inflow value at X = 0 across the unit domain in
/// exactly tau_nu; the caller pins row 0 to the boundary signal derivative.
pub fn advection_rhs(grid: &ChebyshevGrid, tau_nu: f64, nu: &DVector<f64>, out: &mut DVector<f64>) {
    out.gemv(-1.0 / tau_nu, &grid.diff_matrix, nu, 0.0);
}

/// Low-order Rijke-tube model behind the common forecast interface.
///
/// State layout: phi = [eta; mu; nu] (length 2 N_m + N_c + 1); parameters:
/// alpha = [beta, tau]; observables: acoustic pressure at the sensor
/// locations.
#[derive(Debug, Clone)]
pub struct RijkeModel {
    pub n_modes: usize,
    pub tau_nu: f64,
    pub x_h: f64,
    pub l_x: f64,
    pub c1: f64,
    pub c2: f64,
    pub u_bar: f64,
    pub p_bar: f64,
    pub t_bar: f64,
    pub heat_ratio: f64,
    pub beta_limits: (f64, f64),
    pub tau_limits: (f64, f64),
    pub obs_locations: Vec<f64>,
    pub grid: ChebyshevGrid,
    /// Mean speed of sound, m/s.
    pub c_bar: f64,
    /// Mean density, kg/m^3.
    pub rho_bar: f64,
    /// Angular frequencies omega_j = j pi c_bar / l_x, j = 1..=N_m.
    pub omega: Vec<f64>,
    zeta: Vec<f64>,
    cos_xh: Vec<f64>,
    sin_xh: Vec<f64>,
    obs_matrix: DMatrix<f64>,
}

impl RijkeModel {
    pub fn new(
        n_modes: usize,
        n_cheb: usize,
        tau_nu: f64,
        x_h: f64,
        l_x: f64,
        c1: f64,
        c2: f64,
        u_bar: f64,
        p_bar: f64,
        t_bar: f64,
        heat_ratio: f64,
        beta_limits: (f64, f64),
        tau_limits: (f64, f64),
        obs_locations: Vec<f64>,
    ) -> Result<Self> {
        let grid = chebyshev_grid(n_cheb)?;
        for &x in &obs_locations {
            if !(0.0..=l_x).contains(&x) {
                return Err(Error::InvalidLocation(x, l_x));
            }
        }
        let c_bar = (heat_ratio * R_GAS * t_bar).sqrt();
        let rho_bar = p_bar / (R_GAS * t_bar);
        let omega: Vec<f64> = (1..=n_modes)
            .map(|j| j as f64 * std::f64::consts::PI * c_bar / l_x)
            .collect();
        let zeta: Vec<f64> = (1..=n_modes)
            .map(|j| c1 * (j as f64).powi(2) + c2 * (j as f64).sqrt())
            .collect();
        let cos_xh: Vec<f64> = omega.iter().map(|w| (w * x_h / c_bar).cos()).collect();
        let sin_xh: Vec<f64> = omega.iter().map(|w| (w * x_h / c_bar).sin()).collect();
        let obs_matrix = pressure_basis(&omega, c_bar, &obs_locations);
        Ok(Self {
            n_modes,
            tau_nu,
            x_h,
            l_x,
            c1,
            c2,
            u_bar,
            p_bar,
            t_bar,
            heat_ratio,
            beta_limits,
            tau_limits,
            obs_locations,
            grid,
            c_bar,
            rho_bar,
            omega,
            zeta,
            cos_xh,
            sin_xh,
            obs_matrix,
        })
    }

    /// Reference configuration of the nonlinear time-delayed simulations.
    pub fn table_defaults() -> Self {
        Self::new(
            10,
            50,
            1e-2,
            0.2,
            1.0,
            0.05,
            0.01,
            10.0,
            1.013e5,
            417.2,
            1.4,
            (0.1, 5.0),
            (1e-6, 1e-2),
            vec![0.2, 0.33, 0.47, 0.6, 0.73, 0.87],
        )
        .expect("reference configuration is valid")
    }

    pub fn params_from_alpha(&self, alpha: &DVector<f64>) -> RijkeParams {
        RijkeParams { beta: alpha[0], tau: alpha[1] }
    }

    pub fn alpha_from(beta: f64, tau: f64) -> DVector<f64> {
        DVector::from_vec(vec![beta, tau])
    }

    /// Galerkin velocity at the heat source.
    pub fn velocity_at_heat_source(&self, eta: &DVector<f64>) -> f64 {
        eta.iter().zip(&self.cos_xh).map(|(e, c)| e * c).sum()
    }

    /// Delayed velocity u(x_h, t - tau), interpolated from the advection block.
    pub fn delayed_velocity(&self, phi: &DVector<f64>, tau: f64) -> f64 {
        let n_m = self.n_modes;
        let n_nu = phi.len() - 2 * n_m;
        let mut nu_eff = phi.rows(2 * n_m, n_nu).into_owned();
        nu_eff[0] = self.velocity_at_heat_source(&phi.rows(0, n_m).into_owned());
        let x_star = (tau / self.tau_nu).clamp(0.0, 1.0);
        self.grid.interpolate(nu_eff.as_view(), x_star)
    }

    fn n_nu(&self) -> usize {
        self.grid.n_points()
    }
}

fn pressure_basis(omega: &[f64], c_bar: f64, locations: &[f64]) -> DMatrix<f64> {
    // p_q = -sum_j mu_j sin(omega_j x_q / c_bar); fold the sign into the matrix
    DMatrix::from_fn(locations.len(), omega.len(), |q, j| {
        -(omega[j] * locations[q] / c_bar).sin()
    })
}

/// Acoustic pressure at the given duct locations.
pub fn pressure_observation(
    state: &RijkeState,
    locations: &[f64],
    model: &RijkeModel,
) -> Result<DVector<f64>> {
    for &x in locations {
        if !(0.0..=model.l_x).contains(&x) {
            return Err(Error::InvalidLocation(x, model.l_x));
        }
    }
    let basis = pressure_basis(&model.omega, model.c_bar, locations);
    Ok(&basis * &state.mu)
}

/// Full right-hand side of the discretized system (checked entry point).
pub fn rijke_rhs(state: &RijkeState, params: &RijkeParams, model: &RijkeModel) -> Result<RijkeState> {
    if params.tau > model.tau_nu {
        return Err(Error::DelayExceedsHistory { tau: params.tau, tau_nu: model.tau_nu });
    }
    let phi = state.to_phi();
    let alpha = RijkeModel::alpha_from(params.beta, params.tau);
    let mut out = DVector::zeros(phi.len());
    model.rhs_into(&phi, &alpha, &mut out);
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("rijke_rhs"));
    }
    Ok(RijkeState::from_phi(&out, model.n_modes))
}

impl ForecastModel for RijkeModel {
    fn n_phi(&self) -> usize {
        2 * self.n_modes + self.n_nu()
    }

    fn n_alpha(&self) -> usize {
        2
    }

    fn n_obs(&self) -> usize {
        self.obs_locations.len()
    }

    fn rhs_into(&self, phi: &DVector<f64>, alpha: &DVector<f64>, out: &mut DVector<f64>) {
        let n_m = self.n_modes;
        let n_nu = self.n_nu();
        let (beta, tau) = (alpha[0], alpha[1]);
        let rho_c = self.rho_bar * self.c_bar;

        // advection block with the inflow value pinned to the Galerkin velocity
        let mut nu_eff = phi.rows(2 * n_m, n_nu).into_owned();
        let u_h: f64 = (0..n_m).map(|k| phi[k] * self.cos_xh[k]).sum();
        nu_eff[0] = u_h;

        let x_star = (tau / self.tau_nu).clamp(0.0, 1.0);
        let u_delayed = self.grid.interpolate(nu_eff.as_view(), x_star);
        let q_dot = heat_release(u_delayed, beta, self.u_bar, self.p_bar);
        let forcing = 2.0 * q_dot * (self.heat_ratio - 1.0) / self.l_x;

        for k in 0..n_m {
            let eta_k = phi[k];
            let mu_k = phi[n_m + k];
            out[k] = self.omega[k] / rho_c * mu_k;
            out[n_m + k] = -rho_c * self.omega[k] * eta_k
                - forcing * self.sin_xh[k]
                - self.zeta[k] * (self.c_bar / self.l_x) * mu_k;
        }

        let mut adv = DVector::zeros(n_nu);
        advection_rhs(&self.grid, self.tau_nu, &nu_eff, &mut adv);
        out.rows_mut(2 * n_m, n_nu).copy_from(&adv);
        // inflow row follows the boundary signal
        out[2 * n_m] = (0..n_m).map(|k| out[k] * self.cos_xh[k]).sum();
    }

    fn observe(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mu = phi.rows(self.n_modes, self.n_modes);
        &self.obs_matrix * mu
    }

    fn project(&self, phi: &mut DVector<f64>) {
        let n_m = self.n_modes;
        let u_h: f64 = (0..n_m).map(|k| phi[k] * self.cos_xh[k]).sum();
        phi[2 * n_m] = u_h;
    }

    fn param_bounds(&self) -> Vec<(f64, f64)> {
        vec![self.beta_limits, self.tau_limits]
    }

    fn substeps(&self) -> usize {
        // the Chebyshev advection spectrum exceeds the RK4 stability region
        // at dt = 1e-4 with N_c = 50; two substeps keep |lambda dt| < 2.3
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Integrator;
    use approx::assert_relative_eq;

    fn zero_state(model: &RijkeModel) -> RijkeState {
        RijkeState {
            eta: DVector::zeros(model.n_modes),
            mu: DVector::zeros(model.n_modes),
            nu: DVector::zeros(model.grid.n_points()),
        }
    }

    #[test]
    fn heat_release_vanishes_at_rest() {
        assert_eq!(heat_release(0.0, 4.2, 10.0, 1.013e5), 0.0);
        for u in [-5.0, 0.3, 8.0] {
            assert_eq!(heat_release(u, 0.0, 10.0, 1.013e5), 0.0);
        }
    }

    #[test]
    fn heat_release_hand_value() {
        // u_delayed = 2/3 u_bar makes the square root argument exactly 1
        let u_bar = 10.0;
        let p_bar = 1.013e5;
        let q = heat_release(u_bar * (2.0 / 3.0), 4.2, u_bar, p_bar);
        let expected = u_bar * p_bar * 4.2 * (1.0 - (1.0f64 / 3.0).sqrt());
        assert_relative_eq!(q, expected, max_relative = 1e-14);
    }

    #[test]
    fn mean_flow_constants_match_the_design_values() {
        let model = RijkeModel::table_defaults();
        assert_relative_eq!(model.c_bar, 409.4, max_relative = 2e-3);
        assert_relative_eq!(model.rho_bar, 0.846, max_relative = 2e-3);
        // mode frequencies strictly increasing, first near 205 Hz
        assert_relative_eq!(model.omega[0] / (2.0 * std::f64::consts::PI), 204.7, max_relative = 2e-3);
        for w in model.omega.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let model = RijkeModel::table_defaults();
        let state = zero_state(&model);
        let d = rijke_rhs(&state, &RijkeParams { beta: 4.2, tau: 1.4e-3 }, &model).unwrap();
        assert_eq!(d.eta.amax(), 0.0);
        assert_eq!(d.mu.amax(), 0.0);
        assert_eq!(d.nu.amax(), 0.0);
    }

    #[test]
    fn delay_beyond_history_is_rejected() {
        let model = RijkeModel::table_defaults();
        let state = zero_state(&model);
        assert!(matches!(
            rijke_rhs(&state, &RijkeParams { beta: 4.2, tau: 2e-2 }, &model),
            Err(Error::DelayExceedsHistory { .. })
        ));
    }

    #[test]
    fn single_mode_without_heat_release_decays() {
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(0.0, 1.4e-3);
        let mut state = zero_state(&model);
        state.mu[0] = 100.0;
        let mut phi = state.to_phi();
        model.project(&mut phi);
        let dt = 1e-4;
        let mut integ = Integrator::new(&model, dt);
        let energy = |phi: &DVector<f64>| -> f64 {
            let rc = model.rho_bar * model.c_bar;
            (rc * phi[0]).powi(2) + phi[model.n_modes].powi(2)
        };
        // sample once per mode-1 period
        let period_steps = ((2.0 * std::f64::consts::PI / model.omega[0]) / dt).round() as usize;
        let mut last = energy(&phi);
        for _ in 0..5 {
            integ.advance(&mut phi, &alpha, period_steps).unwrap();
            let e = energy(&phi);
            assert!(e < last, "energy must decay: {e} !< {last}");
            last = e;
        }
    }

    #[test]
    fn pressure_vanishes_at_the_open_ends() {
        let model = RijkeModel::table_defaults();
        let mut state = zero_state(&model);
        for k in 0..model.n_modes {
            state.mu[k] = (k as f64 + 1.0).sin() + 0.5;
        }
        let p = pressure_observation(&state, &[0.0, model.l_x], &model).unwrap();
        assert!(p[0].abs() < 1e-10);
        assert!(p[1].abs() < 1e-10 * state.mu.amax() * model.n_modes as f64);
    }

    #[test]
    fn single_mode_pressure_at_midpoint() {
        let model = RijkeModel::table_defaults();
        let mut state = zero_state(&model);
        state.mu[0] = 1.0;
        let p = pressure_observation(&state, &[model.l_x / 2.0], &model).unwrap();
        assert_relative_eq!(p[0], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn sensor_layout_starts_at_the_heat_source() {
        let model = RijkeModel::table_defaults();
        assert_eq!(model.obs_locations.len(), 6);
        assert_eq!(model.obs_locations[0], model.x_h);
        let mut state = zero_state(&model);
        for k in 0..model.n_modes {
            state.mu[k] = 1.0 / (k as f64 + 1.0);
        }
        let all = pressure_observation(&state, &model.obs_locations, &model).unwrap();
        let first = pressure_observation(&state, &[model.x_h], &model).unwrap();
        assert_eq!(all[0], first[0]);
    }

    #[test]
    fn observation_is_linear_in_mu() {
        let model = RijkeModel::table_defaults();
        let mut state = zero_state(&model);
        for k in 0..model.n_modes {
            state.mu[k] = 0.3 * (k as f64 + 1.0);
        }
        let p1 = pressure_observation(&state, &model.obs_locations, &model).unwrap();
        let mut doubled = state.clone();
        doubled.mu *= 2.0;
        let p2 = pressure_observation(&doubled, &model.obs_locations, &model).unwrap();
        // powers of two scale exactly
        assert_eq!(p2, p1 * 2.0);
    }

    #[test]
    fn locations_outside_the_duct_are_rejected() {
        let model = RijkeModel::table_defaults();
        let state = zero_state(&model);
        assert!(matches!(
            pressure_observation(&state, &[1.2], &model),
            Err(Error::InvalidLocation(_, _))
        ));
    }

    #[test]
    fn advection_reproduces_the_delayed_boundary_history() {
        // drive the advection block alone with a frozen sinusoidal boundary;
        // the outflow end must reproduce the inflow delayed by tau_nu
        let grid = chebyshev_grid(50).unwrap();
        let tau_nu = 1e-2;
        let boundary = |t: f64| (2.0 * std::f64::consts::PI * 170.0 * t).sin();
        let boundary_dot = |t: f64| {
            2.0 * std::f64::consts::PI * 170.0 * (2.0 * std::f64::consts::PI * 170.0 * t).cos()
        };
        let n = grid.n_points();
        let mut nu = DVector::zeros(n);
        let dt: f64 = 5e-5;
        let mut t = 0.0;
        let steps = (3.0 * tau_nu / dt).round() as usize;
        let mut samples: Vec<(f64, f64)> = Vec::new(); // (predicted delayed, true delayed)
        let rhs = |nu: &DVector<f64>, t: f64| -> DVector<f64> {
            let mut nu_eff = nu.clone();
            nu_eff[0] = boundary(t);
            let mut out = DVector::zeros(n);
            advection_rhs(&grid, tau_nu, &nu_eff, &mut out);
            out[0] = boundary_dot(t);
            out
        };
        for _ in 0..steps {
            // RK4 with time-dependent boundary
            let k1 = rhs(&nu, t);
            let k2 = rhs(&(&nu + &k1 * (dt / 2.0)), t + dt / 2.0);
            let k3 = rhs(&(&nu + &k2 * (dt / 2.0)), t + dt / 2.0);
            let k4 = rhs(&(&nu + &k3 * dt), t + dt);
            nu += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            nu[0] = boundary(t + dt);
            t += dt;
            if t > tau_nu {
                samples.push((nu[n - 1], boundary(t - tau_nu)));
            }
        }
        let rms_err: f64 = (samples.iter().map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            / samples.iter().map(|(_, b)| b * b).sum::<f64>())
        .sqrt();
        assert!(rms_err < 0.01, "delay RMS error {rms_err}");
    }

    #[test]
    fn model_path_delayed_velocity_matches_recorded_history() {
        // run the full model and compare the interpolated delayed velocity
        // against the recorded u(x_h) history, for tau in {tau_nu/2, tau_nu}
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(4.2, 1.4e-3);
        let dt = 1e-4;
        let mut integ = Integrator::new(&model, dt);
        let mut state = zero_state(&model);
        state.eta[0] = 0.05;
        let mut phi = state.to_phi();
        model.project(&mut phi);
        // transient: one advection traversal plus growth of the oscillation
        integ.advance(&mut phi, &alpha, 3000).unwrap();
        let mut history: Vec<f64> = Vec::new();
        let eta_of = |phi: &DVector<f64>| phi.rows(0, model.n_modes).into_owned();
        for tau in [model.tau_nu / 2.0, model.tau_nu] {
            let delay_steps = (tau / dt).round() as usize;
            history.clear();
            let mut phi_run = phi.clone();
            let mut num = 0.0;
            let mut den = 0.0;
            for step in 0..3 * delay_steps {
                history.push(model.velocity_at_heat_source(&eta_of(&phi_run)));
                if step >= delay_steps {
                    let predicted = model.delayed_velocity(&phi_run, tau);
                    let truth = history[step - delay_steps];
                    num += (predicted - truth).powi(2);
                    den += truth * truth;
                }
                integ.step(&mut phi_run, &alpha).unwrap();
            }
            let rms = (num / den).sqrt();
            assert!(rms < 0.01, "tau {tau}: delayed velocity RMS {rms}");
        }
    }

    #[test]
    fn limit_cycle_frequency_is_near_the_first_mode() {
        let model = RijkeModel::table_defaults();
        let alpha = RijkeModel::alpha_from(4.2, 1.4e-3);
        let dt = 1e-4;
        let mut integ = Integrator::new(&model, dt);
        let mut state = zero_state(&model);
        state.eta[0] = 0.05;
        let mut phi = state.to_phi();
        model.project(&mut phi);
        integ.advance(&mut phi, &alpha, 10_000).unwrap();
        // the attractor is a 2-period limit cycle whose lines sit at the
        // acoustic frequencies f1 and 2 f1; spectral mass at incommensurate
        // control frequencies must be negligible
        let n_steps = 5000;
        let mut p = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            integ.step(&mut phi, &alpha).unwrap();
            p.push(model.observe(&phi)[0]);
        }
        let dft_mag = |f: f64| -> f64 {
            // Hann window keeps leakage from the strong lines out of the
            // control frequencies
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &v) in p.iter().enumerate() {
                let w = 0.5
                    * (1.0
                        - (2.0 * std::f64::consts::PI * k as f64 / (n_steps - 1) as f64).cos());
                let ph = 2.0 * std::f64::consts::PI * f * k as f64 * dt;
                re += w * v * ph.cos();
                im -= w * v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let f1 = model.omega[0] / (2.0 * std::f64::consts::PI);
        let harmonic = dft_mag(f1) + dft_mag(2.0 * f1);
        let control = dft_mag(0.71 * f1) + dft_mag(1.43 * f1) + dft_mag(2.61 * f1);
        assert!(
            harmonic > 20.0 * control,
            "acoustic lines do not dominate: harmonic {harmonic:.1} vs control {control:.1}"
        );
        // the state invariant nu[0] == u(x_h) holds after projection
        let u_h = model.velocity_at_heat_source(&phi.rows(0, model.n_modes).into_owned());
        assert_eq!(phi[2 * model.n_modes], u_h);
    }
}
