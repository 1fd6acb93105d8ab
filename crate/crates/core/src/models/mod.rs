//! Forecastable dynamical systems and the fixed-step RK4 integrator.

pub mod chebyshev;
pub mod rijke;
pub mod vdp;

use crate::error::{Error, Result};
use nalgebra::DVector;

pub use chebyshev::{chebyshev_grid, ChebyshevGrid};
pub use rijke::{heat_release, pressure_observation, rijke_rhs, RijkeModel, RijkeParams, RijkeState};
pub use vdp::{vdp_rhs, VdpModel, VdpParams};

/// A dynamical system with inferred parameters and a measurement map.
///
/// `phi` holds the state variables and `alpha` the inferred parameters;
/// both models keep `alpha` constant during a forecast.
pub trait ForecastModel: Send + Sync {
    fn n_phi(&self) -> usize;
    fn n_alpha(&self) -> usize;
    fn n_obs(&self) -> usize;

    /// Time derivative of `phi` written into `out`.
    fn rhs_into(&self, phi: &DVector<f64>, alpha: &DVector<f64>, out: &mut DVector<f64>);

    /// Measurement map applied to the state.
    fn observe(&self, phi: &DVector<f64>) -> DVector<f64>;

    /// Enforce algebraic constraints on the state (e.g. pinned boundary rows).
    fn project(&self, _phi: &mut DVector<f64>) {}

    /// Physical bounds for each inferred parameter, in `alpha` order.
    fn param_bounds(&self) -> Vec<(f64, f64)>;

    /// Internal RK4 substeps per sampling interval, for stiff subsystems.
    fn substeps(&self) -> usize {
        1
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step(
    rhs: impl Fn(&DVector<f64>) -> DVector<f64>,
    state: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if dt <= 0.0 {
        return Err(Error::IntegrationBlowup(0.0));
    }
    let k1 = rhs(state);
    let k2 = rhs(&(state + &k1 * (dt / 2.0)));
    let k3 = rhs(&(state + &k2 * (dt / 2.0)));
    let k4 = rhs(&(state + &k3 * dt));
    for k in [&k1, &k2, &k3, &k4] {
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationBlowup(dt));
        }
    }
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Fixed-step RK4 driver for one model, with preallocated stage buffers.
pub struct Integrator<'a> {
    pub model: &'a dyn ForecastModel,
    /// Sampling interval; each sample is integrated with `model.substeps()`
    /// internal RK4 steps.
    pub dt: f64,
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(model: &'a dyn ForecastModel, dt: f64) -> Self {
        let n = model.n_phi();
        Self {
            model,
            dt,
            k1: DVector::zeros(n),
            k2: DVector::zeros(n),
            k3: DVector::zeros(n),
            k4: DVector::zeros(n),
            tmp: DVector::zeros(n),
        }
    }

    /// Advance `phi` by one sampling interval `dt`.
    pub fn step(&mut self, phi: &mut DVector<f64>, alpha: &DVector<f64>) -> Result<()> {
        let n_sub = self.model.substeps().max(1);
        let h = self.dt / n_sub as f64;
        for _ in 0..n_sub {
            self.model.rhs_into(phi, alpha, &mut self.k1);
            self.tmp.copy_from(phi);
            self.tmp.axpy(h / 2.0, &self.k1, 1.0);
            self.model.rhs_into(&self.tmp, alpha, &mut self.k2);
            self.tmp.copy_from(phi);
            self.tmp.axpy(h / 2.0, &self.k2, 1.0);
            self.model.rhs_into(&self.tmp, alpha, &mut self.k3);
            self.tmp.copy_from(phi);
            self.tmp.axpy(h, &self.k3, 1.0);
            self.model.rhs_into(&self.tmp, alpha, &mut self.k4);
            phi.axpy(h / 6.0, &self.k1, 1.0);
            phi.axpy(h / 3.0, &self.k2, 1.0);
            phi.axpy(h / 3.0, &self.k3, 1.0);
            phi.axpy(h / 6.0, &self.k4, 1.0);
        }
        self.model.project(phi);
        if !phi.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationBlowup(self.dt));
        }
        Ok(())
    }

    /// Advance by `n` sampling intervals.
    pub fn advance(&mut self, phi: &mut DVector<f64>, alpha: &DVector<f64>, n: usize) -> Result<()> {
        for _ in 0..n {
            self.step(phi, alpha)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let state = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let next = rk4_step(|s| DVector::zeros(s.len()), &state, 1e-3).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn fourth_order_convergence_on_harmonic_oscillator() {
        // x'' = -x over one period; global error should scale as dt^4
        let rhs = |s: &DVector<f64>| DVector::from_vec(vec![s[1], -s[0]]);
        let period = 2.0 * std::f64::consts::PI;
        let run = |n_steps: usize| -> f64 {
            let dt = period / n_steps as f64;
            let mut state = DVector::from_vec(vec![1.0, 0.0]);
            for _ in 0..n_steps {
                state = rk4_step(rhs, &state, dt).unwrap();
            }
            ((state[0] - 1.0).powi(2) + state[1].powi(2)).sqrt()
        };
        let e1 = run(50);
        let e2 = run(100);
        let e3 = run(200);
        let slope12 = (e1 / e2).log2();
        let slope23 = (e2 / e3).log2();
        assert!((slope12 - 4.0).abs() < 0.2, "slope {slope12}");
        assert!((slope23 - 4.0).abs() < 0.2, "slope {slope23}");
    }

    #[test]
    fn non_finite_intermediate_is_an_error() {
        // rhs produces NaN once the state leaves the unit interval
        let rhs = |s: &DVector<f64>| DVector::from_vec(vec![(1.0 - s[0]).sqrt().recip()]);
        let state = DVector::from_vec(vec![2.0]);
        assert!(matches!(
            rk4_step(rhs, &state, 1e-2),
            Err(Error::IntegrationBlowup(_))
        ));
    }

    #[test]
    fn integrator_matches_free_function() {
        let model = VdpModel::table_defaults();
        let alpha = DVector::from_vec(vec![55.0, 75.0, 3.4]);
        let mut phi = DVector::from_vec(vec![0.2, 0.0]);
        let mut integ = Integrator::new(&model, 1e-4);
        integ.step(&mut phi, &alpha).unwrap();

        let reference = rk4_step(
            |s| {
                let mut out = DVector::zeros(2);
                model.rhs_into(s, &alpha, &mut out);
                out
            },
            &DVector::from_vec(vec![0.2, 0.0]),
            1e-4,
        )
        .unwrap();
        for i in 0..2 {
            assert_relative_eq!(phi[i], reference[i], max_relative = 1e-14);
        }
    }
}
