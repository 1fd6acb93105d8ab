//! Echo state network bias estimator.
//!
//! A fixed sparse reservoir driven by the innovation signal, with a ridge-
//! trained linear readout. The network runs in open loop (driven by data)
//! during training, washout, and re-initialization, and autonomously in
//! closed loop between analysis steps.

pub mod generate;
pub mod io;
pub mod sparse;
pub mod train;
pub mod validation;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use generate::{generate_reservoir, spectral_radius};
pub use sparse::SparseRowMatrix;
pub use train::{generate_and_train, input_normalization, noisy_inputs, train};
pub use validation::{recycle_validation, HyperGrid, RvOutcome};

/// Construction and stepping hyperparameters of the reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// Number of reservoir states N_r.
    pub n_reservoir: usize,
    /// Nonzeros per reservoir row.
    pub connectivity: usize,
    /// Input scaling sigma_in.
    pub sigma_in: f64,
    /// Spectral radius rho applied at step time.
    pub rho: f64,
    /// Tikhonov regularization.
    pub lambda: f64,
    /// Symmetry-breaking constant on the bias input channel.
    pub delta_r: f64,
    /// Std of the regularizing input noise as a fraction of each training
    /// channel's own std.
    pub input_noise: f64,
    /// Network time step (s).
    pub dt_esn: f64,
    /// Reservoir generation seed.
    pub seed: u64,
}

impl ReservoirConfig {
    pub fn new(n_reservoir: usize, sigma_in: f64, rho: f64, dt_esn: f64, seed: u64) -> Self {
        Self {
            n_reservoir,
            connectivity: 5,
            sigma_in,
            rho,
            lambda: 1e-16,
            delta_r: 0.1,
            input_noise: 0.03,
            dt_esn,
            seed,
        }
    }

    pub fn validate(&self, n_q: usize) -> Result<()> {
        if self.n_reservoir < 10 * n_q {
            return Err(Error::TrainingFailure(format!(
                "n_reservoir = {} too small for {} observables (need >= {})",
                self.n_reservoir,
                n_q,
                10 * n_q
            )));
        }
        if self.sigma_in <= 0.0 || self.rho <= 0.0 {
            return Err(Error::TrainingFailure(
                "sigma_in and rho must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A trained network: fixed reservoir, trained readout, normalization.
///
/// The reservoir matrix is stored with unit spectral radius; `config.rho`
/// scales it at step time, so hyperparameter search does not regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEsn {
    /// Input matrix, N_r x (N_q + 1); the last column drives the delta_r channel.
    pub w_in: DMatrix<f64>,
    /// Reservoir matrix, N_r x N_r, unit spectral radius.
    pub w: SparseRowMatrix,
    /// Readout, N_q x (N_r + 1); the last column is the affine term.
    pub w_out: DMatrix<f64>,
    /// Input normalization, g_q = 1 / range of training component q.
    pub g: DVector<f64>,
    pub config: ReservoirConfig,
}

/// Reservoir state plus the most recent output (the closed-loop input).
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub r: DVector<f64>,
    pub last_output: Option<DVector<f64>>,
}

impl ReservoirState {
    pub fn zero(n_reservoir: usize) -> Self {
        Self { r: DVector::zeros(n_reservoir), last_output: None }
    }
}

impl TrainedEsn {
    pub fn n_reservoir(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn n_q(&self) -> usize {
        self.w_in.ncols() - 1
    }

    /// Pre-activation sigma_in W_in [i . g; delta_r] + rho W r.
    fn preactivation(&self, r: &DVector<f64>, input: &DVector<f64>) -> DVector<f64> {
        let n_q = self.n_q();
        let scaled = input.component_mul(&self.g);
        let mut z = self.w_in.column(n_q) * (self.config.sigma_in * self.config.delta_r);
        z.gemv(self.config.sigma_in, &self.w_in.columns(0, n_q), &scaled, 1.0);
        self.w.mul_add_into(&mut z, self.config.rho, r);
        z
    }

    fn readout(&self, r: &DVector<f64>) -> DVector<f64> {
        let n_r = self.n_reservoir();
        let mut out = self.w_out.column(n_r).into_owned();
        out.gemv(1.0, &self.w_out.columns(0, n_r), r, 1.0);
        out
    }

    /// One externally driven step: returns the advanced state and its output.
    pub fn step_open_loop(
        &self,
        state: &ReservoirState,
        input: &DVector<f64>,
    ) -> Result<(ReservoirState, DVector<f64>)> {
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let z = self.preactivation(&state.r, input);
        let r_next = z.map(f64::tanh);
        let output = self.readout(&r_next);
        Ok((ReservoirState { r: r_next, last_output: Some(output.clone()) }, output))
    }

    /// One autonomous step: the previous output is the input.
    pub fn step_closed_loop(&self, state: &ReservoirState) -> Result<(ReservoirState, DVector<f64>)> {
        let input = state
            .last_output
            .as_ref()
            .ok_or(Error::WashoutRequired("closed-loop step before initialization"))?
            .clone();
        self.step_open_loop(state, &input)
    }

    /// Initialize the reservoir by driving it from zero with a data sequence.
    pub fn washout(&self, inputs: &[DVector<f64>]) -> Result<(ReservoirState, DVector<f64>)> {
        if inputs.is_empty() {
            return Err(Error::WashoutRequired("empty washout sequence"));
        }
        let mut state = ReservoirState::zero(self.n_reservoir());
        let mut output = DVector::zeros(self.n_q());
        for input in inputs {
            let (next, out) = self.step_open_loop(&state, input)?;
            state = next;
            output = out;
        }
        Ok((state, output))
    }

    /// Open-loop Jacobian J = -d b(t_{k+1}) / d i(t_k), evaluated at the given
    /// reservoir state and input.
    ///
    /// The leading minus sign reflects that the network input at an analysis
    /// step is the innovation d - M psi, so d b / d(M psi) = -d b / d i.
    pub fn jacobian_open_loop(&self, state: &ReservoirState, input: &DVector<f64>) -> DMatrix<f64> {
        let n_q = self.n_q();
        let n_r = self.n_reservoir();
        let z = self.preactivation(&state.r, input);
        let t = z.map(|v| 1.0 - v.tanh().powi(2));
        // -W_out1 diag(t) sigma_in W_in1 diag(g)
        let mut inner = self.w_in.columns(0, n_q).into_owned() * self.config.sigma_in;
        for i in 0..n_r {
            for q in 0..n_q {
                inner[(i, q)] *= t[i] * self.g[q];
            }
        }
        -(self.w_out.columns(0, n_r) * inner)
    }

    /// Closed-loop Jacobian d b(t_{k+1}) / d i(t_k) with the reservoir
    /// feedback entering through the readout pseudo-inverse.
    pub fn jacobian_closed_loop(&self, state: &ReservoirState) -> Result<DMatrix<f64>> {
        let n_q = self.n_q();
        let n_r = self.n_reservoir();
        let input = state
            .last_output
            .as_ref()
            .ok_or(Error::WashoutRequired("closed-loop Jacobian before initialization"))?;
        let w_out1 = self.w_out.columns(0, n_r);
        // right pseudo-inverse W_out1^T (W_out1 W_out1^T)^-1 needs full row rank
        let gram = &w_out1 * w_out1.transpose();
        let chol = nalgebra::Cholesky::new(gram).ok_or(Error::JacobianUndefined)?;
        let pinv = w_out1.transpose() * chol.inverse();

        let z = self.preactivation(&state.r, input);
        let t = z.map(|v| 1.0 - v.tanh().powi(2));
        let mut inner = self.w_in.columns(0, n_q).into_owned() * self.config.sigma_in;
        for i in 0..n_r {
            for q in 0..n_q {
                inner[(i, q)] *= self.g[q];
            }
        }
        // feedback term rho W pinv
        let mut feedback = DMatrix::zeros(n_r, n_q);
        for q in 0..n_q {
            let col = pinv.column(q).into_owned();
            let mut acc = DVector::zeros(n_r);
            self.w.mul_add_into(&mut acc, self.config.rho, &col);
            feedback.column_mut(q).copy_from(&acc);
        }
        inner += feedback;
        for i in 0..n_r {
            for q in 0..n_q {
                inner[(i, q)] *= t[i];
            }
        }
        Ok(self.w_out.columns(0, n_r) * inner)
    }
}
