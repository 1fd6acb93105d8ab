//! Augmented-state ensembles and their statistics.
//!
//! An augmented state stacks the model state variables, the inferred
//! parameters, and the mapped observables into one vector, so the analysis
//! step can treat the measurement operator as a linear selector of the
//! trailing block.

use crate::error::{Error, Result};
use crate::rng::{stream, Rng, StreamId};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// One ensemble member: state variables, inferred parameters, observables.
///
/// The observables block always equals the measurement map applied to `phi`
/// at the same instant; callers re-derive it after every forecast or
/// analysis (see [`AugmentedState::rederive_observables`]).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub phi: DVector<f64>,
    pub alpha: DVector<f64>,
    pub observables: DVector<f64>,
}

impl AugmentedState {
    pub fn new(phi: DVector<f64>, alpha: DVector<f64>, observables: DVector<f64>) -> Self {
        Self { phi, alpha, observables }
    }

    pub fn n_phi(&self) -> usize {
        self.phi.len()
    }

    pub fn n_alpha(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observables.len()
    }

    /// Total augmented length N = N_phi + N_alpha + N_q.
    pub fn len(&self) -> usize {
        self.phi.len() + self.alpha.len() + self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenate into a single vector [phi; alpha; observables].
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        v.rows_mut(0, self.phi.len()).copy_from(&self.phi);
        v.rows_mut(self.phi.len(), self.alpha.len()).copy_from(&self.alpha);
        v.rows_mut(self.phi.len() + self.alpha.len(), self.observables.len())
            .copy_from(&self.observables);
        v
    }

    /// Split a concatenated vector back into blocks.
    pub fn from_vector(v: &DVector<f64>, n_phi: usize, n_alpha: usize, n_obs: usize) -> Self {
        assert_eq!(v.len(), n_phi + n_alpha + n_obs, "augmented length mismatch");
        Self {
            phi: v.rows(0, n_phi).into_owned(),
            alpha: v.rows(n_phi, n_alpha).into_owned(),
            observables: v.rows(n_phi + n_alpha, n_obs).into_owned(),
        }
    }

    /// Recompute the observables block from `phi` with the measurement map.
    pub fn rederive_observables(&mut self, observe: impl Fn(&DVector<f64>) -> DVector<f64>) {
        self.observables = observe(&self.phi);
    }
}

/// A set of `m` augmented states plus one seeded RNG stream per member.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<AugmentedState>,
    pub rng_streams: Vec<Rng>,
}

impl Ensemble {
    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn state_len(&self) -> usize {
        self.members.first().map_or(0, AugmentedState::len)
    }

    pub fn n_obs(&self) -> usize {
        self.members.first().map_or(0, AugmentedState::n_obs)
    }

    pub fn n_alpha(&self) -> usize {
        self.members.first().map_or(0, AugmentedState::n_alpha)
    }

    /// Member states as concatenated vectors.
    pub fn to_vectors(&self) -> Vec<DVector<f64>> {
        self.members.iter().map(AugmentedState::to_vector).collect()
    }

    /// Replace member states from concatenated vectors, keeping RNG streams.
    pub fn set_from_vectors(&mut self, vectors: &[DVector<f64>]) {
        assert_eq!(vectors.len(), self.m());
        let (n_phi, n_alpha, n_obs) = {
            let first = &self.members[0];
            (first.n_phi(), first.n_alpha(), first.n_obs())
        };
        for (member, v) in self.members.iter_mut().zip(vectors) {
            *member = AugmentedState::from_vector(v, n_phi, n_alpha, n_obs);
        }
    }
}

/// Ensemble mean and covariance.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl CovarianceEstimate {
    /// Largest relative asymmetry |c_ij - c_ji| / max|c|.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        let n = self.cov.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.cov[(i, j)] - self.cov[(j, i)]).abs() / scale);
            }
        }
        worst
    }

    /// Smallest eigenvalue (symmetric eigensolve).
    pub fn min_eigenvalue(&self) -> f64 {
        self.cov
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Draw the initial ensemble around a mean state.
///
/// Each phi/alpha component is perturbed with a Gaussian of standard
/// deviation `sigma * |mean component|` (multiplicative spread, matching the
/// dimensionless spreads of the reference configurations). Observables are
/// re-derived from each member's phi.
pub fn init_ensemble(
    mean_state: &AugmentedState,
    sigma_phi: f64,
    sigma_alpha: f64,
    m: usize,
    seed: u64,
    observe: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<Ensemble> {
    if m < 2 {
        return Err(Error::InvalidEnsembleSize(m));
    }
    if sigma_phi < 0.0 {
        return Err(Error::InvalidSpread(sigma_phi));
    }
    if sigma_alpha < 0.0 {
        return Err(Error::InvalidSpread(sigma_alpha));
    }
    let mut members = Vec::with_capacity(m);
    let mut rng_streams = Vec::with_capacity(m);
    for j in 0..m {
        let mut rng = stream(seed, StreamId::EnsembleInit(j as u64));
        let phi = DVector::from_iterator(
            mean_state.phi.len(),
            mean_state.phi.iter().map(|&c| {
                let z: f64 = rng.sample(StandardNormal);
                c + sigma_phi * c.abs() * z
            }),
        );
        let alpha = DVector::from_iterator(
            mean_state.alpha.len(),
            mean_state.alpha.iter().map(|&c| {
                let z: f64 = rng.sample(StandardNormal);
                c + sigma_alpha * c.abs() * z
            }),
        );
        let observables = observe(&phi);
        members.push(AugmentedState::new(phi, alpha, observables));
        rng_streams.push(stream(seed, StreamId::ObsPerturbation(j as u64)));
    }
    Ok(Ensemble { members, rng_streams })
}

/// Component-wise arithmetic mean over members.
pub fn ensemble_mean(e: &Ensemble) -> DVector<f64> {
    let n = e.state_len();
    let mut mean = DVector::zeros(n);
    for member in &e.members {
        mean += member.to_vector();
    }
    mean / e.m() as f64
}

/// Sample covariance (1/(m-1)) sum (psi_j - mean) (psi_j - mean)^T.
pub fn ensemble_covariance(e: &Ensemble) -> Result<CovarianceEstimate> {
    if e.m() < 2 {
        return Err(Error::InvalidEnsembleSize(e.m()));
    }
    let mean = ensemble_mean(e);
    let n = mean.len();
    let mut cov = DMatrix::zeros(n, n);
    for member in &e.members {
        let d = member.to_vector() - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (e.m() - 1) as f64;
    Ok(CovarianceEstimate { mean, cov })
}

/// Widen the spread about the ensemble mean: psi_j <- mean + rho (psi_j - mean).
pub fn inflate(e: &Ensemble, rho_infl: f64) -> Result<Ensemble> {
    if rho_infl < 1.0 {
        return Err(Error::InvalidInflation(rho_infl));
    }
    let mean = ensemble_mean(e);
    let mut out = e.clone();
    let vectors: Vec<DVector<f64>> = e
        .to_vectors()
        .into_iter()
        .map(|v| &mean + (v - &mean) * rho_infl)
        .collect();
    out.set_from_vectors(&vectors);
    Ok(out)
}
