//! Regularized bias-aware ensemble Kalman filter (r-EnKF) with an echo
//! state network bias estimator, plus twin-experiment harnesses on two
//! nonlinear oscillator models.

pub mod assimilation;
pub mod ensemble;
pub mod esn;
pub mod filters;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod training;
pub mod truth;
pub mod series;

pub use ensemble::{
    ensemble_covariance, ensemble_mean, inflate, init_ensemble, AugmentedState, CovarianceEstimate,
    Ensemble,
};
pub use error::{Error, Result};
pub use series::TimeSeries;
