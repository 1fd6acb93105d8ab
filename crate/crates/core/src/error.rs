//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by ensemble, model, network, and assimilation operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ensemble size m = {0}; need m >= 2")]
    InvalidEnsembleSize(usize),
    #[error("invalid spread sigma = {0}; must be >= 0")]
    InvalidSpread(f64),
    #[error("invalid inflation factor {0}; must be >= 1")]
    InvalidInflation(f64),
    #[error("non-finite state encountered in {0}")]
    NonFiniteState(&'static str),
    #[error("invalid Chebyshev grid size n_c = {0}; need n_c >= 2")]
    InvalidGrid(usize),
    #[error("time delay tau = {tau} exceeds history length tau_nu = {tau_nu}")]
    DelayExceedsHistory { tau: f64, tau_nu: f64 },
    #[error("observation location x = {0} outside the duct [0, {1}]")]
    InvalidLocation(f64, f64),
    #[error("integration blew up at t = {0}: non-finite intermediate state")]
    IntegrationBlowup(f64),
    #[error("covariance matrix is not symmetric positive definite")]
    InvalidCovariance,
    #[error("analysis failed: {0}")]
    AnalysisFailure(String),
    #[error("washout required: {0}")]
    WashoutRequired(&'static str),
    #[error("non-finite input to the network")]
    NonFiniteInput,
    #[error("training failed: {0}")]
    TrainingFailure(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("closed-loop Jacobian undefined: readout is rank-deficient")]
    JacobianUndefined,
    #[error("empty hyperparameter grid")]
    InvalidHyperGrid,
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("truth generation failed: {0}")]
    TruthGenerationFailure(String),
    #[error("invalid metrics window [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("insufficient washout data: needed {needed}, got {got}")]
    InsufficientWashoutData { needed: usize, got: usize },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("network format error: {0}")]
    NetworkFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
