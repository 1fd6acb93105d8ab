//! Reservoir construction.

use super::sparse::SparseRowMatrix;
use super::ReservoirConfig;
use crate::error::Result;
use crate::rng::{stream, StreamId};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

/// Spectral radius of a dense matrix (Schur-based eigenvalues).
///
/// Plain power iteration stalls near 1e-3 relative accuracy on these sparse
/// reservoirs because the dominant eigenvalue is usually a complex pair, so
/// the dense solve is used for the unit-radius normalization.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max)
}

/// Growth-rate estimate of the spectral radius: geometric mean of the
/// per-step norm growth of repeated applications. Accurate to ~1e-3 on
/// random sparse matrices; used as an independent oracle in tests.
pub fn spectral_radius_growth_estimate(w: &SparseRowMatrix, iterations: usize, window: usize) -> f64 {
    let n = w.nrows;
    let mut x = DVector::from_element(n, 1.0);
    let mut log_growth = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut y = DVector::zeros(n);
        w.mul_add_into(&mut y, 1.0, &x);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_growth.push(norm.ln() - x.norm().ln());
        x = y / norm * x.norm();
    }
    let tail = &log_growth[iterations.saturating_sub(window)..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

/// Generate the fixed input and reservoir matrices.
///
/// The input matrix has dense random columns in U(-1, 1) mapping the N_q
/// inputs plus the delta_r channel. The reservoir has `connectivity`
/// nonzeros per row, rescaled to unit spectral radius; `rho` is applied at
/// step time. Deterministic given the config seed.
pub fn generate_reservoir(config: &ReservoirConfig, n_q: usize) -> Result<(DMatrix<f64>, SparseRowMatrix)> {
    let n_r = config.n_reservoir;
    let mut rng = stream(config.seed, StreamId::Reservoir);
    let w_in = DMatrix::from_fn(n_r, n_q + 1, |_, _| rng.random_range(-1.0..1.0));

    let mut triplets = Vec::with_capacity(n_r * config.connectivity);
    for row in 0..n_r {
        let mut cols: Vec<usize> = Vec::with_capacity(config.connectivity);
        while cols.len() < config.connectivity.min(n_r) {
            let c = rng.random_range(0..n_r);
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
        cols.sort_unstable();
        for c in cols {
            triplets.push((row, c, rng.random_range(-1.0..1.0)));
        }
    }
    let mut w = SparseRowMatrix::from_triplets(n_r, n_r, &triplets);
    let sr = spectral_radius(&w.to_dense());
    if sr > 0.0 {
        w.scale_values(1.0 / sr);
    }
    Ok((w_in, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let config = ReservoirConfig::new(60, 0.5, 0.9, 1e-3, 99);
        let (a_in, a_w) = generate_reservoir(&config, 3).unwrap();
        let (b_in, b_w) = generate_reservoir(&config, 3).unwrap();
        assert_eq!(a_in, b_in);
        assert_eq!(a_w, b_w);
    }

    #[test]
    fn reference_sizes_have_the_expected_shapes() {
        // N_r = 100 with one observable; N_r = 500 with six
        for (n_r, n_q) in [(100usize, 1usize), (500, 6)] {
            let config = ReservoirConfig::new(n_r, 0.5, 0.9, 1e-3, 1);
            let (w_in, w) = generate_reservoir(&config, n_q).unwrap();
            assert_eq!(w_in.shape(), (n_r, n_q + 1));
            assert_eq!(w.nrows, n_r);
            assert_eq!(w.ncols, n_r);
            assert_eq!(w.nnz(), n_r * 5);
        }
    }

    #[test]
    fn stored_reservoir_has_unit_spectral_radius() {
        let config = ReservoirConfig::new(100, 0.5, 0.9, 1e-3, 7);
        let (_, w) = generate_reservoir(&config, 1).unwrap();
        // dense eigenvalue recomputation on the stored matrix
        let sr = spectral_radius(&w.to_dense());
        assert!((sr - 1.0).abs() < 1e-6, "spectral radius {sr}");
        // independent growth-rate oracle
        let est = spectral_radius_growth_estimate(&w, 600, 200);
        assert!((est - 1.0).abs() < 1e-2, "growth estimate {est}");
    }
}
