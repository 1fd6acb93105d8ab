//! Chebyshev collocation grid on [0, 1].

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVectorView};
use std::f64::consts::PI;

/// Collocation points X_i = (1 - cos(i pi / N_c)) / 2 with the first-derivative
/// matrix and barycentric interpolation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevGrid {
    /// N_c + 1 points, ascending in [0, 1].
    pub points: Vec<f64>,
    /// (N_c+1) x (N_c+1) differentiation matrix d/dX on the points.
    pub diff_matrix: DMatrix<f64>,
    /// Barycentric weights of the points (common scale irrelevant).
    pub bary_weights: Vec<f64>,
}

/// Build the grid and differentiation matrix for `n_c + 1` points.
pub fn chebyshev_grid(n_c: usize) -> Result<ChebyshevGrid> {
    if n_c < 2 {
        return Err(Error::InvalidGrid(n_c));
    }
    let n = n_c;
    let points: Vec<f64> = (0..=n)
        .map(|i| 0.5 * (1.0 - (i as f64 * PI / n as f64).cos()))
        .collect();
    // Chebyshev-Lobatto barycentric weights survive the affine map unchanged
    let bary_weights: Vec<f64> = (0..=n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            if i == 0 || i == n {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect();
    let mut diff_matrix = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut diag = 0.0;
        for j in 0..=n {
            if i != j {
                let v = (bary_weights[j] / bary_weights[i]) / (points[i] - points[j]);
                diff_matrix[(i, j)] = v;
                diag -= v;
            }
        }
        // negative-sum trick: rows annihilate constants exactly
        diff_matrix[(i, i)] = diag;
    }
    Ok(ChebyshevGrid { points, bary_weights, diff_matrix })
}

impl ChebyshevGrid {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Barycentric Lagrange interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: DVectorView<'_, f64>, x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.points.len() {
            let dx = x - self.points[i];
            if dx.abs() < 1e-14 {
                return values[i];
            }
            let w = self.bary_weights[i] / dx;
            num += w * values[i];
            den += w;
        }
        num / den
    }
}
