//! Fourier diagonalization of the periodic five/three-point Laplacian.
//!
//! The discrete Laplacian is circulant, so every function of it is a Fourier
//! multiplier. `symbol` holds the eigenvalues of `-Δ_h`, which are `≥ 0`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{laplacian, Field, Grid};

#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    symbol: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

/// Eigenvalue of `-Δ_h` for one axis wavenumber index.
pub fn axis_eigenvalue(grid: &Grid, k: usize) -> f64 {
    let h = grid.spacing();
    let n = grid.points_per_axis() as f64;
    (2.0 / (h * h)) * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n).cos())
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis: Vec<f64> = (0..n).map(|k| axis_eigenvalue(grid, k)).collect();
        let symbol = (0..grid.node_count())
            .map(|node| {
                let idx = grid.unflatten(node);
                (0..grid.dim()).map(|a| axis[idx[a]]).sum()
            })
            .collect();
        Self {
            grid: *grid,
            forward,
            inverse,
            symbol,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalues of `-Δ_h` in the same flat layout as fields.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        match self.grid.dim() {
            1 => plan.process(data),
            _ => {
                // rows are contiguous
                plan.process(data);
                let mut column = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        column[i] = data[i * n + j];
                    }
                    plan.process(&mut column);
                    for i in 0..n {
                        data[i * n + j] = column[i];
                    }
                }
            }
        }
    }

    /// Applies the multiplier `m(μ)` where `μ` runs over the eigenvalues of `-Δ_h`.
    pub fn apply(&self, field: &Field, multiplier: impl Fn(f64) -> f64) -> Result<Field> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut data: Vec<Complex64> = field
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform(&mut data, &self.forward);
        let norm = 1.0 / self.grid.node_count() as f64;
        for (c, &mu) in data.iter_mut().zip(&self.symbol) {
            *c *= multiplier(mu) * norm;
        }
        self.transform(&mut data, &self.inverse);
        Field::from_values(&self.grid, data.into_iter().map(|c| c.re).collect())
    }

    /// `e^{tΔ_h} f`.
    pub fn heat_semigroup(&self, field: &Field, t: f64) -> Result<Field> {
        self.apply(field, |mu| (-t * mu).exp())
    }

    /// Solves `(I - dt Δ_h) x = rhs` and checks the residual against `tol`.
    pub fn implicit_solve(&self, rhs: &Field, dt: f64, tol: f64) -> Result<Field> {
        let x = self.apply(rhs, |mu| 1.0 / (1.0 + dt * mu))?;
        let scale = rhs.norm_sq().sqrt();
        if scale > 0.0 {
            let lap = laplacian(&x);
            let resid = x
                .values()
                .iter()
                .zip(lap.values())
                .zip(rhs.values())
                .map(|((xi, li), ri)| (xi - dt * li - ri).powi(2))
                .sum::<f64>()
                .sqrt()
                * rhs.grid().cell_volume().sqrt()
                / scale;
            if !(resid <= tol) {
                return Err(Error::SolveFailed { residual: resid });
            }
        }
        Ok(x)
    }
}
