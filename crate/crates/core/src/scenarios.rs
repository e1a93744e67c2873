//! Reproducible initial data and coefficient fields for experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::lattice::{Field, Grid};
use crate::sde_core::{Coefficient, CoefficientField, TimeProfile};

/// `exp(-|x - c|²/w²)` using the torus distance.
pub fn bump(grid: &Grid, center: &[f64], width: f64) -> Result<Field> {
    grid.check_point(center)?;
    if !(width > 0.0) {
        return Err(invalid("width", format!("{width} must be positive")));
    }
    let mut f = Field::zeros(grid);
    for (k, v) in f.values_mut().iter_mut().enumerate() {
        let d = grid.torus_distance(k, center);
        *v = (-(d * d) / (width * width)).exp();
    }
    Ok(f)
}

/// Bump placements drawn uniformly from a box of centers and a width range.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpFamily {
    pub center_lo: f64,
    pub center_hi: f64,
    pub width_lo: f64,
    pub width_hi: f64,
}

impl BumpFamily {
    pub fn sample(&self, grid: &Grid, count: usize, seed: u64) -> Result<Vec<Field>> {
        if !(self.center_lo <= self.center_hi && self.width_lo > 0.0 && self.width_lo <= self.width_hi) {
            return Err(invalid("bumps", "empty center or width range"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let center: Vec<f64> = (0..grid.dim())
                    .map(|_| rng.random_range(self.center_lo..=self.center_hi))
                    .collect();
                let width = rng.random_range(self.width_lo..=self.width_hi);
                bump(grid, &center, width)
            })
            .collect()
    }
}

/// Smooth field with `max |f| = 1`, a sum of a few random low Fourier modes.
pub fn random_profile(grid: &Grid, modes: usize, rng: &mut impl Rng) -> Field {
    let l = grid.extent();
    let terms: Vec<([f64; 2], f64, f64)> = (0..modes.max(1))
        .map(|_| {
            let k = [
                rng.random_range(0..=3) as f64,
                if grid.dim() == 2 { rng.random_range(0..=3) as f64 } else { 0.0 },
            ];
            (k, rng.random_range(-1.0..=1.0), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let f = Field::from_fn(grid, |p| {
        terms
            .iter()
            .map(|(k, amp, ph)| amp * (std::f64::consts::TAU * (k[0] * p[0] + k[1] * p[1]) / l + ph).cos())
            .sum()
    });
    let m = f.max_abs();
    if m > 0.0 {
        f.scale(1.0 / m)
    } else {
        Field::from_fn(grid, |_| 1.0)
    }
}

/// Space-time coefficients with `‖a‖_∞ ≤ a_max` and `‖b‖_∞ ≤ b_max`.
pub fn random_coefficients(grid: &Grid, a_max: f64, b_max: f64, seed: u64) -> CoefficientField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let component = |amp: f64, rng: &mut ChaCha8Rng| {
        let spatial = random_profile(grid, 3, rng).scale(amp);
        let temporal = TimeProfile::Cosine {
            mean: 0.5,
            amplitude: 0.5,
            frequency: rng.random_range(0.5..=6.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        };
        Coefficient::Separable { spatial, temporal }
    };
    let a = component(a_max, &mut rng);
    let b = component(b_max, &mut rng);
    CoefficientField::new(a, b)
}
