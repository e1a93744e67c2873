//! Reproducible Monte Carlo over Brownian paths.
//!
//! Path `i` draws its increments from ChaCha stream `i` keyed by the base
//! seed, so a path's randomness never depends on scheduling. Per-path values
//! are collected in index order and reduced with a fixed pairwise tree, so
//! the bits of every estimate are independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::Field;
use crate::sde_core::{BrownianPath, CoefficientField, Stepper, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl EnsembleSpec {
    pub fn new(paths: usize, base_seed: u64) -> Self {
        Self {
            paths,
            base_seed,
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    /// Brownian path `i`, sampled on `fine_steps` and aggregated to `steps`.
    pub fn path(&self, i: usize, horizon: f64, steps: usize, fine_steps: usize) -> Result<BrownianPath> {
        let fine = BrownianPath::sample_stream(horizon, fine_steps, self.base_seed, i as u64)?;
        if fine_steps == steps {
            Ok(fine)
        } else if fine_steps % steps == 0 {
            fine.coarsen(fine_steps / steps)
        } else {
            Err(invalid(
                "steps",
                format!("{steps} does not divide the sampling resolution {fine_steps}"),
            ))
        }
    }
}

/// Everything needed to produce one trajectory per path.
#[derive(Debug, Clone, Copy)]
pub struct SolverInputs<'a> {
    pub stepper: &'a Stepper,
    pub phi0: &'a Field,
    pub coeffs: &'a CoefficientField,
    pub horizon: f64,
    pub steps: usize,
    /// Resolution at which increments are drawn; a multiple of `steps`.
    /// Runs sharing `fine_steps` see the same Brownian paths.
    pub fine_steps: usize,
}

impl<'a> SolverInputs<'a> {
    pub fn new(
        stepper: &'a Stepper,
        phi0: &'a Field,
        coeffs: &'a CoefficientField,
        horizon: f64,
        steps: usize,
    ) -> Self {
        Self {
            stepper,
            phi0,
            coeffs,
            horizon,
            steps,
            fine_steps: steps,
        }
    }

    pub fn with_fine_steps(mut self, fine_steps: usize) -> Self {
        self.fine_steps = fine_steps;
        self
    }

    pub fn with_phi0(mut self, phi0: &'a Field) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// `None` when a single path makes the standard error undefined.
    pub se: Option<f64>,
    pub paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Estimate {
    pub fn from_values(values: &[f64], keep: bool) -> Self {
        let m = values.len();
        let first = values.first().copied().unwrap_or(0.0);
        let (mean, se) = if values.iter().all(|v| v.to_bits() == first.to_bits()) {
            (first, (m > 1).then_some(0.0))
        } else {
            let mean = pairwise_sum(values) / m as f64;
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            let se = (m > 1).then(|| (pairwise_sum(&dev) / (m as f64 - 1.0) / m as f64).sqrt());
            (mean, se)
        };
        Self {
            mean,
            se,
            paths: m,
            values: keep.then(|| values.to_vec()),
        }
    }

    /// Standard error, treating an undefined one as zero.
    pub fn se_or_zero(&self) -> f64 {
        self.se.unwrap_or(0.0)
    }
}

/// Fixed-shape pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        values.iter().fold(0.0, |acc, v| acc + v)
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Per-path vectors of a fixed width, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    paths: usize,
    width: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let paths = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Degenerate("functional returned ragged outputs".into()));
        }
        Ok(Self {
            paths,
            width,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.paths).map(|i| self.data[i * self.width + j]).collect()
    }

    pub fn estimate(&self, j: usize) -> Estimate {
        Estimate::from_values(&self.column(j), false)
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        (0..self.width).map(|j| self.estimate(j)).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.width).map(|j| self.estimate(j).mean).collect()
    }

    /// Estimate of a per-path scalar derived from each row.
    pub fn derive(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let vals: Vec<f64> = (0..self.paths).map(|i| f(self.row(i))).collect();
        Estimate::from_values(&vals, false)
    }
}

fn run_parallel<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Degenerate(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Evaluates a vector-valued functional of the trajectory on every path.
///
/// When the noise coefficient vanishes every path yields the same
/// trajectory, so it is solved once and its value replicated.
pub fn sample_paths<F>(spec: &EnsembleSpec, inputs: &SolverInputs<'_>, functional: F) -> Result<Samples>
where
    F: Fn(&Trajectory) -> Result<Vec<f64>> + Sync,
{
    if spec.paths == 0 {
        return Err(invalid("paths", "at least one path is required"));
    }
    let solve_one = |i: usize| -> Result<Vec<f64>> {
        let path = if inputs.coeffs.is_deterministic() {
            BrownianPath::zero(inputs.horizon, inputs.steps)
        } else {
            spec.path(i, inputs.horizon, inputs.steps, inputs.fine_steps)?
        };
        let traj = inputs
            .stepper
            .solve_forward(inputs.phi0, inputs.coeffs, inputs.horizon, &path)?;
        functional(&traj)
    };
    let tag = |i: usize, e: Error| Error::PathFailed {
        path: i,
        source: Box::new(e),
    };
    if inputs.coeffs.is_deterministic() {
        let row = solve_one(0).map_err(|e| tag(0, e))?;
        return Samples::from_rows(vec![row; spec.paths]);
    }
    let rows: Vec<Result<Vec<f64>>> = run_parallel(spec.workers, || {
        (0..spec.paths)
            .into_par_iter()
            .map(|i| solve_one(i).map_err(|e| tag(i, e)))
            .collect()
    })?;
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Samples::from_rows(rows)
}

/// `E[functional(φ)]` with its standard error.
pub fn expect<F>(spec: &EnsembleSpec, inputs: &SolverInputs<'_>, functional: F) -> Result<Estimate>
where
    F: Fn(&Trajectory) -> Result<f64> + Sync,
{
    let samples = sample_paths(spec, inputs, |traj| Ok(vec![functional(traj)?]))?;
    Ok(Estimate::from_values(&samples.column(0), false))
}

/// Time-indexed expectations of a functional evaluated at every time node.
pub fn expect_trace<F>(spec: &EnsembleSpec, inputs: &SolverInputs<'_>, functional: F) -> Result<Vec<Estimate>>
where
    F: Fn(&Field, f64) -> Result<f64> + Sync,
{
    let samples = sample_paths(spec, inputs, |traj| {
        traj.fields()
            .iter()
            .zip(traj.times())
            .map(|(f, &t)| functional(f, t))
            .collect()
    })?;
    Ok(samples.estimates())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;
    use crate::sde_core::constant_coeff_mean_energy;

    fn setup() -> (Grid, Stepper, Field) {
        let g = Grid::new(1, 16.0, 128).unwrap();
        let s = Stepper::new(&g);
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        (g, s, phi0)
    }

    #[test]
    fn pairwise_sum_is_exact_on_small_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn deterministic_integrand_has_zero_se() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.5, 0.0);
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.5, 64);
        let est = expect(&EnsembleSpec::new(16, 1), &inputs, |t| Ok(t.last().norm_sq())).unwrap();
        assert_eq!(est.se, Some(0.0));
        let single = s
            .solve_forward(&phi0, &c, 0.5, &BrownianPath::zero(0.5, 64))
            .unwrap()
            .last()
            .norm_sq();
        assert_eq!(est.mean, single);
    }

    #[test]
    fn single_path_has_undefined_se() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.5, 0.3);
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.5, 32);
        let est = expect(&EnsembleSpec::new(1, 1), &inputs, |t| Ok(t.last().norm_sq())).unwrap();
        assert!(est.se.is_none());
        assert!(est.mean > 0.0);
    }

    #[test]
    fn energy_matches_closed_form() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.5, 0.3);
        let t = 0.5;
        let inputs = SolverInputs::new(&s, &phi0, &c, t, 256);
        let est = expect(&EnsembleSpec::new(2000, 42), &inputs, |tr| Ok(tr.last().norm_sq())).unwrap();
        let exact = constant_coeff_mean_energy(s.spectral(), &phi0, 0.5, 0.3, t).unwrap();
        let se = est.se.unwrap();
        assert!((est.mean - exact).abs() <= 3.0 * se + 0.02 * exact, "{} vs {exact}, se {se}", est.mean);
    }

    #[test]
    fn traces_are_independent_of_worker_count() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.2, 0.4);
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.25, 32);
        let run = |w| {
            expect_trace(&EnsembleSpec::new(37, 5).with_workers(w), &inputs, |f, _| Ok(f.norm_sq()))
                .unwrap()
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.len(), 33);
        for (a, b) in one.iter().zip(&four) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.se.unwrap().to_bits(), b.se.unwrap().to_bits());
        }
    }

    #[test]
    fn zero_datum_and_heat_traces() {
        let (g, s, _) = setup();
        let zero = Field::zeros(&g);
        let c = CoefficientField::constant(0.2, 0.4);
        let inputs = SolverInputs::new(&s, &zero, &c, 0.25, 16);
        let tr = expect_trace(&EnsembleSpec::new(8, 5), &inputs, |f, _| Ok(f.norm_sq())).unwrap();
        assert!(tr.iter().all(|e| e.mean == 0.0));
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let heat = CoefficientField::heat();
        let inputs = SolverInputs::new(&s, &phi0, &heat, 0.25, 16);
        let tr = expect_trace(&EnsembleSpec::new(8, 5), &inputs, |f, _| Ok(f.norm_sq())).unwrap();
        assert!(tr.iter().all(|e| e.se == Some(0.0)));
    }

    #[test]
    fn failing_functional_reports_path() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.2, 0.4);
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.25, 8);
        let err = expect(&EnsembleSpec::new(4, 5), &inputs, |t| {
            if t.path().stream() == 2 {
                Err(Error::Degenerate("boom".into()))
            } else {
                Ok(1.0)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::PathFailed { path: 2, .. }));
    }

    #[test]
    fn common_random_numbers_across_functionals() {
        let (_, s, phi0) = setup();
        let c = CoefficientField::constant(0.2, 0.4);
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.25, 8);
        let spec = EnsembleSpec::new(6, 9);
        let a = sample_paths(&spec, &inputs, |t| Ok(vec![t.path().cumulative()[8]])).unwrap();
        let b = sample_paths(&spec, &inputs, |t| Ok(vec![t.path().cumulative()[8]])).unwrap();
        assert_eq!(a, b);
        // refinement keeps the endpoint of each path
        let fine = inputs.with_steps(16).with_fine_steps(16);
        let coarse = inputs.with_fine_steps(16);
        let f = sample_paths(&spec, &fine, |t| Ok(vec![t.path().cumulative()[16]])).unwrap();
        let c2 = sample_paths(&spec, &coarse, |t| Ok(vec![t.path().cumulative()[8]])).unwrap();
        for i in 0..6 {
            assert!((f.row(i)[0] - c2.row(i)[0]).abs() < 1e-14);
        }
    }
}
