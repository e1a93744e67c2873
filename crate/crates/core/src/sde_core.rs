//! Time integration of `dφ - Δφ dt = aφ dt + bφ dW(t)` on the torus.
//!
//! Diffusion is implicit, the potential and the noise are explicit (Itô):
//! `(I - dt Δ_h) φ_{k+1} = φ_k + dt a(·,t_k) φ_k + b(·,t_k) φ_k ΔW_k`.

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::lattice::{gradient, Field, Grid};
use crate::spectral::Spectral;

/// Relative residual accepted from the implicit diffusion solve.
pub const SOLVE_TOL: f64 = 1e-10;

/// One scalar Brownian path sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    horizon: f64,
    seed: u64,
    stream: u64,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BrownianPath {
    /// Path number `stream` of the counter-based family keyed by `seed`.
    pub fn sample_stream(horizon: f64, steps: usize, seed: u64, stream: u64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "at least one step is required"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("T", format!("{horizon} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sd = (horizon / steps as f64).sqrt();
        let increments: Vec<f64> = (0..steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Ok(Self::from_increments(horizon, seed, stream, increments))
    }

    /// A path with prescribed increments (deterministic runs use zeros).
    pub fn from_increments(horizon: f64, seed: u64, stream: u64, increments: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        let mut w = 0.0;
        cumulative.push(w);
        for dw in &increments {
            w += dw;
            cumulative.push(w);
        }
        Self {
            horizon,
            seed,
            stream,
            increments,
            cumulative,
        }
    }

    pub fn zero(horizon: f64, steps: usize) -> Self {
        Self::from_increments(horizon, 0, 0, vec![0.0; steps])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(t_k)` for `k = 0..=K`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps() as f64
    }

    pub fn node_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k as usize > self.steps() {
            return None;
        }
        ((k * self.dt() - t).abs() <= 1e-9 * self.horizon).then_some(k as usize)
    }

    /// The same path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(invalid(
                "factor",
                format!("{factor} does not divide {} steps", self.steps()),
            ));
        }
        let inc = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().sum())
            .collect();
        Ok(Self::from_increments(self.horizon, self.seed, self.stream, inc))
    }
}

/// `W(0) = 0`, increments `N(0, T/K)` from stream 0 of `seed`.
pub fn sample_brownian(horizon: f64, steps: usize, seed: u64) -> Result<BrownianPath> {
    BrownianPath::sample_stream(horizon, steps, seed, 0)
}

/// Time modulation of a separable coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Steady,
    /// `mean + amplitude cos(frequency t + phase)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Steady => 1.0,
            TimeProfile::Cosine {
                mean,
                amplitude,
                frequency,
                phase,
            } => mean + amplitude * (frequency * t + phase).cos(),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            TimeProfile::Steady => 1.0,
            TimeProfile::Cosine {
                mean, amplitude, ..
            } => mean.abs() + amplitude.abs(),
        }
    }
}

/// A deterministic space-time coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    Separable { spatial: Field, temporal: TimeProfile },
    /// Piecewise constant in time: slice `i` holds on `[times[i], times[i+1])`.
    Sampled { times: Vec<f64>, slices: Vec<Field> },
}

/// Coefficient values at one time level.
#[derive(Debug, Clone)]
pub enum Slice<'a> {
    Uniform(f64),
    Nodes(Cow<'a, [f64]>),
}

impl Slice<'_> {
    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        match self {
            Slice::Uniform(c) => *c,
            Slice::Nodes(v) => v[node],
        }
    }
}

impl Coefficient {
    pub fn at_time(&self, t: f64) -> Slice<'_> {
        match self {
            Coefficient::Constant(c) => Slice::Uniform(*c),
            Coefficient::Separable { spatial, temporal } => {
                let s = temporal.eval(t);
                Slice::Nodes(Cow::Owned(spatial.values().iter().map(|v| v * s).collect()))
            }
            Coefficient::Sampled { times, slices } => {
                let i = times.partition_point(|&ti| ti <= t).saturating_sub(1);
                Slice::Nodes(Cow::Borrowed(slices[i.min(slices.len() - 1)].values()))
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c == 0.0,
            Coefficient::Separable { spatial, temporal } => {
                spatial.max_abs() == 0.0 || temporal.sup() == 0.0
            }
            Coefficient::Sampled { slices, .. } => slices.iter().all(|s| s.max_abs() == 0.0),
        }
    }

    /// Upper bound of `|c(x,t)|` over all grid nodes and times.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Coefficient::Constant(c) => c.abs(),
            Coefficient::Separable { spatial, temporal } => spatial.max_abs() * temporal.sup(),
            Coefficient::Sampled { slices, .. } => {
                slices.iter().fold(0.0, |m, s| m.max(s.max_abs()))
            }
        }
    }

    /// Upper bound of the discrete `|∇c(x,t)|` over all nodes and times.
    pub fn grad_sup_norm(&self) -> f64 {
        let grad_max = |f: &Field| -> f64 {
            let g = gradient(f);
            (0..f.grid().node_count())
                .map(|k| g.iter().map(|gi| gi.values()[k].powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        };
        match self {
            Coefficient::Constant(_) => 0.0,
            Coefficient::Separable { spatial, temporal } => grad_max(spatial) * temporal.sup(),
            Coefficient::Sampled { slices, .. } => slices.iter().map(grad_max).fold(0.0, f64::max),
        }
    }

    pub fn negated(&self) -> Coefficient {
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(-c),
            Coefficient::Separable { spatial, temporal } => Coefficient::Separable {
                spatial: spatial.scale(-1.0),
                temporal: *temporal,
            },
            Coefficient::Sampled { times, slices } => Coefficient::Sampled {
                times: times.clone(),
                slices: slices.iter().map(|s| s.scale(-1.0)).collect(),
            },
        }
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self {
            Coefficient::Constant(_) => Ok(()),
            Coefficient::Separable { spatial, .. } if spatial.grid() == grid => Ok(()),
            Coefficient::Sampled { times, slices }
                if !slices.is_empty()
                    && times.len() == slices.len()
                    && slices.iter().all(|s| s.grid() == grid) =>
            {
                Ok(())
            }
            _ => Err(Error::GridMismatch),
        }
    }
}

/// The potentials `a` (drift) and `b` (noise) of the equation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub a: Coefficient,
    pub b: Coefficient,
}

impl CoefficientField {
    pub fn new(a: Coefficient, b: Coefficient) -> Self {
        Self { a, b }
    }

    pub fn constant(a: f64, b: f64) -> Self {
        Self::new(Coefficient::Constant(a), Coefficient::Constant(b))
    }

    pub fn heat() -> Self {
        Self::constant(0.0, 0.0)
    }

    pub fn a_sup(&self) -> f64 {
        self.a.sup_norm()
    }

    pub fn b_sup(&self) -> f64 {
        self.b.sup_norm()
    }

    pub fn grad_b_sup(&self) -> f64 {
        self.b.grad_sup_norm()
    }

    /// Constant pair `(a, b)` when both coefficients are constants.
    pub fn constants(&self) -> Option<(f64, f64)> {
        Some((self.a.constant_value()?, self.b.constant_value()?))
    }

    pub fn is_deterministic(&self) -> bool {
        self.b.is_zero()
    }

    pub fn negated(&self) -> Self {
        Self::new(self.a.negated(), self.b.negated())
    }
}

/// One sample path of the solution on the uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    times: Vec<f64>,
    fields: Vec<Field>,
    path: BrownianPath,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> &Field {
        &self.fields[k]
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("trajectory holds at least the initial field")
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    pub fn dt(&self) -> f64 {
        self.path.dt()
    }
}

/// Holds the Fourier plans so many paths can share them.
#[derive(Debug, Clone)]
pub struct Stepper {
    spectral: Spectral,
    tol: f64,
}

impl Stepper {
    pub fn new(grid: &Grid) -> Self {
        Self {
            spectral: Spectral::new(grid),
            tol: SOLVE_TOL,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// One semi-implicit Itô step from `t` to `t + dt` with Brownian increment `dw`.
    pub fn step_forward(
        &self,
        field: &Field,
        coeffs: &CoefficientField,
        t: f64,
        dt: f64,
        dw: f64,
    ) -> Result<Field> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("{dt} must be positive")));
        }
        if field.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let a = coeffs.a.at_time(t);
        let b = coeffs.b.at_time(t);
        let rhs: Vec<f64> = field
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| v * (1.0 + dt * a.get(k) + b.get(k) * dw))
            .collect();
        let rhs = Field::from_values(self.grid(), rhs)?;
        self.spectral.implicit_solve(&rhs, dt, self.tol)
    }

    pub fn solve_forward(
        &self,
        phi0: &Field,
        coeffs: &CoefficientField,
        horizon: f64,
        path: &BrownianPath,
    ) -> Result<Trajectory> {
        if (path.horizon() - horizon).abs() > 1e-12 * horizon {
            return Err(invalid(
                "T",
                format!("path horizon {} differs from {horizon}", path.horizon()),
            ));
        }
        if phi0.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        coeffs.a.check_grid(self.grid())?;
        coeffs.b.check_grid(self.grid())?;
        let dt = path.dt();
        let mut fields = Vec::with_capacity(path.steps() + 1);
        let mut times = Vec::with_capacity(path.steps() + 1);
        fields.push(phi0.clone());
        times.push(0.0);
        for (k, &dw) in path.increments().iter().enumerate() {
            let t = path.time(k);
            let next = self.step_forward(&fields[k], coeffs, t, dt, dw)?;
            fields.push(next);
            times.push(path.time(k + 1));
        }
        Ok(Trajectory {
            grid: *self.grid(),
            times,
            fields,
            path: path.clone(),
        })
    }

    /// Forward flow with coefficients `(-a₁, -b₁)`.
    pub fn solve_adjoint(
        &self,
        y0: &Field,
        coeffs: &CoefficientField,
        horizon: f64,
        path: &BrownianPath,
    ) -> Result<Trajectory> {
        self.solve_forward(y0, &coeffs.negated(), horizon, path)
    }

    /// `exp((a - b²/2)t + b W(t)) · e^{tΔ_h} φ0` for constant `a`, `b`.
    pub fn exact_constant_coeff_solution(
        &self,
        phi0: &Field,
        coeffs: &CoefficientField,
        path: &BrownianPath,
        t: f64,
    ) -> Result<Field> {
        let (a, b) = coeffs.constants().ok_or_else(|| {
            Error::Unsupported("closed form needs constant coefficients".into())
        })?;
        let k = path
            .node_index(t)
            .ok_or_else(|| invalid("t", format!("{t} is not a node of the path")))?;
        let w = path.cumulative()[k];
        let factor = ((a - 0.5 * b * b) * t + b * w).exp();
        Ok(self.spectral.heat_semigroup(phi0, t)?.scale(factor))
    }
}

pub fn step_forward(
    field: &Field,
    coeffs: &CoefficientField,
    t: f64,
    dt: f64,
    dw: f64,
) -> Result<Field> {
    Stepper::new(field.grid()).step_forward(field, coeffs, t, dt, dw)
}

pub fn solve_forward(
    phi0: &Field,
    coeffs: &CoefficientField,
    horizon: f64,
    path: &BrownianPath,
) -> Result<Trajectory> {
    Stepper::new(phi0.grid()).solve_forward(phi0, coeffs, horizon, path)
}

pub fn solve_adjoint(
    y0: &Field,
    coeffs: &CoefficientField,
    horizon: f64,
    path: &BrownianPath,
) -> Result<Trajectory> {
    Stepper::new(y0.grid()).solve_adjoint(y0, coeffs, horizon, path)
}

pub fn exact_constant_coeff_solution(
    phi0: &Field,
    coeffs: &CoefficientField,
    path: &BrownianPath,
    t: f64,
) -> Result<Field> {
    Stepper::new(phi0.grid()).exact_constant_coeff_solution(phi0, coeffs, path, t)
}

/// Exact `E‖φ(T)‖²` for constant coefficients:
/// `e^{(2a+b²)T} ‖e^{TΔ_h} φ0‖²`.
pub fn constant_coeff_mean_energy(
    spectral: &Spectral,
    phi0: &Field,
    a: f64,
    b: f64,
    t: f64,
) -> Result<f64> {
    Ok(((2.0 * a + b * b) * t).exp() * spectral.heat_semigroup(phi0, t)?.norm_sq())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;
    use std::f64::consts::PI;

    fn rel_l2(a: &Field, b: &Field) -> f64 {
        let diff = a.zip_map(b, |x, y| x - y).unwrap();
        (diff.norm_sq() / b.norm_sq()).sqrt()
    }

    #[test]
    fn brownian_path_basics() {
        let p = sample_brownian(1.0, 64, 7).unwrap();
        assert_eq!(p.cumulative()[0], 0.0);
        assert_eq!(p, sample_brownian(1.0, 64, 7).unwrap());
        assert_ne!(p, sample_brownian(1.0, 64, 8).unwrap());
        assert!(sample_brownian(1.0, 0, 7).is_err());
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 16);
        assert!((c.cumulative()[16] - p.cumulative()[64]).abs() < 1e-12);
    }

    #[test]
    fn brownian_second_moment() {
        // E W(T)² = T, checked against 3 standard errors over 10⁴ streams
        let t = 0.7;
        let samples: Vec<f64> = (0..10_000)
            .map(|i| {
                let p = BrownianPath::sample_stream(t, 8, 11, i).unwrap();
                p.cumulative()[8].powi(2)
            })
            .collect();
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        assert!((mean - t).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn step_is_linear_and_kills_zero() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let s = Stepper::new(&g);
        let c = CoefficientField::constant(0.4, 0.2);
        let z = s.step_forward(&Field::zeros(&g), &c, 0.0, 0.01, 0.1).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let f = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let a = s.step_forward(&f.scale(3.0), &c, 0.0, 0.01, 0.1).unwrap();
        let b = s.step_forward(&f, &c, 0.0, 0.01, 0.1).unwrap().scale(3.0);
        assert!(rel_l2(&a, &b) < 1e-14);
    }

    #[test]
    fn step_on_an_eigenfunction() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let s = Stepper::new(&g);
        let f = Field::from_fn(&g, |p| (2.0 * PI * p[0] / 8.0).cos());
        let dt = 0.05;
        let mu = crate::spectral::axis_eigenvalue(&g, 1);
        let out = s.step_forward(&f, &CoefficientField::heat(), 0.0, dt, 0.3).unwrap();
        for (o, v) in out.values().iter().zip(f.values()) {
            assert!((o - v / (1.0 + dt * mu)).abs() < 1e-13);
        }
    }

    #[test]
    fn heat_flow_matches_heat_kernel() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let t = 0.5;
        let s0 = 0.25;
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0] / (4.0 * s0)).exp());
        let path = BrownianPath::zero(t, 512);
        let traj = solve_forward(&phi0, &CoefficientField::heat(), t, &path).unwrap();
        assert_eq!(traj.field(0), &phi0);
        let reference = Field::from_fn(&g, |p| {
            (s0 / (s0 + t)).sqrt() * (-p[0] * p[0] / (4.0 * (s0 + t))).exp()
        });
        assert!(rel_l2(traj.last(), &reference) < 0.01);
        // constant a = 1 adds the factor e^T
        let traj_a = solve_forward(&phi0, &CoefficientField::constant(1.0, 0.0), t, &path).unwrap();
        assert!(rel_l2(traj_a.last(), &reference.scale(t.exp())) < 0.01);
    }

    #[test]
    fn pathwise_agreement_with_closed_form() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let s = Stepper::new(&g);
        let t = 0.5;
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let c = CoefficientField::constant(0.5, 0.3);
        for seed in 0..5 {
            let path = sample_brownian(t, 512, seed).unwrap();
            let num = s.solve_forward(&phi0, &c, t, &path).unwrap();
            let exact = s.exact_constant_coeff_solution(&phi0, &c, &path, t).unwrap();
            assert!(rel_l2(num.last(), &exact) < 0.02);
        }
    }

    #[test]
    fn closed_form_reductions() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let s = Stepper::new(&g);
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let path = sample_brownian(1.0, 16, 3).unwrap();
        let c = CoefficientField::constant(0.7, 0.4);
        let at0 = s.exact_constant_coeff_solution(&phi0, &c, &path, 0.0).unwrap();
        assert!(rel_l2(&at0, &phi0) < 1e-14);
        let heat = s
            .exact_constant_coeff_solution(&phi0, &CoefficientField::heat(), &path, 1.0)
            .unwrap();
        assert!(rel_l2(&heat, &s.spectral().heat_semigroup(&phi0, 1.0).unwrap()) < 1e-14);
        let grown = s
            .exact_constant_coeff_solution(&phi0, &CoefficientField::constant(2.0, 0.0), &path, 1.0)
            .unwrap();
        assert!(rel_l2(&grown, &heat.scale(2f64.exp())) < 1e-14);
        let sep = CoefficientField::new(
            Coefficient::Separable {
                spatial: phi0.clone(),
                temporal: TimeProfile::Steady,
            },
            Coefficient::Constant(0.0),
        );
        assert!(matches!(
            s.exact_constant_coeff_solution(&phi0, &sep, &path, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(s.exact_constant_coeff_solution(&phi0, &c, &path, 0.01).is_err());
    }

    #[test]
    fn adjoint_flow_negates_coefficients() {
        let g = Grid::new(1, 16.0, 128).unwrap();
        let s = Stepper::new(&g);
        let y0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let path = sample_brownian(0.5, 256, 5).unwrap();
        let heat = s.solve_adjoint(&y0, &CoefficientField::heat(), 0.5, &path).unwrap();
        let fwd = s.solve_forward(&y0, &CoefficientField::heat(), 0.5, &path).unwrap();
        assert_eq!(heat.last(), fwd.last());
        let c = CoefficientField::constant(0.3, 0.2);
        let adj = s.solve_adjoint(&y0, &c, 0.5, &path).unwrap();
        let exact = s
            .exact_constant_coeff_solution(&y0, &CoefficientField::constant(-0.3, -0.2), &path, 0.5)
            .unwrap();
        assert!(rel_l2(adj.last(), &exact) < 0.02);
        let zero = s.solve_adjoint(&Field::zeros(&g), &c, 0.5, &path).unwrap();
        assert!(zero.fields().iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn pathwise_linearity() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let s = Stepper::new(&g);
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp() * (1.0 + p[0]));
        let c = CoefficientField::constant(0.5, 0.3);
        let path = sample_brownian(0.5, 64, 9).unwrap();
        let a = s.solve_forward(&phi0.scale(7.0), &c, 0.5, &path).unwrap();
        let b = s.solve_forward(&phi0, &c, 0.5, &path).unwrap();
        for (x, y) in a.fields().iter().zip(b.fields()) {
            assert!(rel_l2(x, &y.scale(7.0)) < 1e-12);
        }
    }

    #[test]
    fn norms_bound_samples() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let spatial = Field::from_fn(&g, |p| 0.5 * (p[0]).sin());
        let c = Coefficient::Separable {
            spatial,
            temporal: TimeProfile::Cosine {
                mean: 0.2,
                amplitude: 0.8,
                frequency: 3.0,
                phase: 0.1,
            },
        };
        let sup = c.sup_norm();
        for k in 0..50 {
            let t = k as f64 * 0.02;
            let s = c.at_time(t);
            for node in 0..g.node_count() {
                assert!(s.get(node).abs() <= sup + 1e-15);
            }
        }
        assert!(c.grad_sup_norm() > 0.0);
    }
}
