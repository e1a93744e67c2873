//! Null control of the backward equation `dy + Δy dt = a₁y dt + χ_E χ_ω u dt`
//! by duality, in the deterministic case.
//!
//! Time is discretized first. With `P = (I - dtΔ_h)⁻¹` and
//! `M_k = P(I - dt a₁(t_k))`, the adjoint flow is `ŷ_{k+1} = M_k ŷ_k` and the
//! controlled backward recursion is `y_k = M_kᵀ y_{k+1} - w_k χ_ω u_k` with
//! `w_k = |E ∩ [t_k, t_{k+1}]|`. The pairing identity
//! `⟨ŷ_K, y_K⟩ - ⟨ŷ_0, y_0⟩ = Σ_k w_k ⟨ŷ_k, χ_ω u_k⟩` then holds exactly.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Field, Mask};
use crate::observability::{intersect_measure, TimeSet};
use crate::sde_core::{Coefficient, Stepper, SOLVE_TOL};

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub y_t: Field,
    pub omega: Mask,
    pub set: TimeSet,
    pub a1: Coefficient,
    pub b1: Coefficient,
    pub horizon: f64,
    pub steps: usize,
    /// Target for `‖y(0)‖/‖y_T‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ControlProblem {
    pub fn new(y_t: Field, omega: Mask, set: TimeSet, a1: Coefficient, steps: usize) -> Result<Self> {
        if omega.grid() != y_t.grid() {
            return Err(Error::GridMismatch);
        }
        if omega.count() == 0 {
            return Err(invalid("omega", "the observation region is empty"));
        }
        if !(set.measure() > 0.0) {
            return Err(invalid("E", "the control time set has measure zero"));
        }
        if steps == 0 {
            return Err(invalid("steps", "at least one step is required"));
        }
        let horizon = set.horizon();
        Ok(Self {
            y_t,
            omega,
            set,
            a1,
            b1: Coefficient::Constant(0.0),
            horizon,
            steps,
            tolerance: 1e-3,
            max_iterations: 200,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    /// `w_k = |E ∩ [t_k, t_{k+1}]|`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|k| intersect_measure(&self.set, self.time(k), self.time(k + 1)))
            .collect()
    }

    fn check_supported(&self) -> Result<()> {
        if !self.b1.is_zero() {
            return Err(Error::Unsupported(
                "stochastic control (b₁ ≠ 0) needs backward SPDE solvers".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete operators shared by the adjoint and the backward solves.
struct Dynamics<'a> {
    problem: &'a ControlProblem,
    stepper: Stepper,
    weights: Vec<f64>,
}

impl<'a> Dynamics<'a> {
    fn new(problem: &'a ControlProblem) -> Result<Self> {
        problem.check_supported()?;
        Ok(Self {
            problem,
            stepper: Stepper::new(problem.y_t.grid()),
            weights: problem.weights(),
        })
    }

    fn damp(&self, f: &Field, k: usize) -> Field {
        let p = self.problem;
        let a = p.a1.at_time(p.time(k));
        let dt = p.dt();
        let mut out = f.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v *= 1.0 - dt * a.get(i);
        }
        out
    }

    fn restrict(&self, f: &Field) -> Field {
        let mut out = f.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            if !self.problem.omega.contains(i) {
                *v = 0.0;
            }
        }
        out
    }

    /// `ŷ_0, …, ŷ_K`.
    fn adjoint(&self, y0: &Field) -> Result<Vec<Field>> {
        let dt = self.problem.dt();
        let mut out = Vec::with_capacity(self.problem.steps + 1);
        out.push(y0.clone());
        for k in 0..self.problem.steps {
            let next = self.stepper.spectral().implicit_solve(&self.damp(&out[k], k), dt, SOLVE_TOL)?;
            out.push(next);
        }
        Ok(out)
    }

    /// `y_0, …, y_K` from `y_K = terminal` with controls `u_k`, `k < K`.
    fn backward(&self, terminal: &Field, controls: Option<&[Field]>) -> Result<Vec<Field>> {
        let k_max = self.problem.steps;
        let dt = self.problem.dt();
        let mut out = vec![Field::zeros(terminal.grid()); k_max + 1];
        out[k_max] = terminal.clone();
        for k in (0..k_max).rev() {
            let mut y = self.damp(&self.stepper.spectral().implicit_solve(&out[k + 1], dt, SOLVE_TOL)?, k);
            if let Some(u) = controls {
                let w = self.weights[k];
                if w > 0.0 {
                    let cu = self.restrict(&u[k]);
                    y = y.zip_map(&cu, |a, b| a - w * b)?;
                }
            }
            out[k] = y;
        }
        Ok(out)
    }

    /// Controls `u_k = χ_ω ŷ_k` where `w_k > 0`, zero elsewhere.
    fn controls_from(&self, adjoint: &[Field]) -> Vec<Field> {
        (0..self.problem.steps)
            .map(|k| {
                if self.weights[k] > 0.0 {
                    self.restrict(&adjoint[k])
                } else {
                    Field::zeros(adjoint[k].grid())
                }
            })
            .collect()
    }

    fn gramian(&self, y0: &Field) -> Result<Field> {
        let adj = self.adjoint(y0)?;
        let u = self.controls_from(&adj);
        let z = self.backward(&Field::zeros(y0.grid()), Some(&u))?;
        Ok(z[0].scale(-1.0))
    }
}

fn inner(a: &Field, b: &Field) -> f64 {
    a.dot(b).expect("fields share the problem grid") * a.grid().cell_volume()
}

/// `Λŷ₀ = -z(0)`, with `z` the backward solution from `z(T) = 0` driven by
/// `u = χ_ω ŷ` on `E`. `Λ` is symmetric positive semidefinite and
/// `⟨Λŷ₀, ŷ₀⟩ = Σ_k w_k ‖χ_ω ŷ_k‖²`.
pub fn gramian_apply(y0: &Field, problem: &ControlProblem) -> Result<Field> {
    if y0.grid() != problem.y_t.grid() {
        return Err(Error::GridMismatch);
    }
    Dynamics::new(problem)?.gramian(y0)
}

/// `Σ_k w_k ‖χ_ω ŷ_k‖²` for the adjoint flow from `y0`.
pub fn observed_energy(y0: &Field, problem: &ControlProblem) -> Result<f64> {
    let dyn_ = Dynamics::new(problem)?;
    let adj = dyn_.adjoint(y0)?;
    Ok((0..problem.steps)
        .map(|k| {
            let r = dyn_.restrict(&adj[k]);
            dyn_.weights[k] * inner(&r, &r)
        })
        .sum())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Control {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// `u_k` on every node (zero outside `ω` and for `w_k = 0`).
    #[serde(skip)]
    pub values: Vec<Field>,
    /// The adjoint initial datum generating the control.
    #[serde(skip)]
    pub adjoint_initial: Option<Field>,
    /// `Σ_k w_k ‖u_k‖²`.
    pub cost: f64,
    pub y0_norm_ratio: f64,
    pub iterations: usize,
    /// `‖y(0)‖/‖y_T‖` after each iteration, starting with the free solution.
    pub residuals: Vec<f64>,
}

/// Conjugate residuals on `Λŷ₀ = y_free(0)`. The residual equals the
/// achieved `y(0)`, so its norm decreases monotonically.
pub fn solve_hum(problem: &ControlProblem) -> Result<Control> {
    let dyn_ = Dynamics::new(problem)?;
    let grid = *problem.y_t.grid();
    let times: Vec<f64> = (0..problem.steps).map(|k| problem.time(k)).collect();
    let yt_norm = inner(&problem.y_t, &problem.y_t).sqrt();
    if yt_norm == 0.0 {
        return Ok(Control {
            times,
            weights: dyn_.weights.clone(),
            values: vec![Field::zeros(&grid); problem.steps],
            adjoint_initial: Some(Field::zeros(&grid)),
            cost: 0.0,
            y0_norm_ratio: 0.0,
            iterations: 0,
            residuals: vec![0.0],
        });
    }
    let free = dyn_.backward(&problem.y_t, None)?;
    let mut x = Field::zeros(&grid);
    let mut r = free[0].clone();
    let mut ar = dyn_.gramian(&r)?;
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = inner(&r, &ar);
    let mut history = vec![inner(&r, &r).sqrt() / yt_norm];
    let mut iterations = 0;
    while *history.last().expect("non-empty") > problem.tolerance {
        if iterations == problem.max_iterations {
            return Err(Error::Stagnation {
                iterations,
                residual: *history.last().expect("non-empty"),
                history,
            });
        }
        let apap = inner(&ap, &ap);
        if !(apap > 0.0) || !(rar > 0.0) {
            return Err(Error::Stagnation {
                iterations,
                residual: *history.last().expect("non-empty"),
                history,
            });
        }
        let alpha = rar / apap;
        x = x.zip_map(&p, |a, b| a + alpha * b)?;
        r = r.zip_map(&ap, |a, b| a - alpha * b)?;
        ar = dyn_.gramian(&r)?;
        let rar_new = inner(&r, &ar);
        let beta = rar_new / rar;
        rar = rar_new;
        p = r.zip_map(&p, |a, b| a + beta * b)?;
        ap = ar.zip_map(&ap, |a, b| a + beta * b)?;
        iterations += 1;
        history.push(inner(&r, &r).sqrt() / yt_norm);
    }
    let adj = dyn_.adjoint(&x)?;
    let values = dyn_.controls_from(&adj);
    let y = dyn_.backward(&problem.y_t, Some(&values))?;
    let cost = values
        .iter()
        .zip(&dyn_.weights)
        .map(|(u, w)| w * inner(u, u))
        .sum();
    Ok(Control {
        times,
        weights: dyn_.weights.clone(),
        values,
        adjoint_initial: Some(x),
        cost,
        y0_norm_ratio: inner(&y[0], &y[0]).sqrt() / yt_norm,
        iterations,
        residuals: history,
    })
}

/// Relative residual of `⟨ŷ(T), y(T)⟩ - ⟨ŷ₀, y(0)⟩ = Σ_k w_k ⟨ŷ_k, χ_ω u_k⟩`.
pub fn verify_duality_identity(y0_hat: &Field, control: &Control, problem: &ControlProblem) -> Result<f64> {
    let dyn_ = Dynamics::new(problem)?;
    if control.values.len() != problem.steps {
        return Err(invalid("control", "one control slice per time step is required"));
    }
    let adj = dyn_.adjoint(y0_hat)?;
    let y = dyn_.backward(&problem.y_t, Some(&control.values))?;
    let k_max = problem.steps;
    let end = inner(&adj[k_max], &y[k_max]);
    let start = inner(&adj[0], &y[0]);
    let source_terms: Vec<f64> = (0..k_max)
        .map(|k| dyn_.weights[k] * inner(&adj[k], &dyn_.restrict(&control.values[k])))
        .collect();
    let source: f64 = source_terms.iter().sum();
    let scale = end.abs() + start.abs() + source_terms.iter().map(|v| v.abs()).sum::<f64>();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((end - start - source).abs() / scale)
}

/// Writes `t,w,node,x,[y,]u` for the nodes of `ω` at steps with `w > 0`.
pub fn write_control_csv(control: &Control, problem: &ControlProblem, path: &Path) -> Result<()> {
    let grid = problem.y_t.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    if grid.dim() == 1 {
        writeln!(out, "t,w,node,x,u")?;
    } else {
        writeln!(out, "t,w,node,x,y,u")?;
    }
    for (k, u) in control.values.iter().enumerate() {
        if control.weights[k] <= 0.0 {
            continue;
        }
        for node in (0..grid.node_count()).filter(|&i| problem.omega.contains(i)) {
            let p = grid.position(node);
            let coords = if grid.dim() == 1 {
                format!("{:.16e}", p[0])
            } else {
                format!("{:.16e},{:.16e}", p[0], p[1])
            };
            writeln!(
                out,
                "{:.16e},{:.16e},{},{},{:.16e}",
                control.times[k],
                control.weights[k],
                node,
                coords,
                u.values()[node]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cube_tiling, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(steps: usize) -> ControlProblem {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let omega = cube_tiling(&g, 1.0).unwrap().ball_union(&g, 0.5).unwrap();
        let y_t = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let set = TimeSet::new(vec![(0.0, 0.5)], 0.5).unwrap();
        ControlProblem::new(y_t, omega, set, Coefficient::Constant(0.0), steps).unwrap()
    }

    fn noise(g: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(g);
        for v in f.values_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        f
    }

    #[test]
    fn gramian_is_symmetric_and_positive() {
        let mut p = problem(32);
        p.a1 = Coefficient::Separable {
            spatial: Field::from_fn(p.y_t.grid(), |x| (x[0]).sin()),
            temporal: crate::sde_core::TimeProfile::Steady,
        };
        p.set = TimeSet::new(vec![(0.05, 0.2), (0.33, 0.41)], 0.5).unwrap();
        let g = *p.y_t.grid();
        for seed in 0..3 {
            let (a, b) = (noise(&g, 2 * seed), noise(&g, 2 * seed + 1));
            let la = gramian_apply(&a, &p).unwrap();
            let lb = gramian_apply(&b, &p).unwrap();
            let (x, y) = (inner(&la, &b), inner(&a, &lb));
            assert!((x - y).abs() <= 1e-10 * x.abs().max(y.abs()));
            let q = inner(&la, &a);
            let obs = observed_energy(&a, &p).unwrap();
            assert!(q >= 0.0 && (q - obs).abs() <= 1e-10 * obs);
        }
        let zero = gramian_apply(&Field::zeros(&g), &p).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn free_duality_is_conserved() {
        let p = problem(16);
        let g = *p.y_t.grid();
        let control = Control {
            times: vec![],
            weights: p.weights(),
            values: vec![Field::zeros(&g); 16],
            adjoint_initial: None,
            cost: 0.0,
            y0_norm_ratio: 1.0,
            iterations: 0,
            residuals: vec![],
        };
        let r = verify_duality_identity(&noise(&g, 4), &control, &p).unwrap();
        assert!(r <= 1e-10, "{r}");
        assert_eq!(verify_duality_identity(&Field::zeros(&g), &control, &p).unwrap(), 0.0);
    }

    #[test]
    fn hum_drives_state_to_zero() {
        let p = problem(50);
        let c = solve_hum(&p).unwrap();
        assert!(c.y0_norm_ratio <= 1e-3, "{:?}", c.residuals);
        assert!(c.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let r = verify_duality_identity(c.adjoint_initial.as_ref().unwrap(), &c, &p).unwrap();
        assert!(r <= 1e-8);
        assert!(c.cost > 0.0);
    }

    #[test]
    fn degenerate_and_unsupported_inputs() {
        let mut p = problem(8);
        p.y_t = Field::zeros(p.y_t.grid());
        let c = solve_hum(&p).unwrap();
        assert_eq!((c.cost, c.y0_norm_ratio), (0.0, 0.0));
        p.b1 = Coefficient::Constant(0.1);
        assert!(matches!(solve_hum(&p), Err(Error::Unsupported(_))));
        assert!(TimeSet::new(vec![], 0.5).is_err());
    }
}
