//! Backward Gaussian weight, smooth radial cutoffs and the localized state.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{laplacian, Field, Grid};
use crate::sde_core::Slice;

/// `max_u |s'(u)|` for the quintic smoothstep `s(u) = 6u⁵ - 15u⁴ + 10u³`.
pub const SMOOTHSTEP_SLOPE: f64 = 1.875;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub lambda: f64,
    pub center: Vec<f64>,
    pub horizon: f64,
    pub dim: usize,
}

impl WeightParams {
    pub fn new(lambda: f64, center: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", format!("{lambda} must be positive")));
        }
        if !(horizon > 0.0) {
            return Err(invalid("T", format!("{horizon} must be positive")));
        }
        let dim = center.len();
        Ok(Self {
            lambda,
            center,
            horizon,
            dim,
        })
    }

    /// `T - t + λ`.
    pub fn scale(&self, t: f64) -> f64 {
        self.horizon - t + self.lambda
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.horizon * (1.0 + 1e-12) || t < 0.0 {
            return Err(invalid("t", format!("{t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }
}

fn weight_from_dist_sq(r2: f64, s: f64, dim: usize) -> f64 {
    s.powf(-(dim as f64) / 2.0) * (-r2 / (4.0 * s)).exp()
}

/// `G_λ(x,t) = (T-t+λ)^{-N/2} exp(-|x-x₀|²/(4(T-t+λ)))` in free space.
pub fn gaussian_weight(x: &[f64], t: f64, params: &WeightParams) -> Result<f64> {
    params.check_time(t)?;
    if x.len() != params.dim {
        return Err(Error::InvalidGeometry("point dimension mismatch".into()));
    }
    let r2: f64 = x
        .iter()
        .zip(&params.center)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(weight_from_dist_sq(r2, params.scale(t), params.dim))
}

/// `G_λ(·,t)` on the grid, with `|x - x₀|` measured in the torus metric.
pub fn weight_field(grid: &Grid, params: &WeightParams, t: f64) -> Result<Field> {
    params.check_time(t)?;
    grid.check_point(&params.center)?;
    let s = params.scale(t);
    Ok(Field::from_fn(grid, |p| {
        let r2: f64 = (0..grid.dim())
            .map(|a| grid.torus_delta(p[a], params.center[a]).powi(2))
            .sum();
        weight_from_dist_sq(r2, s, grid.dim())
    }))
}

/// Max-norm residuals of the identities satisfied by `G_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightResiduals {
    /// `∇G` against `-(x-x₀)/(2(T-t+λ)) G`.
    pub gradient: f64,
    /// Trace of the analytic Hessian against the closed form of `ΔG`.
    pub laplacian: f64,
    /// Off-diagonal Hessian against `(xᵢ-x₀ᵢ)(xⱼ-x₀ⱼ)/(4(T-t+λ)²) G` (zero in 1D).
    pub mixed: f64,
    /// `|∂ₜG + Δ_h G|` with a centered time difference of step `dt`.
    pub heat: f64,
}

/// Evaluates the weight identities on nodes within `L/4` of `x₀`.
///
/// The algebraic identities compare independently differentiated forms; the
/// heat identity uses the discrete Laplacian and a centered time difference.
pub fn weight_identity_residuals(
    grid: &Grid,
    params: &WeightParams,
    t: f64,
    dt: f64,
) -> Result<WeightResiduals> {
    params.check_time(t)?;
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("{dt} must be positive")));
    }
    let s = params.scale(t);
    let g = weight_field(grid, params, t)?;
    if t - dt < 0.0 || t + dt > params.horizon {
        return Err(invalid("t", "needs t ± dt inside [0, T]"));
    }
    let g_lo = weight_field(grid, params, t - dt)?;
    let g_hi = weight_field(grid, params, t + dt)?;
    let g_t = g_hi.zip_map(&g_lo, |a, b| (a - b) / (2.0 * dt))?;
    let lap = laplacian(&g);
    let interior = 0.25 * grid.extent();
    let n = grid.dim() as f64;
    let mut res = WeightResiduals {
        gradient: 0.0,
        laplacian: 0.0,
        mixed: 0.0,
        heat: 0.0,
    };
    for k in 0..grid.node_count() {
        let p = grid.position(k);
        let d: Vec<f64> = (0..grid.dim())
            .map(|a| grid.torus_delta(p[a], params.center[a]))
            .collect();
        let r2: f64 = d.iter().map(|v| v * v).sum();
        if r2.sqrt() > interior {
            continue;
        }
        let gv = g.values()[k];
        let pref = s.powf(-n / 2.0);
        let e = (-r2 / (4.0 * s)).exp();
        for a in 0..grid.dim() {
            // product rule on s^{-N/2} e^{-r²/(4s)}
            let direct = pref * e * (-2.0 * d[a] / (4.0 * s));
            let formula = -d[a] / (2.0 * s) * gv;
            res.gradient = res.gradient.max((direct - formula).abs());
        }
        // Hessian from differentiating the gradient formula
        let hess = |i: usize, j: usize| -> f64 {
            let delta = if i == j { 1.0 } else { 0.0 };
            pref * e * (-delta / (2.0 * s) + d[i] * d[j] / (4.0 * s * s))
        };
        let trace: f64 = (0..grid.dim()).map(|a| hess(a, a)).sum();
        let lap_formula = -n / (2.0 * s) * gv + r2 / (4.0 * s * s) * gv;
        res.laplacian = res.laplacian.max((trace - lap_formula).abs());
        if grid.dim() == 2 {
            let mixed_formula = d[0] * d[1] / (4.0 * s * s) * gv;
            res.mixed = res.mixed.max((hess(0, 1) - mixed_formula).abs());
        }
        res.heat = res.heat.max((g_t.values()[k] + lap.values()[k]).abs());
    }
    Ok(res)
}

/// Smooth radial cutoff equal to one on the inner ball and zero outside the outer ball.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffProfile {
    center: Vec<f64>,
    inner: f64,
    outer: f64,
    values: Field,
    grad: Vec<Field>,
    laplacian: Field,
    grad_sup: f64,
    laplacian_sup: f64,
}

fn smoothstep_d1(u: f64) -> f64 {
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

fn smoothstep_d2(u: f64) -> f64 {
    60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

/// Radial profile value and its first two radial derivatives.
fn radial(rho: f64, inner: f64, outer: f64) -> (f64, f64, f64) {
    if rho <= inner {
        (1.0, 0.0, 0.0)
    } else if rho >= outer {
        (0.0, 0.0, 0.0)
    } else {
        let w = outer - inner;
        let u = (rho - inner) / w;
        let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        (1.0 - s, -smoothstep_d1(u) / w, -smoothstep_d2(u) / (w * w))
    }
}

/// `sup_{inner<ρ<outer} |χ''(ρ) + (N-1)χ'(ρ)/ρ|`, by dense sampling and golden refinement.
fn laplacian_sup(inner: f64, outer: f64, dim: usize) -> f64 {
    let f = |rho: f64| {
        let (_, d1, d2) = radial(rho, inner, outer);
        (d2 + (dim as f64 - 1.0) * d1 / rho).abs()
    };
    let samples = 20_000;
    let w = outer - inner;
    let (mut best_i, mut best) = (0usize, 0.0f64);
    for i in 0..=samples {
        let v = f(inner + w * i as f64 / samples as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = (
        inner + w * (best_i.saturating_sub(1)) as f64 / samples as f64,
        inner + w * ((best_i + 1).min(samples)) as f64 / samples as f64,
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if f(a) > f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

impl CutoffProfile {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn grad(&self) -> &[Field] {
        &self.grad
    }

    pub fn laplacian(&self) -> &Field {
        &self.laplacian
    }

    /// Analytic `‖∇χ‖_∞ = 1.875/(outer - inner)`.
    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    /// Analytic `‖Δχ‖_∞`.
    pub fn laplacian_sup(&self) -> f64 {
        self.laplacian_sup
    }
}

pub fn cutoff(grid: &Grid, center: &[f64], inner: f64, outer: f64) -> Result<CutoffProfile> {
    grid.check_point(center)?;
    if !(inner > 0.0) || !(inner < outer) {
        return Err(Error::InvalidGeometry(format!(
            "cutoff radii must satisfy 0 < inner < outer, got {inner} and {outer}"
        )));
    }
    if outer >= 0.5 * grid.extent() {
        return Err(Error::InvalidGeometry(format!(
            "cutoff outer radius {outer} does not fit the torus"
        )));
    }
    let dim = grid.dim();
    let n = grid.node_count();
    let mut values = vec![0.0; n];
    let mut grad = vec![vec![0.0; n]; dim];
    let mut lap = vec![0.0; n];
    for k in 0..n {
        let p = grid.position(k);
        let d: Vec<f64> = (0..dim).map(|a| grid.torus_delta(p[a], center[a])).collect();
        let rho = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (v, d1, d2) = radial(rho, inner, outer);
        values[k] = v;
        if d1 != 0.0 || d2 != 0.0 {
            for a in 0..dim {
                grad[a][k] = d1 * d[a] / rho;
            }
            lap[k] = d2 + (dim as f64 - 1.0) * d1 / rho;
        }
    }
    Ok(CutoffProfile {
        center: center.to_vec(),
        inner,
        outer,
        values: Field::from_values(grid, values)?,
        grad: grad
            .into_iter()
            .map(|g| Field::from_values(grid, g))
            .collect::<Result<_>>()?,
        laplacian: Field::from_values(grid, lap)?,
        grad_sup: SMOOTHSTEP_SLOPE / (outer - inner),
        laplacian_sup: laplacian_sup(inner, outer, dim),
    })
}

/// `u = χφ`, `F = a u - φΔχ - 2∇φ·∇χ`, `g = -2∇χ·∇φ - φΔχ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedState {
    pub u: Field,
    pub f: Field,
    pub g: Field,
}

pub fn localize(
    phi: &Field,
    grad_phi: &[Field],
    chi: &CutoffProfile,
    a: &Slice<'_>,
) -> Result<LocalizedState> {
    let grid = phi.grid();
    if chi.values.grid() != grid || grad_phi.len() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    for gp in grad_phi {
        phi.same_grid(gp)?;
    }
    let n = grid.node_count();
    let mut u = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let pv = phi.values();
    let cv = chi.values.values();
    let lv = chi.laplacian.values();
    for k in 0..n {
        let dot: f64 = (0..grid.dim())
            .map(|d| grad_phi[d].values()[k] * chi.grad[d].values()[k])
            .sum();
        u[k] = cv[k] * pv[k];
        g[k] = -2.0 * dot - pv[k] * lv[k];
        f[k] = a.get(k) * u[k] + g[k];
    }
    Ok(LocalizedState {
        u: Field::from_values(grid, u)?,
        f: Field::from_values(grid, f)?,
        g: Field::from_values(grid, g)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::gradient;

    #[test]
    fn weight_values() {
        let p = WeightParams::new(1.0, vec![0.0], 1.0).unwrap();
        assert!((gaussian_weight(&[0.0], 0.0, &p).unwrap() - 2f64.powf(-0.5)).abs() < 1e-15);
        let v = gaussian_weight(&[2.0], 0.0, &p).unwrap();
        assert!((v - 2f64.powf(-0.5) * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.42888).abs() < 5e-6);
        assert!(gaussian_weight(&[0.0], 1.5, &p).is_err());
    }

    #[test]
    fn weight_ratio_under_lambda_change() {
        let x = [1.3, -0.4];
        let lam = 0.7;
        let p1 = WeightParams::new(lam, vec![0.0, 0.0], 2.0).unwrap();
        let p4 = WeightParams::new(4.0 * lam, vec![0.0, 0.0], 2.0).unwrap();
        let r2 = x[0] * x[0] + x[1] * x[1];
        let ratio = gaussian_weight(&x, 2.0, &p4).unwrap() / gaussian_weight(&x, 2.0, &p1).unwrap();
        let expected = 4f64.powf(-1.0) * (3.0 * r2 / (16.0 * lam)).exp();
        assert!((ratio - expected).abs() < 1e-13 * expected);
    }

    #[test]
    fn algebraic_identities_hold() {
        let g = Grid::new(2, 16.0, 64).unwrap();
        let p = WeightParams::new(0.5, vec![0.3, -0.2], 1.0).unwrap();
        let r = weight_identity_residuals(&g, &p, 0.5, 0.01).unwrap();
        assert!(r.gradient <= 1e-12);
        assert!(r.laplacian <= 1e-12);
        assert!(r.mixed <= 1e-12);
    }

    #[test]
    fn heat_identity_is_second_order() {
        let p = WeightParams::new(1.0, vec![0.0], 1.0).unwrap();
        let mut prev = None;
        for level in 0..3 {
            let n = 64 << level;
            let g = Grid::new(1, 16.0, n).unwrap();
            let dt = 0.1 / (1 << level) as f64;
            let r = weight_identity_residuals(&g, &p, 0.5, dt).unwrap().heat;
            if let Some(pr) = prev {
                let f: f64 = pr / r;
                assert!((3.5..=4.5).contains(&f), "factor {f}");
            }
            prev = Some(r);
        }
    }

    #[test]
    fn weight_is_positive_and_radially_decreasing() {
        let g = Grid::new(1, 16.0, 128).unwrap();
        let p = WeightParams::new(0.3, vec![0.0], 1.0).unwrap();
        let w = weight_field(&g, &p, 0.2).unwrap();
        assert!(w.values().iter().all(|&v| v > 0.0));
        let half = g.points_per_axis() / 2;
        for i in half..g.points_per_axis() - 1 {
            assert!(w.values()[i + 1] <= w.values()[i]);
        }
    }

    #[test]
    fn cutoff_geometry_and_bounds() {
        let g = Grid::new(1, 16.0, 512).unwrap();
        // δ = 1, R = 1: plateau (1 + 3δ/2)R = 2.5, support R₀ = 3
        let chi = cutoff(&g, &[0.0], 2.5, 3.0).unwrap();
        for k in 0..g.node_count() {
            let d = g.torus_distance(k, &[0.0]);
            let v = chi.values().values()[k];
            assert!((0.0..=1.0).contains(&v));
            if d <= 2.5 {
                assert_eq!(v, 1.0);
            }
            if d >= 3.0 {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(chi.grad_sup(), 3.75);
        assert!((chi.laplacian_sup() - 10.0 / 3f64.sqrt() / 0.25).abs() < 1e-9);
        let gmax = chi.grad()[0].max_abs();
        assert!(gmax <= chi.grad_sup());
        assert!(chi.laplacian().max_abs() <= chi.laplacian_sup());
        assert!(cutoff(&g, &[0.0], 3.0, 2.0).is_err());
    }

    #[test]
    fn cutoff_derivatives_converge_at_second_order() {
        let mut errs = Vec::new();
        for n in [256usize, 512, 1024] {
            let g = Grid::new(2, 8.0, n / 4).unwrap();
            let chi = cutoff(&g, &[0.0, 0.0], 1.0, 2.5).unwrap();
            let fd = gradient(chi.values());
            let e = fd[0]
                .values()
                .iter()
                .zip(chi.grad()[0].values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn localization_on_the_plateau() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let chi = cutoff(&g, &[0.0], 2.5, 3.0).unwrap();
        let c = 1.7;
        let phi = Field::from_fn(&g, |_| c);
        let a = Slice::Uniform(0.4);
        let st = localize(&phi, &gradient(&phi), &chi, &a).unwrap();
        for k in 0..g.node_count() {
            if g.torus_distance(k, &[0.0]) <= 2.5 {
                assert!((st.u.values()[k] - c).abs() < 1e-15);
                assert!((st.f.values()[k] - 0.4 * c).abs() < 1e-12);
                assert!(st.g.values()[k].abs() < 1e-12);
            }
        }
        // data supported inside the plateau: g ≡ 0, F = aφ
        let bump = Field::from_fn(&g, |p| if p[0].abs() < 1.5 { (1.0 - (p[0] / 1.5).powi(2)).powi(3) } else { 0.0 });
        let st = localize(&bump, &gradient(&bump), &chi, &a).unwrap();
        assert_eq!(st.g.max_abs(), 0.0);
        for (f, p) in st.f.values().iter().zip(bump.values()) {
            assert!((f - 0.4 * p).abs() < 1e-15);
        }
    }

    #[test]
    fn localization_of_the_cutoff_itself() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let chi = cutoff(&g, &[0.0, 0.0], 1.0, 2.0).unwrap();
        let phi = chi.values().clone();
        let grads: Vec<Field> = chi.grad().to_vec();
        let st = localize(&phi, &grads, &chi, &Slice::Uniform(0.0)).unwrap();
        for k in 0..g.node_count() {
            let gn2: f64 = grads.iter().map(|f| f.values()[k].powi(2)).sum();
            let expect = -2.0 * gn2 - phi.values()[k] * chi.laplacian().values()[k];
            assert!((st.g.values()[k] - expect).abs() < 1e-12);
            let d = g.torus_distance(k, &[0.0, 0.0]);
            if d < 1.0 || d > 2.0 {
                assert!(st.g.values()[k].abs() < 1e-12);
            }
        }
    }
}
