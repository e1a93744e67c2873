//! Gaussian-weighted frequency functionals of the localized solution.
//!
//! With `u = χφ` and the backward weight `G_λ`:
//! `H(t) = E∫_{B_{R₀}} u² G`, `D(t) = E∫_{B_{R₀}} |∇u|² G`, `N = 2D/H`.
//! Every path contributes a row of per-node terms, so all derived
//! quantities (differences, ratios, margins) share common random numbers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{sample_paths, EnsembleSpec, Estimate, Samples, SolverInputs};
use crate::error::{invalid, Error, Result};
use crate::lattice::{ball_mask, gradient, gradient_norm_sq, integrate, Field, Grid, Mask};
use crate::sde_core::{Coefficient, CoefficientField, Slice, Trajectory};
use crate::weights::{cutoff, localize, weight_field, CutoffProfile, WeightParams};

/// `H` at or below this value leaves `N` undefined.
pub const H_FLOOR: f64 = 1e-30;

/// Per-node terms stored for each path.
const H: usize = 0;
const D: usize = 1;
const UFG: usize = 2;
const B2U2G: usize = 3;
const F2G: usize = 4;
/// `2∫b u² G`, the integrand of the martingale part of `dH`.
const SIG: usize = 5;
/// Brownian increment over `[t_k, t_{k+1}]`, zero at the last node.
const DW: usize = 6;
pub const TERMS: usize = 7;

/// Cutoff, weight and integration ball shared by all frequency quantities.
#[derive(Debug, Clone)]
pub struct FrequencySetup {
    chi: CutoffProfile,
    params: WeightParams,
    ball: Mask,
}

impl FrequencySetup {
    /// `R₀ = (1+2δ)R`, cutoff plateau `B_{(1+3δ/2)R}`.
    pub fn new(grid: &Grid, x0: &[f64], radius: f64, delta: f64, lambda: f64, horizon: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(invalid("delta", format!("{delta} not in (0, 1]")));
        }
        let r0 = (1.0 + 2.0 * delta) * radius;
        let chi = cutoff(grid, x0, (1.0 + 1.5 * delta) * radius, r0)?;
        Self::from_parts(grid, chi, WeightParams::new(lambda, x0.to_vec(), horizon)?)
    }

    pub fn from_parts(grid: &Grid, chi: CutoffProfile, params: WeightParams) -> Result<Self> {
        let ball = ball_mask(grid, chi.center(), chi.outer())?;
        Ok(Self { chi, params, ball })
    }

    pub fn chi(&self) -> &CutoffProfile {
        &self.chi
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn ball(&self) -> &Mask {
        &self.ball
    }

    pub fn r0(&self) -> f64 {
        self.chi.outer()
    }

    fn terms_with(&self, phi: &Field, t: f64, a: &Slice<'_>, b: &Slice<'_>) -> Result<[f64; TERMS]> {
        let grid = phi.grid();
        let g = weight_field(grid, &self.params, t)?;
        let st = localize(phi, &gradient(phi), &self.chi, a)?;
        let grad_u = gradient_norm_sq(&st.u);
        let gv = g.values();
        let (u, f) = (st.u.values(), st.f.values());
        let mut acc = [0.0; TERMS];
        for k in 0..grid.node_count() {
            if !self.ball.contains(k) {
                continue;
            }
            let w = gv[k];
            let uu = u[k] * u[k];
            acc[H] += uu * w;
            acc[D] += grad_u.values()[k] * w;
            acc[UFG] += u[k] * f[k] * w;
            acc[B2U2G] += b.get(k).powi(2) * uu * w;
            acc[F2G] += f[k] * f[k] * w;
            acc[SIG] += 2.0 * b.get(k) * uu * w;
        }
        let vol = grid.cell_volume();
        Ok(acc.map(|v| v * vol))
    }

    /// `[H, D, ∫uFG, ∫b²u²G, ∫F²G, 2∫bu²G, 0]` for one field at time `t`.
    pub fn terms(&self, phi: &Field, t: f64, coeffs: &CoefficientField) -> Result<[f64; TERMS]> {
        self.terms_with(phi, t, &coeffs.a.at_time(t), &coeffs.b.at_time(t))
    }

    /// Terms at every time node, flattened node-major.
    pub fn path_row(&self, traj: &Trajectory, coeffs: &CoefficientField) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(TERMS * traj.times().len());
        let dw = traj.path().increments();
        for (k, (f, &t)) in traj.fields().iter().zip(traj.times()).enumerate() {
            let mut terms = self.terms(f, t, coeffs)?;
            terms[DW] = dw.get(k).copied().unwrap_or(0.0);
            row.extend_from_slice(&terms);
        }
        Ok(row)
    }
}

/// `(H, D)` of a given localized field `u`, without expectation.
pub fn frequency_of_state(u: &Field, setup: &FrequencySetup, t: f64) -> Result<(f64, f64)> {
    let g = weight_field(u.grid(), &setup.params, t)?;
    let h = integrate(&u.zip_map(&g, |x, w| x * x * w)?, Some(&setup.ball))?;
    let d = integrate(&gradient_norm_sq(u).zip_map(&g, |x, w| x * w)?, Some(&setup.ball))?;
    Ok((h, d))
}

/// `‖b‖²` in `W^{1,∞}`, taken as `(sup|b| + sup|∇b|)²` over the whole grid.
pub fn b_norm_sq(coeffs: &CoefficientField) -> f64 {
    (coeffs.b_sup() + coeffs.grad_b_sup()).powi(2)
}

fn ratio_defined(h: f64, num: f64) -> Option<f64> {
    (h > H_FLOOR).then(|| num / h)
}

/// Time series of `H`, `D`, `N` with Monte Carlo standard errors.
#[derive(Debug, Clone)]
pub struct FrequencyTrace {
    times: Vec<f64>,
    samples: Samples,
    pub h: Vec<Estimate>,
    pub d: Vec<Estimate>,
    pub n: Vec<Option<f64>>,
    pub n_se: Vec<Option<f64>>,
    pub lambda: f64,
    pub horizon: f64,
    pub r0: f64,
    pub b_norm_sq: f64,
}

impl FrequencyTrace {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    fn mean_term(&self, k: usize, term: usize) -> f64 {
        self.samples.estimate(k * TERMS + term).mean
    }

    /// Per-path influence of `N(t_k)` (delta method for `2D̄/H̄`).
    fn n_influence(&self, k: usize) -> Option<Vec<f64>> {
        let h = self.h[k].mean;
        let n = self.n[k]?;
        Some(
            (0..self.samples.paths())
                .map(|i| {
                    let row = self.samples.row(i);
                    (2.0 * row[k * TERMS + D] - n * row[k * TERMS + H]) / h
                })
                .collect(),
        )
    }

    /// `E∫F²G / H` and its per-path influence.
    fn forcing_ratio(&self, k: usize) -> Option<(f64, Vec<f64>)> {
        let h = self.h[k].mean;
        let q = ratio_defined(h, self.mean_term(k, F2G))?;
        let infl = (0..self.samples.paths())
            .map(|i| {
                let row = self.samples.row(i);
                (row[k * TERMS + F2G] - q * row[k * TERMS + H]) / h
            })
            .collect();
        Some((q, infl))
    }
}

fn se_of(values: &[f64]) -> f64 {
    Estimate::from_values(values, false).se_or_zero()
}

/// Simulates the ensemble and collects the frequency terms at every node.
pub fn compute_trace(
    spec: &EnsembleSpec,
    inputs: &SolverInputs<'_>,
    setup: &FrequencySetup,
) -> Result<FrequencyTrace> {
    if (setup.params.horizon - inputs.horizon).abs() > 1e-12 * inputs.horizon {
        return Err(invalid("T", "weight horizon differs from the solver horizon"));
    }
    let samples = sample_paths(spec, inputs, |traj| setup.path_row(traj, inputs.coeffs))?;
    let nodes = inputs.steps + 1;
    let times: Vec<f64> = (0..nodes).map(|k| inputs.time(k)).collect();
    let h: Vec<Estimate> = (0..nodes).map(|k| samples.estimate(k * TERMS + H)).collect();
    let d: Vec<Estimate> = (0..nodes).map(|k| samples.estimate(k * TERMS + D)).collect();
    let n: Vec<Option<f64>> = h
        .iter()
        .zip(&d)
        .map(|(hk, dk)| ratio_defined(hk.mean, 2.0 * dk.mean))
        .collect();
    let mut trace = FrequencyTrace {
        times,
        samples,
        h,
        d,
        n,
        n_se: Vec::new(),
        lambda: setup.params.lambda,
        horizon: setup.params.horizon,
        r0: setup.r0(),
        b_norm_sq: b_norm_sq(inputs.coeffs),
    };
    trace.n_se = (0..nodes)
        .map(|k| trace.n_influence(k).map(|v| se_of(&v)))
        .collect();
    Ok(trace)
}

/// `(H, D, N)` at node `k`; `N` is `None` when `H` is below the floor.
pub fn frequency_at(trace: &FrequencyTrace, k: usize) -> (f64, f64, Option<f64>) {
    (trace.h[k].mean, trace.d[k].mean, trace.n[k])
}

/// Residual of `dH/dt = -2D + 2E∫uFG + E∫b²u²G` at interior nodes.
///
/// Each path's centered difference of `H` also carries the increment of the
/// martingale `∫2∫bu²G dW`. Its left-point Itô sum has expectation zero, so
/// it is subtracted path by path; the mean residual is unchanged while the
/// noise it would add is removed. `raw_max_residual` keeps the plain version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DhReport {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub se: Vec<f64>,
    pub max_residual: f64,
    /// Largest residual when the stochastic integral term is not removed.
    pub raw_max_residual: f64,
    /// Largest `|dH/dt|` seen, for scale.
    pub scale: f64,
}

pub fn check_dh_identity(trace: &FrequencyTrace) -> Result<DhReport> {
    let nodes = trace.len();
    if nodes < 3 {
        return Err(invalid("steps", "the identity check needs at least 3 time nodes"));
    }
    let dt = trace.dt();
    let s = &trace.samples;
    let mut report = DhReport {
        times: Vec::new(),
        residual: Vec::new(),
        se: Vec::new(),
        max_residual: 0.0,
        raw_max_residual: 0.0,
        scale: 0.0,
    };
    for k in 1..nodes - 1 {
        let mut raw = Vec::with_capacity(s.paths());
        let per_path: Vec<f64> = (0..s.paths())
            .map(|i| {
                let r = s.row(i);
                let at = |j: usize, term: usize| r[j * TERMS + term];
                let dh = (at(k + 1, H) - at(k - 1, H)) / (2.0 * dt);
                let rhs = -2.0 * at(k, D) + 2.0 * at(k, UFG) + at(k, B2U2G);
                // left-point Itô sums over both steps; each has mean zero
                let ito = (at(k - 1, SIG) * at(k - 1, DW) + at(k, SIG) * at(k, DW)) / (2.0 * dt);
                raw.push(dh - rhs);
                dh - rhs - ito
            })
            .collect();
        let est = Estimate::from_values(&per_path, false);
        let raw_mean = Estimate::from_values(&raw, false).mean;
        report.raw_max_residual = report.raw_max_residual.max(raw_mean.abs());
        let dh_mean = (trace.h[k + 1].mean - trace.h[k - 1].mean) / (2.0 * dt);
        report.scale = report.scale.max(dh_mean.abs());
        report.times.push(trace.times[k]);
        report.max_residual = report.max_residual.max(est.mean.abs());
        report.residual.push(est.mean);
        report.se.push(est.se_or_zero());
    }
    Ok(report)
}

/// Noise-free run with the same drift, data and step.
fn deterministic_twin<'a>(inputs: &SolverInputs<'a>, det: &'a CoefficientField) -> SolverInputs<'a> {
    SolverInputs { coeffs: det, ..*inputs }
}

/// Discretization allowance `C_disc·dt` for the identity residual, with
/// `C_disc = 2·max|residual|/dt` of the noise-free run at the same step.
pub fn dh_allowance(inputs: &SolverInputs<'_>, setup: &FrequencySetup) -> Result<f64> {
    let det = CoefficientField::new(inputs.coeffs.a.clone(), Coefficient::Constant(0.0));
    let twin = deterministic_twin(inputs, &det);
    let rep = check_dh_identity(&compute_trace(&EnsembleSpec::new(1, 0), &twin, setup)?)?;
    Ok(2.0 * rep.max_residual)
}

/// Runs the identity check at `steps` and `2·steps` on shared paths and
/// returns both reports with the ratio of their maximal residuals.
pub fn dh_refinement(
    spec: &EnsembleSpec,
    inputs: &SolverInputs<'_>,
    setup: &FrequencySetup,
) -> Result<(DhReport, DhReport, f64)> {
    let fine_steps = 2 * inputs.steps;
    let coarse_inputs = inputs.with_fine_steps(fine_steps);
    let fine_inputs = inputs.with_steps(fine_steps).with_fine_steps(fine_steps);
    let coarse = check_dh_identity(&compute_trace(spec, &coarse_inputs, setup)?)?;
    let fine = check_dh_identity(&compute_trace(spec, &fine_inputs, setup)?)?;
    let ratio = coarse.max_residual / fine.max_residual;
    Ok((coarse, fine, ratio))
}

/// Margins of the differential inequality for `N` at interior nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub times: Vec<f64>,
    /// `RHS - dN/dt`.
    pub margin: Vec<f64>,
    pub se: Vec<f64>,
    pub tolerance: Vec<f64>,
    pub min_margin: f64,
    pub violations: usize,
    /// `(T - t + λ) N(t)` at every node.
    pub scaled_frequency: Vec<f64>,
    /// Nodes where `(T-t+λ)N` increased by more than the allowance.
    pub scaled_increases: usize,
}

/// Checks `dN/dt ≤ (1/(T-t+λ) + 2‖b‖²)N + 2‖b‖² + E∫F²G/H`.
///
/// `disc_allowance` is the discretization budget `C_disc·dt` added to three
/// propagated standard errors.
pub fn check_monotonicity(trace: &FrequencyTrace, disc_allowance: f64) -> Result<MonotonicityReport> {
    let nodes = trace.len();
    if nodes < 3 {
        return Err(invalid("steps", "the monotonicity check needs at least 3 time nodes"));
    }
    if let Some(k) = trace.n.iter().position(Option::is_none) {
        return Err(Error::Degenerate(format!(
            "N undefined at t = {} (H below {H_FLOOR:e})",
            trace.times[k]
        )));
    }
    let dt = trace.dt();
    let b2 = trace.b_norm_sq;
    let paths = trace.samples.paths();
    let n_at = |k: usize| trace.n[k].expect("checked above");
    let infl: Vec<Vec<f64>> = (0..nodes)
        .map(|k| trace.n_influence(k).expect("checked above"))
        .collect();
    let mut report = MonotonicityReport {
        times: Vec::new(),
        margin: Vec::new(),
        se: Vec::new(),
        tolerance: Vec::new(),
        min_margin: f64::INFINITY,
        violations: 0,
        scaled_frequency: (0..nodes)
            .map(|k| (trace.horizon - trace.times[k] + trace.lambda) * n_at(k))
            .collect(),
        scaled_increases: 0,
    };
    for k in 1..nodes - 1 {
        let s = trace.horizon - trace.times[k] + trace.lambda;
        let coef = 1.0 / s + 2.0 * b2;
        let (q, q_infl) = trace.forcing_ratio(k).expect("H above floor");
        let dn = (n_at(k + 1) - n_at(k - 1)) / (2.0 * dt);
        let margin = coef * n_at(k) + 2.0 * b2 + q - dn;
        let m_infl: Vec<f64> = (0..paths)
            .map(|i| coef * infl[k][i] + q_infl[i] - (infl[k + 1][i] - infl[k - 1][i]) / (2.0 * dt))
            .collect();
        let se = se_of(&m_infl);
        let tol = 3.0 * se + disc_allowance;
        if margin < -tol {
            report.violations += 1;
        }
        report.min_margin = report.min_margin.min(margin);
        report.times.push(trace.times[k]);
        report.margin.push(margin);
        report.se.push(se);
        report.tolerance.push(tol);
    }
    report.scaled_increases = report
        .scaled_frequency
        .windows(2)
        .filter(|w| w[1] - w[0] > disc_allowance * dt)
        .count();
    Ok(report)
}

/// Calibrates `C_disc` from the noise-free version of the run: the margin
/// is recomputed at half the step and `C_disc = 2·max|Δmargin|/dt` over the
/// shared nodes.
pub fn calibrate_disc_constant(inputs: &SolverInputs<'_>, setup: &FrequencySetup) -> Result<f64> {
    let det = CoefficientField::new(inputs.coeffs.a.clone(), Coefficient::Constant(0.0));
    let base = deterministic_twin(inputs, &det);
    let spec = EnsembleSpec::new(1, 0);
    let coarse = check_monotonicity(&compute_trace(&spec, &base, setup)?, 0.0)?;
    let fine_inputs = base.with_steps(2 * inputs.steps).with_fine_steps(2 * inputs.steps);
    let fine = check_monotonicity(&compute_trace(&spec, &fine_inputs, setup)?, 0.0)?;
    let dt = inputs.dt();
    let worst = coarse
        .margin
        .iter()
        .enumerate()
        .map(|(j, m)| (m - fine.margin[2 * (j + 1) - 1]).abs())
        .fold(0.0, f64::max);
    Ok(2.0 * worst / dt)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,H,H_se,D,D_se,N,margin`; undefined entries are left empty.
pub fn write_trace_csv(
    trace: &FrequencyTrace,
    margins: Option<&MonotonicityReport>,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,H,H_se,D,D_se,N,margin")?;
    for k in 0..trace.len() {
        let margin = margins
            .and_then(|m| (k >= 1 && k < trace.len() - 1).then(|| m.margin[k - 1]))
            .map(fmt17)
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt17(trace.times[k]),
            fmt17(trace.h[k].mean),
            fmt17(trace.h[k].se_or_zero()),
            fmt17(trace.d[k].mean),
            fmt17(trace.d[k].se_or_zero()),
            trace.n[k].map(fmt17).unwrap_or_default(),
            margin
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde_core::Stepper;

    fn setup_1d() -> (Grid, Stepper, FrequencySetup) {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let s = Stepper::new(&g);
        let fs = FrequencySetup::new(&g, &[0.0], 1.0, 1.0, 0.5, 0.25).unwrap();
        (g, s, fs)
    }

    #[test]
    fn zero_state_leaves_n_undefined() {
        let (g, s, fs) = setup_1d();
        let zero = Field::zeros(&g);
        let c = CoefficientField::heat();
        let inputs = SolverInputs::new(&s, &zero, &c, 0.25, 8);
        let tr = compute_trace(&EnsembleSpec::new(2, 0), &inputs, &fs).unwrap();
        let (h, d, n) = frequency_at(&tr, 3);
        assert_eq!((h, d, n), (0.0, 0.0, None));
        assert!(check_monotonicity(&tr, 0.0).is_err());
        let dh = check_dh_identity(&tr).unwrap();
        assert_eq!(dh.max_residual, 0.0);
    }

    #[test]
    fn constant_state_has_zero_frequency() {
        let (g, _, fs) = setup_1d();
        let one = Field::from_fn(&g, |_| 1.0);
        let (h, _) = frequency_of_state(&one, &fs, 0.1).unwrap();
        let g_field = weight_field(&g, fs.params(), 0.1).unwrap();
        let expected = integrate(&g_field, Some(fs.ball())).unwrap();
        assert!((h - expected).abs() < 1e-14);
        let (_, d) = frequency_of_state(&one, &fs, 0.1).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn frequency_is_scale_invariant() {
        let (g, s, fs) = setup_1d();
        let phi0 = Field::from_fn(&g, |p| (-(p[0] - 0.3).powi(2) * 2.0).exp());
        let c = CoefficientField::constant(0.3, 0.4);
        let spec = EnsembleSpec::new(16, 3);
        let a = compute_trace(&spec, &SolverInputs::new(&s, &phi0, &c, 0.25, 32), &fs).unwrap();
        let big = phi0.scale(7.0);
        let b = compute_trace(&spec, &SolverInputs::new(&s, &big, &c, 0.25, 32), &fs).unwrap();
        for (x, y) in a.n.iter().zip(&b.n) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).abs() <= 1e-10 * x.abs());
        }
        assert!(a.h.iter().all(|e| e.mean >= 0.0) && a.d.iter().all(|e| e.mean >= 0.0));
    }

    #[test]
    fn dh_identity_converges_at_first_order() {
        let (g, s, fs) = setup_1d();
        // supported well inside the plateau (radius 2.5)
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0] * 8.0).exp());
        let c = CoefficientField::heat();
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.25, 32);
        let (coarse, fine, ratio) = dh_refinement(&EnsembleSpec::new(1, 0), &inputs, &fs).unwrap();
        assert!(coarse.max_residual > fine.max_residual);
        assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn scaled_frequency_decreases_without_forcing() {
        let (g, s, fs) = setup_1d();
        let phi0 = Field::from_fn(&g, |p| (-(p[0] - 0.2).powi(2) * 8.0).exp() * (1.0 + p[0]));
        let c = CoefficientField::heat();
        let inputs = SolverInputs::new(&s, &phi0, &c, 0.25, 32);
        let tr = compute_trace(&EnsembleSpec::new(1, 0), &inputs, &fs).unwrap();
        let c_disc = calibrate_disc_constant(&inputs, &fs).unwrap();
        let rep = check_monotonicity(&tr, c_disc * tr.dt()).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
        assert_eq!(rep.scaled_increases, 0, "{:?}", rep.scaled_frequency);
    }

    #[test]
    fn trace_csv_has_fixed_columns() {
        let (g, s, fs) = setup_1d();
        let phi0 = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
        let c = CoefficientField::heat();
        let tr = compute_trace(&EnsembleSpec::new(1, 0), &SolverInputs::new(&s, &phi0, &c, 0.25, 4), &fs).unwrap();
        let rep = check_monotonicity(&tr, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("frequency_trace.csv");
        write_trace_csv(&tr, Some(&rep), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,H,H_se,D,D_se,N,margin");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].ends_with(','));
        let h: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(h.to_bits(), tr.h[1].mean.to_bits());
    }
}
