//! Observation time sets, the telescoping sequence accumulating at a
//! density point, and the observability verifier.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, SolverInputs};
use crate::error::{invalid, Error, Result};
use crate::lattice::Mask;
use crate::verifiers::{
    digest, fit_log_linear, mass_on, quadrature_weights, run_description, InequalityReport, NodeSeries,
    ReportKind, Verdict,
};

/// A finite union of disjoint open intervals inside `(0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSet {
    intervals: Vec<(f64, f64)>,
    horizon: f64,
}

impl TimeSet {
    pub fn new(mut intervals: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(invalid("T", format!("{horizon} must be positive")));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(a, b) in &intervals {
            if !(a >= 0.0 && a < b && b <= horizon) {
                return Err(invalid("E", format!("interval ({a}, {b}) not a nonempty part of (0, {horizon})")));
            }
        }
        if intervals.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(invalid("E", "intervals overlap"));
        }
        if intervals.is_empty() {
            return Err(invalid("E", "the time set has measure zero"));
        }
        Ok(Self { intervals, horizon })
    }

    pub fn full(horizon: f64) -> Result<Self> {
        Self::new(vec![(0.0, horizon)], horizon)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < t && t < b)
    }

    /// The longest interval, first one on ties.
    pub fn largest(&self) -> (f64, f64) {
        let mut best = self.intervals[0];
        for &iv in &self.intervals[1..] {
            if iv.1 - iv.0 > best.1 - best.0 {
                best = iv;
            }
        }
        best
    }

    pub fn is_subset_of(&self, other: &TimeSet) -> bool {
        self.intervals
            .iter()
            .all(|&(a, b)| other.intervals.iter().any(|&(c, d)| c <= a && b <= d))
    }
}

/// `|E ∩ (lo, hi)|`.
pub fn intersect_measure(set: &TimeSet, lo: f64, hi: f64) -> f64 {
    set.intervals
        .iter()
        .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
        .sum()
}

/// `α = θ/(1-θ)`.
pub fn alpha_from_theta(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", format!("{theta} not in (0, 1)")));
    }
    Ok(theta / (1.0 - theta))
}

/// `κ = √((α+2)/(α+1))`.
pub fn choose_kappa(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("{alpha} must be positive")));
    }
    Ok(((alpha + 2.0) / (alpha + 1.0)).sqrt())
}

/// Sequence `l_m = l + κ^{1-m}(l₁ - l)`, `m = 1..=depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopingSequence {
    pub l: f64,
    pub l1: f64,
    pub kappa: f64,
    pub terms: Vec<f64>,
    /// `|E ∩ (l_{m+1}, l_m)|` for consecutive pairs.
    pub measures: Vec<f64>,
}

impl TelescopingSequence {
    fn build(l: f64, l1: f64, kappa: f64, horizon: f64) -> Vec<f64> {
        let mut terms = Vec::new();
        let mut m = 1i32;
        loop {
            let lm = l + kappa.powi(1 - m) * (l1 - l);
            terms.push(lm);
            if lm - l < 1e-9 * horizon {
                break;
            }
            m += 1;
        }
        terms
    }

    pub fn depth(&self) -> usize {
        self.terms.len()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.terms.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Whether `l_m - l_{m+1} ≤ 3|E ∩ (l_{m+1}, l_m)|` for every retained `m`.
    pub fn admissible(&self) -> bool {
        self.gaps().iter().zip(&self.measures).all(|(g, e)| *g <= 3.0 * e)
    }

    /// `d = 2K̃₂/[κ(l₁ - l)(κ - 1)]`.
    pub fn d_constant(&self, k2: f64) -> f64 {
        2.0 * k2 / (self.kappa * (self.l1 - self.l) * (self.kappa - 1.0))
    }

    /// Writes `m,l_m,gap,E_measure_in_gap,ok`; the last term has no gap.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "m,l_m,gap,E_measure_in_gap,ok")?;
        let gaps = self.gaps();
        for (i, lm) in self.terms.iter().enumerate() {
            match gaps.get(i) {
                Some(g) => {
                    let e = self.measures[i];
                    writeln!(out, "{},{:.16e},{:.16e},{:.16e},{}", i + 1, lm, g, e, *g <= 3.0 * e)?
                }
                None => writeln!(out, "{},{:.16e},,,", i + 1, lm)?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Geometric search grid for `l₁`: `l₁ = l + (T - l)ρ^j`, `j = 1..=candidates`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub ratio: f64,
    pub candidates: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            ratio: 0.9,
            candidates: 400,
        }
    }
}

/// Density point at the midpoint of the largest interval, then the largest
/// `l₁` on the search grid for which every retained gap satisfies the
/// measure inequality.
pub fn density_sequence(set: &TimeSet, kappa: f64, search: SearchGrid) -> Result<TelescopingSequence> {
    if !(kappa > 1.0) {
        return Err(invalid("kappa", format!("{kappa} must exceed 1")));
    }
    if !(search.ratio > 0.0 && search.ratio < 1.0) {
        return Err(invalid("search.ratio", "must lie in (0, 1)"));
    }
    let t_end = set.horizon();
    let (a, b) = set.largest();
    let l = 0.5 * (a + b);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for j in 1..=search.candidates {
        let l1 = l + (t_end - l) * search.ratio.powi(j as i32);
        if l1 - l < 1e-9 * t_end {
            break;
        }
        let terms = TelescopingSequence::build(l, l1, kappa, t_end);
        let measures: Vec<f64> = terms.windows(2).map(|w| intersect_measure(set, w[1], w[0])).collect();
        let seq = TelescopingSequence { l, l1, kappa, terms, measures };
        if seq.admissible() {
            return Ok(seq);
        }
        let violation = seq
            .gaps()
            .iter()
            .zip(&seq.measures)
            .map(|(g, e)| g - 3.0 * e)
            .fold(f64::NEG_INFINITY, f64::max);
        if best.0.is_nan() || violation < best.1 {
            best = (l1, violation);
        }
    }
    Err(Error::NoAdmissibleSequence {
        best_l1: best.0,
        best_violation: best.1,
    })
}

/// `Σ_{m'} (w_{m'} e_{m'} - w_{m'+1} e_{m'+1})` summed term by term, and the
/// closed form `w₀e₀ - w_M e_M`.
pub fn telescoped_sum(weights: &[f64], energies: &[f64]) -> Result<(f64, f64)> {
    if weights.len() != energies.len() || weights.len() < 2 {
        return Err(invalid("sequence", "needs two equally long sequences of length ≥ 2"));
    }
    let p: Vec<f64> = weights.iter().zip(energies).map(|(w, e)| w * e).collect();
    let direct = p.windows(2).map(|w| w[0] - w[1]).sum();
    Ok((direct, p[0] - p[p.len() - 1]))
}

/// Fitted constants of the two-point step
/// `E‖φ(t₂)‖² ≤ εE‖φ(t₁)‖² + (K̃₁/ε^α) e^{K̃₂/(t₂-t₁)} E‖φ(t₂)‖²_ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoungConstants {
    pub theta: f64,
    pub alpha: f64,
    pub ln_k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoungCheck {
    pub t1: f64,
    pub t2: f64,
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Fits `c₀ + c₁/s` over pairs so that `ln X(t₂) - θ ln X(t₁) - (1-θ) ln Y(t₂) ≤ c₀ + c₁/(t₂-t₁)`
/// on every fitting pair (`c₁ ≥ 0` by least squares, `c₀` as the envelope).
fn fit_young(theta: f64, pairs: &[(f64, f64)]) -> Result<YoungConstants> {
    let xs: Vec<f64> = pairs.iter().map(|p| 1.0 / p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let c1 = fit_log_linear(&xs, &ys).map(|f| f.slope.max(0.0)).unwrap_or(0.0);
    let c0 = xs.iter().zip(&ys).map(|(x, y)| y - c1 * x).fold(f64::NEG_INFINITY, f64::max);
    Ok(YoungConstants {
        theta,
        alpha: alpha_from_theta(theta)?,
        ln_k1: c0 / (1.0 - theta),
        k2: c1 / (1.0 - theta),
    })
}

/// Observation geometry and time set for the observability report.
pub struct ObservabilityInputs<'a> {
    pub omega: &'a Mask,
    pub set: &'a TimeSet,
    pub theta: f64,
    pub search: SearchGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityOutcome {
    pub report: InequalityReport,
    pub sequence: TelescopingSequence,
    pub young: YoungConstants,
    pub checks: Vec<YoungCheck>,
}

/// Time nodes used to fit the two-point constants; interleaved with the
/// held-out nodes used to check them.
const YOUNG_SLOTS: usize = 16;

/// `E‖φ(T)‖²` against `E∫_{ω×E} φ²`, with the telescoped bound evaluated
/// using fitted two-point constants.
pub fn observability_report(
    spec: &EnsembleSpec,
    inputs: &SolverInputs<'_>,
    obs: &ObservabilityInputs<'_>,
) -> Result<ObservabilityOutcome> {
    let t_end = inputs.horizon;
    if (obs.set.horizon() - t_end).abs() > 1e-12 * t_end {
        return Err(invalid("E", "time set horizon differs from T"));
    }
    if inputs.steps % YOUNG_SLOTS != 0 {
        return Err(invalid("steps", format!("must be a multiple of {YOUNG_SLOTS}")));
    }
    let alpha = alpha_from_theta(obs.theta)?;
    let kappa = choose_kappa(alpha)?;
    let sequence = density_sequence(obs.set, kappa, obs.search)?;
    let grid = inputs.stepper.grid();
    let full = Mask::full(grid);
    let series = NodeSeries::collect(spec, inputs, &[mass_on(&full), mass_on(obs.omega)])?;
    let times = series.times();
    let mut w_obs = vec![0.0; times.len()];
    for &(a, b) in obs.set.intervals() {
        for (acc, w) in w_obs.iter_mut().zip(quadrature_weights(times, a, b)) {
            *acc += w;
        }
    }
    let lhs = series.at(0, t_end);
    let observed = series.combine(1, &w_obs);
    let desc = serde_json::json!({
        "run": run_description(spec, inputs),
        "E": obs.set,
        "theta": obs.theta,
        "omega": obs.omega.count(),
    });
    let mut rep = InequalityReport::new("observability", ReportKind::Inequality, digest(&desc));
    rep.se = lhs.se;
    let young_placeholder = YoungConstants { theta: obs.theta, alpha, ln_k1: 0.0, k2: 0.0 };
    if lhs.mean == 0.0 {
        rep.flags.push("zero solution: vacuous".into());
        return Ok(ObservabilityOutcome { report: rep, sequence, young: young_placeholder, checks: Vec::new() });
    }
    if observed.mean == 0.0 {
        rep.flags.push("unique continuation violation candidate: nothing observed on ω×E".into());
        rep.lhs = lhs.mean;
        rep.ratio = Some(f64::INFINITY);
        rep.verdict = Verdict::Fail;
        return Ok(ObservabilityOutcome { report: rep, sequence, young: young_placeholder, checks: Vec::new() });
    }
    let stride = inputs.steps / YOUNG_SLOTS;
    let total = |k: usize| series.combine(0, &unit(times.len(), k)).mean;
    let omega_mass = |k: usize| series.combine(1, &unit(times.len(), k)).mean;
    let theta = obs.theta;
    let excess = |i: usize, j: usize| {
        total(j).ln() - theta * total(i).ln() - (1.0 - theta) * omega_mass(j).ln()
    };
    let mut pairs = Vec::new();
    for i in (0..=YOUNG_SLOTS).step_by(2) {
        for j in (i + 2..=YOUNG_SLOTS).step_by(2) {
            let (ki, kj) = (i * stride, j * stride);
            pairs.push((times[kj] - times[ki], excess(ki, kj)));
        }
    }
    let young = fit_young(theta, &pairs)?;
    let held_out = [(1, 3, 0.5), (3, 7, 0.2), (5, 9, 0.1), (7, 15, 0.05), (1, 15, 0.01)];
    let mut checks = Vec::new();
    for &(i, j, eps) in &held_out {
        let (ki, kj) = (i * stride, j * stride);
        let s = times[kj] - times[ki];
        let rhs_ln_second = young.ln_k1 - alpha * f64::ln(eps) + young.k2 / s + omega_mass(kj).ln();
        let rhs = eps * total(ki) + rhs_ln_second.exp();
        let lhs_v = total(kj);
        checks.push(YoungCheck { t1: times[ki], t2: times[kj], eps, lhs: lhs_v, rhs, ok: lhs_v <= rhs });
    }
    let (a, b) = (inputs.coeffs.a_sup(), inputs.coeffs.b_sup());
    let growth = (2.0 * a + b * b) * t_end;
    let d = sequence.d_constant(young.k2);
    // ln of e^{(2a+b²)T} e^{(2+α)dκ²} (3/κ) K̃₃/K̃₂ with K̃₃ = e^{(2a+b²)T(1+α)} K̃₁
    let ln_const = growth
        + (2.0 + alpha) * d * kappa * kappa
        + (3.0 / kappa).ln()
        + growth * (1.0 + alpha)
        + young.ln_k1
        - young.k2.max(f64::MIN_POSITIVE).ln();
    let ln_bound = ln_const + observed.mean.ln();
    rep.lhs = lhs.mean;
    rep.rhs = if ln_bound.exp().is_finite() { ln_bound.exp() } else { f64::MAX };
    rep.ratio = Some(lhs.mean / observed.mean);
    rep.prefactor = Some(ln_const.exp()).filter(|v| v.is_finite());
    rep.tolerance = 3.0 * lhs.se_or_zero() / lhs.mean;
    rep.extras.insert("observed".into(), observed.mean);
    rep.extras.insert("ln_constant".into(), ln_const);
    rep.extras.insert("ln_bound".into(), ln_bound);
    rep.extras.insert("kappa".into(), kappa);
    rep.extras.insert("alpha".into(), alpha);
    rep.extras.insert("d".into(), d);
    rep.extras.insert("ln_K1".into(), young.ln_k1);
    rep.extras.insert("K2".into(), young.k2);
    rep.extras.insert("E_measure".into(), obs.set.measure());
    let bound_ok = lhs.mean.ln() <= ln_bound + (1.0 + rep.tolerance).ln();
    let young_ok = checks.iter().all(|c| c.ok);
    if !young_ok {
        rep.flags.push("two-point step fails at a held-out triple".into());
    }
    if !bound_ok {
        rep.flags.push("telescoped bound fails".into());
    }
    let finite = ln_const.is_finite() && rep.ratio.is_some_and(f64::is_finite);
    rep.verdict = Verdict::from_bool(finite && young_ok && bound_ok);
    Ok(ObservabilityOutcome { report: rep, sequence, young, checks })
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[k] = 1.0;
    w
}
