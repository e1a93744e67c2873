//! Configuration-driven experiments: a TOML file in, `report.json`,
//! plot-ready CSVs and a run manifest out.
//!
//! `report.json` depends only on the configuration (after overrides), never
//! on the worker count, the output location or the clock. Timestamps live in
//! `manifest.json`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{EnsembleSpec, SolverInputs};
use crate::error::{invalid, Error, Result};
use crate::frequency::{
    calibrate_disc_constant, check_dh_identity, check_monotonicity, compute_trace, dh_allowance, dh_refinement,
    write_trace_csv, FrequencySetup,
};
use crate::hum_control::{gramian_apply, solve_hum, verify_duality_identity, write_control_csv, ControlProblem};
use crate::lattice::{cube_tiling, Field, Grid, Mask, Tiling};
use crate::observability::{observability_report, ObservabilityInputs, SearchGrid, TimeSet};
use crate::scenarios::{bump, random_coefficients, random_profile, BumpFamily};
use crate::sde_core::{CoefficientField, Stepper};
use crate::verifiers::{
    calibrate_c1, check_caccioppoli, check_energy, check_global_interpolation, check_gradient_estimate,
    check_h0_lower_bound, check_two_ball_one_cylinder, digest, fit_two_ball, run_description, H0Geometry,
    InequalityReport, ReportKind, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Energy,
    Caccioppoli,
    Gradient,
    H0,
    DhIdentity,
    Monotonicity,
    TwoBall,
    Interpolation,
    Observability,
    Hum,
    All,
}

impl ExperimentKind {
    pub const SINGLE: [ExperimentKind; 10] = [
        ExperimentKind::Energy,
        ExperimentKind::Caccioppoli,
        ExperimentKind::Gradient,
        ExperimentKind::H0,
        ExperimentKind::DhIdentity,
        ExperimentKind::Monotonicity,
        ExperimentKind::TwoBall,
        ExperimentKind::Interpolation,
        ExperimentKind::Observability,
        ExperimentKind::Hum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Energy => "energy",
            ExperimentKind::Caccioppoli => "caccioppoli",
            ExperimentKind::Gradient => "gradient",
            ExperimentKind::H0 => "h0",
            ExperimentKind::DhIdentity => "dh-identity",
            ExperimentKind::Monotonicity => "monotonicity",
            ExperimentKind::TwoBall => "two-ball",
            ExperimentKind::Interpolation => "interpolation",
            ExperimentKind::Observability => "observability",
            ExperimentKind::Hum => "hum",
            ExperimentKind::All => "all",
        }
    }

    /// The estimate each experiment verifies.
    pub fn verifies(self) -> &'static str {
        match self {
            ExperimentKind::Energy => "energy estimate: E|phi(T)|^2 <= exp((2|a|+|b|^2)T) E|phi0|^2",
            ExperimentKind::Caccioppoli => "local energy (Caccioppoli) inequality on B_r inside B_R",
            ExperimentKind::Gradient => "interior gradient estimate on B_R from the mass on B_2R",
            ExperimentKind::H0 => "small-time lower bound with the waiting time h0",
            ExperimentKind::DhIdentity => "derivative identity for the weighted mass H",
            ExperimentKind::Monotonicity => "monotonicity inequality for the frequency function N",
            ExperimentKind::TwoBall => "two-ball one-cylinder interpolation inequality",
            ExperimentKind::Interpolation => "global interpolation inequality with observation on omega",
            ExperimentKind::Observability => "observability inequality on omega x E via telescoping",
            ExperimentKind::Hum => "null controllability of the backward equation by HUM",
            ExperimentKind::All => "every experiment above in sequence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInfo {
    pub name: String,
    pub verifies: String,
}

/// One entry per experiment kind, in a fixed order.
pub fn list_experiments() -> Vec<ExperimentInfo> {
    ExperimentKind::SINGLE
        .iter()
        .map(|k| ExperimentInfo {
            name: k.name().into(),
            verifies: k.verifies().into(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    /// Defaults to `T/4`.
    pub tau1: Option<f64>,
    /// Defaults to `T/2`.
    pub tau2: Option<f64>,
}

impl TimeConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("key `time.horizon`: {} must be positive", self.horizon)));
        }
        match (self.steps, self.dt) {
            (Some(_), Some(_)) => Err(Error::Config("keys `time.steps` and `time.dt` are exclusive".into())),
            (None, None) => Err(Error::Config("one of `time.steps` or `time.dt` is required".into())),
            (Some(0), None) => Err(Error::Config("key `time.steps` must be positive".into())),
            (Some(k), None) => Ok(k),
            (None, Some(dt)) => {
                let k = (self.horizon / dt).round();
                if !(dt > 0.0) || k < 1.0 || (k * dt - self.horizon).abs() > 1e-9 * self.horizon {
                    return Err(Error::Config(format!("key `time.dt`: {dt} does not divide T = {}", self.horizon)));
                }
                Ok(k as usize)
            }
        }
    }

    pub fn taus(&self) -> (f64, f64) {
        (self.tau1.unwrap_or(0.25 * self.horizon), self.tau2.unwrap_or(0.5 * self.horizon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientKind {
    Constant,
    Random,
    Heat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub kind: CoefficientKind,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub a_max: f64,
    #[serde(default = "half")]
    pub b_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Number of random fields, seeded `seed, seed+1, …`.
    #[serde(default = "one_usize")]
    pub count: usize,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            kind: CoefficientKind::Heat,
            a: 0.0,
            b: 0.0,
            a_max: 1.0,
            b_max: 0.5,
            seed: 0,
            count: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Gaussian,
    Bumps,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub center: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "ten")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Box of bump centers (every coordinate), defaults to `[-L/4, L/4]`.
    pub center_lo: Option<f64>,
    pub center_hi: Option<f64>,
    #[serde(default = "width_lo")]
    pub width_lo: f64,
    #[serde(default = "width_hi")]
    pub width_hi: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            center: None,
            width: 1.0,
            amplitude: 1.0,
            count: 10,
            seed: 0,
            center_lo: None,
            center_hi: None,
            width_lo: width_lo(),
            width_hi: width_hi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub x0: Option<Vec<f64>>,
    #[serde(default = "half")]
    pub r: f64,
    #[serde(rename = "R", default = "one")]
    pub big_r: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "half")]
    pub lambda: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            x0: None,
            r: 0.5,
            big_r: 1.0,
            delta: 1.0,
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Does not affect any result.
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            paths: 1,
            seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Intervals of `E`; defaults to `[0, T]`.
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    /// Interpolation exponent; fitted from the data when absent.
    pub theta: Option<f64>,
    #[serde(default = "search_ratio")]
    pub search_ratio: f64,
    #[serde(default = "search_candidates")]
    pub search_candidates: usize,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            intervals: Vec::new(),
            theta: None,
            search_ratio: search_ratio(),
            search_candidates: search_candidates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Calibrated on a fixed pure-heat suite when absent.
    pub c1: Option<f64>,
    #[serde(default = "cg_tolerance")]
    pub cg_tolerance: f64,
    #[serde(default = "cg_max_iterations")]
    pub cg_max_iterations: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            c1: None,
            cg_tolerance: cg_tolerance(),
            cg_max_iterations: cg_max_iterations(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn one_usize() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn width_lo() -> f64 {
    0.1
}
fn width_hi() -> f64 {
    0.4
}
fn search_ratio() -> f64 {
    SearchGrid::default().ratio
}
fn search_candidates() -> usize {
    SearchGrid::default().candidates
}
fn cg_tolerance() -> f64 {
    1e-3
}
fn cg_max_iterations() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace("unknown field", "unknown key")))
    }
}

/// Finds a config by path, or by bare name among the bundled configs.
pub fn resolve_config(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let bare = !name.contains(['/', '\\']);
    if bare {
        let stem = name.strip_suffix(".toml").unwrap_or(name);
        let bundled = bundled_config_dir().join(format!("{stem}.toml"));
        if bundled.is_file() {
            return Ok(bundled);
        }
    }
    Err(Error::Config(format!("config not found: {name}")))
}

pub fn bundled_config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn load_config(name: &str) -> Result<(ExperimentConfig, String, PathBuf)> {
    let path = resolve_config(name)?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("config not found: {name} ({e})")))?;
    let cfg = ExperimentConfig::parse(&text)?;
    Ok((cfg, text, path))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub paths_override: Option<usize>,
    pub workers_override: Option<usize>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub reports: Vec<InequalityReport>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub config_path: String,
    pub ensemble_seed: u64,
    pub coefficient_seed: u64,
    pub initial_seed: u64,
    pub paths: usize,
    pub workers: Option<usize>,
    pub version: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub report: RunReport,
}

/// Loads, runs and writes artifacts for one config.
pub fn run_experiment(name: &str, opts: &RunOptions) -> Result<RunOutcome> {
    let (cfg, text, path) = load_config(name)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
    let out = opts
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("uclab-out").join(&stem));
    let cfg = apply_overrides(cfg, opts);
    std::fs::create_dir_all(&out)?;
    let report = run_config(&cfg, &out)?;
    write_json(&out.join("report.json"), &report)?;
    let manifest = Manifest {
        experiment: cfg.experiment.name().into(),
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        config_path: path.display().to_string(),
        ensemble_seed: cfg.ensemble.seed,
        coefficient_seed: cfg.coefficients.seed,
        initial_seed: cfg.initial.seed,
        paths: cfg.ensemble.paths,
        workers: cfg.ensemble.workers,
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { output_dir: out, report })
}

pub fn apply_overrides(mut cfg: ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    if let Some(s) = opts.seed_override {
        cfg.ensemble.seed = s;
    }
    if let Some(m) = opts.paths_override {
        cfg.ensemble.paths = m;
    }
    if let Some(w) = opts.workers_override {
        cfg.ensemble.workers = Some(w);
    }
    cfg
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Runs the configured experiment(s), writing CSVs into `out`.
pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let ctx = Context::new(cfg, out)?;
    let kinds: Vec<ExperimentKind> = match cfg.experiment {
        ExperimentKind::All => ExperimentKind::SINGLE.to_vec(),
        k => vec![k],
    };
    let mut reports = Vec::new();
    for kind in kinds {
        reports.extend(ctx.run(kind)?);
    }
    let all_pass = reports.iter().all(InequalityReport::passed);
    Ok(RunReport {
        experiment: cfg.experiment.name().into(),
        reports,
        all_pass,
    })
}

struct Context<'c> {
    cfg: &'c ExperimentConfig,
    out: &'c Path,
    grid: Grid,
    stepper: Stepper,
    spec: EnsembleSpec,
    steps: usize,
    x0: Vec<f64>,
    coeffs: Vec<CoefficientField>,
    data: Vec<Field>,
}

impl<'c> Context<'c> {
    fn new(cfg: &'c ExperimentConfig, out: &'c Path) -> Result<Self> {
        let g = &cfg.grid;
        let grid = Grid::new(g.dim, g.extent, g.points)?;
        let steps = cfg.time.steps()?;
        if cfg.ensemble.paths == 0 {
            return Err(Error::Config("key `ensemble.paths` must be positive".into()));
        }
        let mut spec = EnsembleSpec::new(cfg.ensemble.paths, cfg.ensemble.seed);
        if let Some(w) = cfg.ensemble.workers {
            if w == 0 {
                return Err(Error::Config("key `ensemble.workers` must be positive".into()));
            }
            spec = spec.with_workers(w);
        }
        let x0 = point(&grid, cfg.geometry.x0.as_deref(), "geometry.x0")?;
        let coeffs = coefficient_fields(&grid, &cfg.coefficients)?;
        let data = initial_data(&grid, &cfg.initial)?;
        Ok(Self {
            cfg,
            out,
            stepper: Stepper::new(&grid),
            grid,
            spec,
            steps,
            x0,
            coeffs,
            data,
        })
    }

    fn inputs<'a>(&'a self, coeffs: &'a CoefficientField, phi0: &'a Field) -> SolverInputs<'a> {
        SolverInputs::new(&self.stepper, phi0, coeffs, self.cfg.time.horizon, self.steps)
    }

    fn c1(&self) -> Result<f64> {
        match self.cfg.tolerances.c1 {
            Some(c) => Ok(c),
            None => calibrate_c1(),
        }
    }

    fn time_set(&self) -> Result<TimeSet> {
        let t = self.cfg.time.horizon;
        if self.cfg.observation.intervals.is_empty() {
            return TimeSet::full(t);
        }
        TimeSet::new(self.cfg.observation.intervals.iter().map(|i| (i[0], i[1])).collect(), t)
    }

    fn tiling(&self) -> Result<Tiling> {
        cube_tiling(&self.grid, self.cfg.geometry.big_r)
    }

    fn omega(&self, tiling: &Tiling) -> Result<Mask> {
        tiling.ball_union(&self.grid, self.cfg.geometry.r)
    }

    fn run(&self, kind: ExperimentKind) -> Result<Vec<InequalityReport>> {
        match kind {
            ExperimentKind::Energy => self.each(|inp| check_energy(&self.spec, inp)),
            ExperimentKind::Caccioppoli => {
                let geo = &self.cfg.geometry;
                let (t1, t2) = self.cfg.time.taus();
                self.each(|inp| check_caccioppoli(&self.spec, inp, &self.x0, geo.r, geo.big_r, t1, t2))
            }
            ExperimentKind::Gradient => {
                let (t1, _) = self.cfg.time.taus();
                self.each(|inp| check_gradient_estimate(&self.spec, inp, &self.x0, self.cfg.geometry.big_r, t1))
            }
            ExperimentKind::H0 => {
                let c1 = self.c1()?;
                let g = &self.cfg.geometry;
                let (tau1, tau2) = self.cfg.time.taus();
                let geo = H0Geometry {
                    x0: self.x0.clone(),
                    r: g.r,
                    big_r: g.big_r,
                    delta: g.delta,
                    tau1,
                    tau2,
                };
                self.each(|inp| check_h0_lower_bound(&self.spec, inp, &geo, c1))
            }
            ExperimentKind::DhIdentity => self.dh_identity(),
            ExperimentKind::Monotonicity => self.monotonicity(),
            ExperimentKind::TwoBall => self.two_ball(),
            ExperimentKind::Interpolation => Ok(self.interpolation()?.0),
            ExperimentKind::Observability => self.observability(),
            ExperimentKind::Hum => self.hum(),
            ExperimentKind::All => Err(invalid("experiment", "`all` is not a single experiment")),
        }
    }

    /// One report per coefficient field and initial datum.
    fn each(&self, check: impl Fn(&SolverInputs<'_>) -> Result<InequalityReport>) -> Result<Vec<InequalityReport>> {
        let mut reports = Vec::new();
        for c in &self.coeffs {
            for d in &self.data {
                reports.push(check(&self.inputs(c, d))?);
            }
        }
        Ok(reports)
    }

    fn frequency_setup(&self) -> Result<FrequencySetup> {
        let g = &self.cfg.geometry;
        FrequencySetup::new(&self.grid, &self.x0, g.big_r, g.delta, g.lambda, self.cfg.time.horizon)
    }

    fn dh_identity(&self) -> Result<Vec<InequalityReport>> {
        let setup = self.frequency_setup()?;
        let mut reports = Vec::new();
        for (ci, c) in self.coeffs.iter().enumerate() {
            for (di, d) in self.data.iter().enumerate() {
                let inputs = self.inputs(c, d);
                let desc = serde_json::json!({"run": run_description(&self.spec, &inputs), "check": "dh-identity", "geometry": self.cfg.geometry});
                let mut rep = InequalityReport::new("derivative identity for H", ReportKind::Inequality, digest(&desc));
                if c.is_deterministic() {
                    let (coarse, fine, ratio) = dh_refinement(&self.spec, &inputs, &setup)?;
                    rep.set_sides(coarse.max_residual, fine.max_residual);
                    rep.ratio = Some(ratio);
                    rep.extra("refinement_ratio", ratio);
                    rep.extra("scale", coarse.scale);
                    rep.tolerance = 0.0;
                    rep.verdict = Verdict::from_bool((1.5..=3.0).contains(&ratio));
                    if !rep.passed() {
                        rep.flags.push(format!("residual ratio {ratio} under dt halving outside [1.5, 3]"));
                    }
                } else {
                    let trace = compute_trace(&self.spec, &inputs, &setup)?;
                    let dh = check_dh_identity(&trace)?;
                    let allowance = dh_allowance(&inputs, &setup)?;
                    let mut worst: f64 = 0.0;
                    let mut bad = 0usize;
                    for (res, se) in dh.residual.iter().zip(&dh.se) {
                        let tol = 3.0 * se + allowance;
                        if res.abs() > tol {
                            bad += 1;
                        }
                        if tol > 0.0 {
                            worst = worst.max(res.abs() / tol);
                        }
                    }
                    rep.set_sides(dh.max_residual, allowance);
                    rep.ratio = Some(worst);
                    rep.extra("allowance", allowance);
                    rep.extra("raw_max_residual", dh.raw_max_residual);
                    rep.extra("scale", dh.scale);
                    rep.extra("worst_normalized", worst);
                    rep.extra("violations", bad as f64);
                    rep.se = dh.se.iter().copied().reduce(f64::max);
                    rep.verdict = Verdict::from_bool(bad == 0);
                    if ci == 0 && di == 0 {
                        write_trace_csv(&trace, None, &self.out.join("frequency_trace.csv"))?;
                    }
                }
                reports.push(rep);
            }
        }
        Ok(reports)
    }

    fn monotonicity(&self) -> Result<Vec<InequalityReport>> {
        let setup = self.frequency_setup()?;
        let mut reports = Vec::new();
        for (ci, c) in self.coeffs.iter().enumerate() {
            for (di, d) in self.data.iter().enumerate() {
                let inputs = self.inputs(c, d);
                let trace = compute_trace(&self.spec, &inputs, &setup)?;
                let c_disc = calibrate_disc_constant(&inputs, &setup)?;
                let mono = check_monotonicity(&trace, c_disc * inputs.dt())?;
                let desc = serde_json::json!({"run": run_description(&self.spec, &inputs), "check": "monotonicity", "geometry": self.cfg.geometry});
                let mut rep = InequalityReport::new("frequency monotonicity", ReportKind::Inequality, digest(&desc));
                // lhs/rhs as "0 ≤ min margin + its tolerance"
                let min_tol = mono.tolerance.iter().copied().fold(f64::INFINITY, f64::min);
                rep.set_sides(-mono.min_margin, min_tol);
                rep.ratio = None;
                rep.tolerance = min_tol;
                rep.extra("min_margin", mono.min_margin);
                rep.extra("c_disc", c_disc);
                rep.extra("violations", mono.violations as f64);
                rep.extra("scaled_increases", mono.scaled_increases as f64);
                rep.se = mono.se.iter().copied().reduce(f64::max);
                rep.verdict = Verdict::from_bool(mono.violations == 0);
                if ci == 0 && di == 0 {
                    write_trace_csv(&trace, Some(&mono), &self.out.join("frequency_trace.csv"))?;
                }
                reports.push(rep);
            }
        }
        Ok(reports)
    }

    fn two_ball(&self) -> Result<Vec<InequalityReport>> {
        let c1 = self.c1()?;
        let g = &self.cfg.geometry;
        let mut reports = Vec::new();
        for c in &self.coeffs {
            let per: Vec<InequalityReport> = self
                .data
                .iter()
                .map(|d| check_two_ball_one_cylinder(&self.spec, &self.inputs(c, d), &self.x0, g.r, g.big_r, g.delta, c1))
                .collect::<Result<_>>()?;
            reports.push(fit_two_ball(&per)?);
            reports.extend(per);
        }
        Ok(reports)
    }

    fn interpolation(&self) -> Result<(Vec<InequalityReport>, Vec<f64>)> {
        let tiling = self.tiling()?;
        let mut reports = Vec::new();
        let mut thetas = Vec::new();
        let mut csv = String::from("coefficient,datum,initial,total_t,observed_t\n");
        for (ci, c) in self.coeffs.iter().enumerate() {
            let base = self.inputs(c, &self.data[0]);
            let (rep, data) = check_global_interpolation(&self.spec, &base, &tiling, self.cfg.geometry.r, &self.data)?;
            for (di, d) in data.iter().enumerate() {
                csv.push_str(&format!("{ci},{di},{:.16e},{:.16e},{:.16e}\n", d.initial, d.total_t, d.observed_t));
            }
            thetas.push(rep.exponent.unwrap_or(f64::NAN));
            reports.push(rep);
        }
        std::fs::write(self.out.join("interpolation.csv"), csv)?;
        Ok((reports, thetas))
    }

    fn observability(&self) -> Result<Vec<InequalityReport>> {
        let tiling = self.tiling()?;
        let omega = self.omega(&tiling)?;
        let set = self.time_set()?;
        let search = SearchGrid {
            ratio: self.cfg.observation.search_ratio,
            candidates: self.cfg.observation.search_candidates,
        };
        let mut reports = Vec::new();
        let thetas: Vec<f64> = match self.cfg.observation.theta {
            Some(t) => vec![t; self.coeffs.len()],
            None => {
                let (fits, thetas) = self.interpolation()?;
                reports.extend(fits);
                thetas
            }
        };
        let mut outcomes = Vec::new();
        for (c, &theta) in self.coeffs.iter().zip(&thetas) {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(invalid("theta", format!("{theta} not in (0, 1); set observation.theta")));
            }
            for d in &self.data {
                let obs = ObservabilityInputs { omega: &omega, set: &set, theta, search };
                let outcome = observability_report(&self.spec, &self.inputs(c, d), &obs)?;
                if outcomes.is_empty() {
                    outcome.sequence.write_csv(&self.out.join("telescoping.csv"))?;
                }
                reports.push(outcome.report.clone());
                outcomes.push(outcome);
            }
        }
        write_json(&self.out.join("observability_report.json"), &outcomes)?;
        Ok(reports)
    }

    fn hum(&self) -> Result<Vec<InequalityReport>> {
        let tiling = self.tiling()?;
        let omega = self.omega(&tiling)?;
        let set = self.time_set()?;
        let tol = &self.cfg.tolerances;
        let mut reports = Vec::new();
        let mut summaries = Vec::new();
        for (ci, c) in self.coeffs.iter().enumerate() {
            let mut problem = ControlProblem::new(self.data[0].clone(), omega.clone(), set.clone(), c.a.clone(), self.steps)?;
            problem.b1 = c.b.clone();
            problem.tolerance = tol.cg_tolerance;
            problem.max_iterations = tol.cg_max_iterations;
            let control = solve_hum(&problem)?;
            let duality = match &control.adjoint_initial {
                Some(y0_hat) => verify_duality_identity(y0_hat, &control, &problem)?,
                None => 0.0,
            };
            let symmetry = gramian_symmetry(&problem, 3, self.cfg.coefficients.seed.wrapping_add(ci as u64))?;
            let desc = serde_json::json!({
                "check": "hum",
                "grid": self.cfg.grid,
                "time": self.cfg.time,
                "coefficient": ci,
                "initial": self.cfg.initial,
                "geometry": self.cfg.geometry,
                "E": set,
                "tolerances": [tol.cg_tolerance, tol.cg_max_iterations as f64],
            });
            let mut rep = InequalityReport::new("null controllability (HUM)", ReportKind::Inequality, digest(&desc));
            rep.set_sides(control.y0_norm_ratio, problem.tolerance);
            rep.tolerance = 0.0;
            rep.extra("iterations", control.iterations as f64);
            rep.extra("cost", control.cost);
            rep.extra("duality_residual", duality);
            rep.extra("gramian_asymmetry", symmetry);
            let ok = control.y0_norm_ratio <= problem.tolerance && duality <= 1e-8 && symmetry <= 1e-8;
            rep.verdict = Verdict::from_bool(ok);
            if ci == 0 {
                write_control_csv(&control, &problem, &self.out.join("control.csv"))?;
            }
            summaries.push(serde_json::json!({
                "control": control,
                "duality_residual": duality,
                "gramian_asymmetry": symmetry,
            }));
            reports.push(rep);
        }
        write_json(&self.out.join("hum_report.json"), &summaries)?;
        Ok(reports)
    }
}

/// Largest `|⟨Λx, y⟩ - ⟨x, Λy⟩| / (‖Λx‖‖y‖ + ‖x‖‖Λy‖)` over random smooth pairs.
pub fn gramian_symmetry(problem: &ControlProblem, pairs: usize, seed: u64) -> Result<f64> {
    let grid = *problem.y_t.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = random_profile(&grid, 4, &mut rng);
        let y = random_profile(&grid, 4, &mut rng);
        let lx = gramian_apply(&x, problem)?;
        let ly = gramian_apply(&y, problem)?;
        let a = lx.dot(&y)?;
        let b = x.dot(&ly)?;
        let scale = lx.norm_sq().sqrt() * y.norm_sq().sqrt() + x.norm_sq().sqrt() * ly.norm_sq().sqrt();
        if scale > 0.0 {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(worst)
}

fn point(grid: &Grid, p: Option<&[f64]>, key: &str) -> Result<Vec<f64>> {
    let p = p.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; grid.dim()]);
    if p.len() != grid.dim() {
        return Err(Error::Config(format!("key `{key}` needs {} coordinates, got {}", grid.dim(), p.len())));
    }
    Ok(p)
}

fn coefficient_fields(grid: &Grid, c: &CoefficientConfig) -> Result<Vec<CoefficientField>> {
    match c.kind {
        CoefficientKind::Heat => Ok(vec![CoefficientField::heat()]),
        CoefficientKind::Constant => Ok(vec![CoefficientField::constant(c.a, c.b)]),
        CoefficientKind::Random => {
            if c.count == 0 {
                return Err(Error::Config("key `coefficients.count` must be positive".into()));
            }
            if !(c.a_max >= 0.0 && c.b_max >= 0.0) {
                return Err(Error::Config("keys `coefficients.a_max` and `coefficients.b_max` must be nonnegative".into()));
            }
            Ok((0..c.count as u64)
                .map(|i| random_coefficients(grid, c.a_max, c.b_max, c.seed.wrapping_add(i)))
                .collect())
        }
    }
}

fn initial_data(grid: &Grid, init: &InitialConfig) -> Result<Vec<Field>> {
    match init.kind {
        InitialKind::Zero => Ok(vec![Field::zeros(grid)]),
        InitialKind::Gaussian => {
            let center = point(grid, init.center.as_deref(), "initial.center")?;
            Ok(vec![bump(grid, &center, init.width)?.scale(init.amplitude)])
        }
        InitialKind::Bumps => {
            if init.count < 2 {
                return Err(Error::Config("key `initial.count` must be at least 2 for a bump family".into()));
            }
            let quarter = 0.25 * grid.extent();
            let fam = BumpFamily {
                center_lo: init.center_lo.unwrap_or(-quarter),
                center_hi: init.center_hi.unwrap_or(quarter),
                width_lo: init.width_lo,
                width_hi: init.width_hi,
            };
            Ok(fam
                .sample(grid, init.count, init.seed)?
                .into_iter()
                .map(|f| f.scale(init.amplitude))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ENERGY: &str = r#"
experiment = "energy"
[grid]
dim = 1
extent = 16.0
points = 64
[time]
horizon = 0.25
steps = 16
[coefficients]
kind = "constant"
a = 0.5
b = 0.3
[ensemble]
paths = 40
seed = 3
"#;

    #[test]
    fn unknown_keys_are_named() {
        let text = ENERGY.replace("[time]", "gamma_fudge = 1.0\n[time]");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("unknown key") && err.contains("gamma_fudge"), "{err}");
        let text = ENERGY.replace("seed = 3", "seed = 3\nthreads = 2");
        assert!(ExperimentConfig::parse(&text).unwrap_err().to_string().contains("unknown key"));
    }

    #[test]
    fn missing_config_is_reported() {
        let err = run_experiment("/nonexistent/cfg.toml", &RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("config not found"));
        assert!(resolve_config("no_such_bundled_config").is_err());
    }

    #[test]
    fn time_step_from_dt() {
        let t = TimeConfig { horizon: 0.5, steps: None, dt: Some(0.5 / 64.0), tau1: None, tau2: None };
        assert_eq!(t.steps().unwrap(), 64);
        let t = TimeConfig { dt: Some(0.3), ..t };
        assert!(t.steps().is_err());
    }

    #[test]
    fn report_ignores_workers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(ENERGY).unwrap();
        let one = run_config(&apply_overrides(cfg.clone(), &RunOptions { workers_override: Some(1), ..Default::default() }), dir.path()).unwrap();
        let four = run_config(&apply_overrides(cfg, &RunOptions { workers_override: Some(4), ..Default::default() }), dir.path()).unwrap();
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&four).unwrap());
        assert!(one.all_pass);
    }

    #[test]
    fn listing_is_static() {
        let l = list_experiments();
        assert_eq!(l.len(), 10);
        assert_eq!(l, list_experiments());
        assert_eq!(l[4].name, "dh-identity");
    }
}
