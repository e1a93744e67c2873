//! Observability from a time set of measure T/4 with fitted two-point constants.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::lattice::{cube_tiling, Grid};
use uclab::observability::{observability_report, ObservabilityInputs, SearchGrid, TimeSet};
use uclab::scenarios::bump;
use uclab::sde_core::{CoefficientField, Stepper};

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 8.0, 256)?;
    let stepper = Stepper::new(&grid);
    let omega = cube_tiling(&grid, 1.0)?.ball_union(&grid, 0.5)?;
    let set = TimeSet::new(vec![(0.02, 0.035), (0.06, 0.07)], 0.1)?;
    let heat = CoefficientField::heat();
    let phi0 = bump(&grid, &[1.3], 0.3)?;
    let inputs = SolverInputs::new(&stepper, &phi0, &heat, 0.1, 64);
    let obs = ObservabilityInputs { omega: &omega, set: &set, theta: 0.6, search: SearchGrid::default() };
    let out = observability_report(&EnsembleSpec::new(1, 0), &inputs, &obs)?;
    println!("|phi(T)|^2 = {:.4e}, observed = {:.4e}", out.report.lhs, out.report.extras["observed"]);
    println!("ln K1 = {:.4}, K2 = {:.4}, ln C = {:.3}", out.young.ln_k1, out.young.k2, out.report.extras["ln_constant"]);
    for c in &out.checks {
        println!("  two-point step t1 {:.4} t2 {:.4} eps {:<4}: {:.4e} <= {:.4e} {}", c.t1, c.t2, c.eps, c.lhs, c.rhs, c.ok);
    }
    println!("verdict {:?}, sequence depth {}", out.report.verdict, out.sequence.depth());
    Ok(())
}
