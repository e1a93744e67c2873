//! Estimates are bit-identical for any number of worker threads.

use uclab::ensemble::{expect, EnsembleSpec, SolverInputs};
use uclab::lattice::{integrate, Grid};
use uclab::scenarios::{bump, random_coefficients};
use uclab::sde_core::Stepper;

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 16.0, 128)?;
    let stepper = Stepper::new(&grid);
    let phi0 = bump(&grid, &[0.0], 1.0)?;
    let coeffs = random_coefficients(&grid, 1.0, 0.5, 2);
    let inputs = SolverInputs::new(&stepper, &phi0, &coeffs, 0.5, 64);
    for workers in [1, 2, 4] {
        let spec = EnsembleSpec::new(200, 42).with_workers(workers);
        let e = expect(&spec, &inputs, |traj| integrate(&traj.last().map(|v| v * v), None))?;
        println!("workers {workers}: mean {:e} (bits {:016x}) se {:e}", e.mean, e.mean.to_bits(), e.se_or_zero());
    }
    Ok(())
}
