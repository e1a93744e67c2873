//! Measured constants of the local energy and gradient bounds for a few
//! random coefficient fields.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::lattice::Grid;
use uclab::scenarios::{bump, random_coefficients};
use uclab::sde_core::Stepper;
use uclab::verifiers::{check_caccioppoli, check_gradient_estimate};

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 16.0, 256)?;
    let stepper = Stepper::new(&grid);
    let phi0 = bump(&grid, &[0.3], 0.7)?;
    let spec = EnsembleSpec::new(100, 4);
    let t = 0.5;
    for seed in 0..3 {
        let coeffs = random_coefficients(&grid, 1.0, 0.5, seed);
        let inputs = SolverInputs::new(&stepper, &phi0, &coeffs, t, 128);
        let cacc = check_caccioppoli(&spec, &inputs, &[0.0], 0.5, 1.0, t / 4.0, t / 2.0)?;
        let grad = check_gradient_estimate(&spec, &inputs, &[0.0], 1.0, t / 4.0)?;
        println!("seed {seed}: C1 = {:.4}  C2 = {:.4}", cacc.extras["C1"], grad.extras["C2"]);
    }
    Ok(())
}
