//! Frequency function with multiplicative noise: the derivative identity for
//! `H`, the monotonicity margins, and a plot-ready CSV.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::frequency::{
    calibrate_disc_constant, check_dh_identity, check_monotonicity, compute_trace, dh_allowance, write_trace_csv,
    FrequencySetup,
};
use uclab::lattice::Grid;
use uclab::scenarios::{bump, random_coefficients};
use uclab::sde_core::Stepper;

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 16.0, 256)?;
    let stepper = Stepper::new(&grid);
    let setup = FrequencySetup::new(&grid, &[0.0], 1.0, 1.0, 0.5, 0.25)?;
    let phi0 = bump(&grid, &[0.3], 0.7)?;
    let coeffs = random_coefficients(&grid, 1.0, 0.5, 3);
    let inputs = SolverInputs::new(&stepper, &phi0, &coeffs, 0.25, 64);
    let trace = compute_trace(&EnsembleSpec::new(300, 8), &inputs, &setup)?;

    let dh = check_dh_identity(&trace)?;
    let allowance = dh_allowance(&inputs, &setup)?;
    println!("dH identity: max residual {:.3e} (without the Ito term {:.3e}), allowance {:.3e}", dh.max_residual, dh.raw_max_residual, allowance);

    let c_disc = calibrate_disc_constant(&inputs, &setup)?;
    let mono = check_monotonicity(&trace, c_disc * inputs.dt())?;
    println!("monotonicity: min margin {:.3}, violations {}", mono.min_margin, mono.violations);

    let path = std::env::temp_dir().join("frequency_trace.csv");
    write_trace_csv(&trace, Some(&mono), &path)?;
    println!("trace written to {}", path.display());
    Ok(())
}
