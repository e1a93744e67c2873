//! Global interpolation exponent on a four-cube tiling.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::lattice::{cube_tiling, Grid};
use uclab::scenarios::BumpFamily;
use uclab::sde_core::{CoefficientField, Stepper};
use uclab::verifiers::check_global_interpolation;

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 8.0, 256)?;
    let stepper = Stepper::new(&grid);
    let tiling = cube_tiling(&grid, 1.0)?;
    let heat = CoefficientField::heat();
    let family = BumpFamily { center_lo: -4.0, center_hi: 4.0, width_lo: 0.08, width_hi: 0.5 };
    let data = family.sample(&grid, 10, 1)?;
    let base = SolverInputs::new(&stepper, &data[0], &heat, 0.1, 64);
    let (rep, masses) = check_global_interpolation(&EnsembleSpec::new(1, 0), &base, &tiling, 0.5, &data)?;
    for m in &masses {
        println!("|phi0|^2 {:.3e}  |phi(T)|^2 {:.3e}  on omega {:.3e}", m.initial, m.total_t, m.observed_t);
    }
    println!("theta {:.4}, prefactor {:.4}, {:?}", rep.exponent.unwrap_or(f64::NAN), rep.prefactor.unwrap_or(f64::NAN), rep.verdict);
    Ok(())
}
