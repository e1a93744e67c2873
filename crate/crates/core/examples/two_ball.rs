//! Two-ball one-cylinder exponent fitted over random bump data.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::lattice::Grid;
use uclab::scenarios::BumpFamily;
use uclab::sde_core::{CoefficientField, Stepper};
use uclab::verifiers::{calibrate_c1, check_two_ball_one_cylinder, fit_two_ball};

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 32.0, 512)?;
    let stepper = Stepper::new(&grid);
    let heat = CoefficientField::heat();
    let c1 = calibrate_c1()?;
    let family = BumpFamily { center_lo: -3.0, center_hi: 3.0, width_lo: 0.1, width_hi: 0.4 };
    let spec = EnsembleSpec::new(1, 0);
    let reports = family
        .sample(&grid, 20, 0)?
        .iter()
        .map(|phi0| {
            let inputs = SolverInputs::new(&stepper, phi0, &heat, 0.3, 64);
            check_two_ball_one_cylinder(&spec, &inputs, &[0.0], 0.5, 1.0, 1.0, c1)
        })
        .collect::<uclab::Result<Vec<_>>>()?;
    for r in reports.iter().take(5) {
        println!("A {:.3e}  B {:.3e}  C {:.3e}  gamma* {:.3}", r.extras["A"], r.extras["B"], r.extras["C"], r.exponent.unwrap_or(f64::NAN));
    }
    let fit = fit_two_ball(&reports)?;
    println!("fitted gamma {:.4}, prefactor {:.4}, {:?}", fit.exponent.unwrap_or(f64::NAN), fit.prefactor.unwrap_or(f64::NAN), fit.verdict);
    Ok(())
}
