//! Geometric constants and the waiting time `h₀`, then the small-time lower
//! bound on a simulated ensemble.

use uclab::ensemble::{EnsembleSpec, SolverInputs};
use uclab::lattice::Grid;
use uclab::scenarios::bump;
use uclab::sde_core::{CoefficientField, Stepper};
use uclab::verifiers::{calibrate_c1, check_h0_lower_bound, compute_h0, H0Constants, H0Geometry, H0Inputs};

fn main() -> uclab::Result<()> {
    let c1 = calibrate_c1()?;
    println!("calibrated C1 = {c1}");
    for delta in [0.25, 0.5, 1.0] {
        let c = H0Constants::new(delta, 1.0, c1)?;
        let h = compute_h0(
            &c,
            &H0Inputs { tau1: 0.25, tau2: 0.5, horizon: 1.0, a_norm: 0.0, b_norm: 0.0, ratio: 1.0 },
        )?;
        println!(
            "delta {delta:<4}: b1 {:.4} b2 {:.4} b3 {:.4} C3 {:.7} C5 {:.7} h0 {:.3e} property {}",
            c.b1, c.b2, c.b3, c.c3, c.c5, h.h0, h.property_holds
        );
    }
    let grid = Grid::new(1, 16.0, 256)?;
    let stepper = Stepper::new(&grid);
    let phi0 = bump(&grid, &[0.2], 1.0)?;
    let coeffs = CoefficientField::constant(0.2, 0.2);
    let inputs = SolverInputs::new(&stepper, &phi0, &coeffs, 0.5, 128);
    let geo = H0Geometry { x0: vec![0.0], r: 0.5, big_r: 1.0, delta: 1.0, tau1: 0.125, tau2: 0.25 };
    let rep = check_h0_lower_bound(&EnsembleSpec::new(100, 2), &inputs, &geo, c1)?;
    println!("lower bound: h0 = {:.3e}, ln lhs = {:.3}, ln rhs = {:.3}, {:?}", rep.extras["h0"], rep.extras["log_lhs"], rep.extras["log_rhs"], rep.verdict);
    Ok(())
}
