//! Minimal-norm control driving the backward equation to zero at t = 0.

use uclab::hum_control::{solve_hum, verify_duality_identity, ControlProblem};
use uclab::lattice::{cube_tiling, Grid};
use uclab::observability::TimeSet;
use uclab::scenarios::bump;
use uclab::sde_core::Coefficient;

fn main() -> uclab::Result<()> {
    let grid = Grid::new(1, 8.0, 64)?;
    let y_t = bump(&grid, &[0.7], 0.8)?;
    let omega = cube_tiling(&grid, 1.0)?.ball_union(&grid, 0.5)?;
    let set = TimeSet::new(vec![(0.0, 0.25)], 0.5)?;
    let problem = ControlProblem::new(y_t, omega, set, Coefficient::Constant(0.5), 50)?;
    let control = solve_hum(&problem)?;
    println!("iterations {}, |y(0)|/|y_T| = {:.3e}, cost {:.4}", control.iterations, control.y0_norm_ratio, control.cost);
    if let Some(y0_hat) = &control.adjoint_initial {
        println!("duality residual {:.2e}", verify_duality_identity(y0_hat, &control, &problem)?);
    }
    Ok(())
}
