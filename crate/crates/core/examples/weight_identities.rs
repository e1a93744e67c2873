//! Residuals of the Gaussian weight identities under refinement.

use uclab::lattice::Grid;
use uclab::weights::{weight_identity_residuals, WeightParams};

fn main() -> uclab::Result<()> {
    let params = WeightParams::new(0.5, vec![0.0], 1.0)?;
    let mut prev: Option<f64> = None;
    for level in 0..3 {
        let n = 128 << level;
        let dt = 0.02 / f64::from(1u32 << level);
        let grid = Grid::new(1, 16.0, n)?;
        let r = weight_identity_residuals(&grid, &params, 0.5, dt)?;
        let factor = prev.map(|p| format!("  (x{:.2})", p / r.heat)).unwrap_or_default();
        println!("n {n:4} dt {dt:.5}: heat {:.3e}{factor}  gradient {:.1e}  laplacian {:.1e}", r.heat, r.gradient, r.laplacian);
        prev = Some(r.heat);
    }
    Ok(())
}
