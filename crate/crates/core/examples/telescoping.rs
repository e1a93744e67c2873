//! Telescoping sequences inside measurable time sets.

use uclab::observability::{alpha_from_theta, choose_kappa, density_sequence, telescoped_sum, SearchGrid, TimeSet};

fn main() -> uclab::Result<()> {
    let kappa = choose_kappa(alpha_from_theta(0.6)?)?;
    println!("theta 0.6 -> kappa {kappa:.6}");
    let sets = [
        vec![(0.0, 1.0)],
        vec![(0.2, 0.3), (0.6, 0.65)],
        vec![(0.1, 0.12), (0.4, 0.5), (0.9, 0.95)],
    ];
    for intervals in sets {
        let set = TimeSet::new(intervals.clone(), 1.0)?;
        let seq = density_sequence(&set, kappa, SearchGrid::default())?;
        println!("E = {intervals:?}: l = {:.4}, l1 = {:.6}, depth {}, admissible {}", seq.l, seq.l1, seq.depth(), seq.admissible());
    }
    let weights: Vec<f64> = (0..20).map(|m| 0.5f64.powi(m)).collect();
    let energies: Vec<f64> = (0..20).map(|m| 1.0 / (1.0 + m as f64)).collect();
    let (direct, closed) = telescoped_sum(&weights, &energies)?;
    println!("telescoped sum: direct {direct:.15}, closed {closed:.15}");
    Ok(())
}
