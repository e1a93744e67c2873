//! Runs a bundled configuration through the library API, as the CLI does.

use uclab::runner::{list_experiments, run_experiment, RunOptions};

fn main() -> uclab::Result<()> {
    for e in list_experiments() {
        println!("{:<14} {}", e.name, e.verifies);
    }
    let name = std::env::args().nth(1).unwrap_or_else(|| "interpolation".into());
    let opts = RunOptions { output_dir: Some(std::env::temp_dir().join("uclab-example")), ..Default::default() };
    let out = run_experiment(&name, &opts)?;
    println!("{}: all_pass = {}, artifacts in {}", out.report.experiment, out.report.all_pass, out.output_dir.display());
    Ok(())
}
