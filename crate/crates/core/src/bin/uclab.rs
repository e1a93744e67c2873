use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uclab::runner::{list_experiments, run_experiment, RunOptions};

/// Verification experiments for the stochastic heat equation.
#[derive(Parser)]
#[command(name = "uclab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file or a bundled config name.
    Run {
        config: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        paths_override: Option<usize>,
        /// Print report.json to stdout instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// List the experiment kinds and what they verify.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List { json } => {
            let list = list_experiments();
            if json {
                println!("{}", serde_json::to_string_pretty(&list).expect("static table serializes"));
            } else {
                for e in list {
                    println!("{:<14} {}", e.name, e.verifies);
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            output_dir,
            seed_override,
            paths_override,
            json,
        } => {
            let opts = RunOptions {
                output_dir,
                seed_override,
                paths_override,
                workers_override: None,
            };
            let outcome = match run_experiment(&config, &opts) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let report = &outcome.report;
            if json {
                println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            } else {
                for r in &report.reports {
                    let verdict = if r.passed() { "pass" } else { "FAIL" };
                    let ratio = r.ratio.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
                    println!("{verdict}  {:<40} ratio {ratio}", r.lemma);
                }
                println!(
                    "{}: {} reports, all_pass = {}, artifacts in {}",
                    report.experiment,
                    report.reports.len(),
                    report.all_pass,
                    outcome.output_dir.display()
                );
            }
            if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
