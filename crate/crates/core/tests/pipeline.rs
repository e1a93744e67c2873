use std::path::Path;

use uclab::runner::{load_config, run_config, run_experiment, RunOptions};

fn csv_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[test]
fn frequency_trace_is_written_with_margins() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { output_dir: Some(dir.path().to_path_buf()), paths_override: Some(8), ..Default::default() };
    let outcome = run_experiment("monotonicity", &opts).unwrap();
    assert!(outcome.report.all_pass);
    let (header, rows) = csv_rows(&dir.path().join("frequency_trace.csv"));
    assert_eq!(header, "t,H,H_se,D,D_se,N,margin");
    assert!(rows.len() > 10);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[3] >= 0.0));
}

#[test]
fn observability_writes_a_valid_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _, _) = load_config("observability").unwrap();
    let report = run_config(&cfg, dir.path()).unwrap();
    assert!(report.all_pass);
    let (header, rows) = csv_rows(&dir.path().join("telescoping.csv"));
    assert_eq!(header, "m,l_m,gap,E_measure_in_gap,ok");
    assert!(rows.len() > 2);
    // the final node closes the sequence and carries no gap
    for r in rows.iter().filter(|r| r[2].is_finite()) {
        assert!(r[2] <= 3.0 * r[3] * (1.0 + 1e-12));
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("observability_report.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), report.reports.len() - 1);
}

#[test]
fn hum_control_lives_on_omega() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _, _) = load_config("hum").unwrap();
    let report = run_config(&cfg, dir.path()).unwrap();
    assert!(report.all_pass);
    let (header, rows) = csv_rows(&dir.path().join("control.csv"));
    assert_eq!(header, "t,w,node,x,u");
    // control vanishes outside the observation window [0, 0.25]
    assert!(rows.iter().filter(|r| r[0] > 0.25 + 1e-9).all(|r| r[4] == 0.0));
    assert!(rows.iter().any(|r| r[4] != 0.0));
}

#[test]
fn stochastic_hum_is_refused() {
    let (mut cfg, _, _) = load_config("hum").unwrap();
    cfg.coefficients.b = 0.2;
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config(&cfg, dir.path()).is_err());
}

#[test]
fn every_bundled_config_parses() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let (cfg, _, _) = load_config(path.to_str().unwrap()).unwrap();
        cfg.time.steps().unwrap();
    }
}
