use std::path::Path;
use std::process::{Command, Output};

fn uclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uclab")).args(args).output().expect("spawn uclab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

#[test]
fn list_is_stable() {
    let a = uclab(&["list"]);
    let b = uclab(&["list"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().next().unwrap().starts_with("energy"));

    let json: serde_json::Value = serde_json::from_slice(&uclab(&["list", "--json"]).stdout).unwrap();
    let names: Vec<&str> = json.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    let listed: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, listed);
}

#[test]
fn missing_config_exits_nonzero() {
    let o = uclab(&["run", "no_such_experiment_config"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config not found"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("energy_check.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("[ensemble]", "[ensemble]\ngamma_fudge = 0.5")).unwrap();
    let o = uclab(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown key") && err.contains("gamma_fudge"), "{err}");
}

#[test]
fn energy_check_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("energy");
    let o = uclab(&["run", "energy_check", "--output-dir", out.to_str().unwrap(), "--paths-override", "200", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, report);
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["experiment"], "energy");

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["paths"], 200);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = uclab(&["run", "energy_random", "--output-dir", out.to_str().unwrap(), "--paths-override", "16", "--seed-override", seed]);
        assert!(o.status.code().unwrap() < 2);
        std::fs::read(out.join("report.json")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}
