use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn beamsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BEAMSIM_JOBS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SPEC: &str = r#"
name = "smoke"
seed = 3
output_dir = "out"

[[ue_arrays]]
n_az = 4
n_el = 4

[[traces]]
name = "recorded"
files = [{ path = "trace.csv" }]
"#;

#[test]
fn validate_reports_clean_and_broken_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = beamsim(&["synth", "--pattern", "gaming", "--duration", "1", "-o", "ok.csv"], d);
    assert!(o.status.success());

    let o = beamsim(&["validate", "ok.csv"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("OK, ~250 Hz, 250 rows"), "{}", stdout(&o));

    fs::write(d.join("bad.csv"), "0,2.5,2.5,1.6,0,0,0\n0.004,2.5,2.5,1.6,0,95,0\n0.008,2.5,2.5,1.6,0,0,0\n").unwrap();
    let o = beamsim(&["validate", "bad.csv"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("INVALID"), "{}", stdout(&o));

    fs::write(d.join("empty.csv"), "").unwrap();
    assert_eq!(beamsim(&["validate", "empty.csv"], d).status.code(), Some(2));
    assert_eq!(beamsim(&["validate", "missing.csv"], d).status.code(), Some(2));
}

#[test]
fn run_writes_records_and_manifest_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = beamsim(&["synth", "--pattern", "yaw-sweep", "--omega", "90", "--duration", "0.5", "-o", "trace.csv"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(d.join("spec.toml"), SPEC).unwrap();

    let o = beamsim(&["run", "spec.toml", "--jobs", "1"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = d.join("out");
    for f in ["manifest.json", "aggregates.csv", "spec.toml", "runs/run_00000.json", "runs/run_00000.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let records = fs::read_to_string(out.join("runs/run_00000.csv")).unwrap();
    // Header plus one row per tick over a 0.496 s trace.
    assert_eq!(records.lines().count(), 1 + 497);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);

    let o = beamsim(&["run", "spec.toml", "--jobs", "2", "-o", "again"], d);
    assert_eq!(o.status.code(), Some(0));
    for f in ["aggregates.csv", "runs/run_00000.json", "runs/run_00000.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(d.join("again").join(f)).unwrap(), "{f} differs");
    }

    let o = beamsim(&["report", "out"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("smoke"));
}

#[test]
fn config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = beamsim(&["config", "--defaults"], d);
    assert!(o.status.success());
    assert!(stdout(&o).contains("max_eirp_dbm = 40.0"));

    fs::write(d.join("trace.csv"), "0,2.5,2.5,1.6,0,0,0\n0.01,2.5,2.5,1.6,1,0,0\n").unwrap();
    fs::write(d.join("spec.toml"), SPEC).unwrap();
    let o = beamsim(&["run", "spec.toml", "--seed", "9", "--print-effective-config"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("seed = 9"));
    assert!(!d.join("out").exists());

    let o = beamsim(&["run", "--replication", "--print-effective-config"], d);
    assert!(o.status.success());
    assert!(stdout(&o).contains("name = \"yaw_sweep\""));
}

#[test]
fn bad_spec_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.toml"), "name = \"x\"\nbogus = 1\n").unwrap();
    let o = beamsim(&["run", "spec.toml"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
