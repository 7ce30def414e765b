//! The `ppm` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"
name = "small-biaxial"
gravity = 0.0

[geometry]
kind = "rectangle"
width = 0.2
height = 0.4

[material]
intrinsic_density = 2000.0
porosity = 0.2
bulk_modulus = 3.8e6
shear_modulus = 2.2e6
cohesion = 20e3
residual_cohesion = 8e3
softening_modulus = -20e3
friction_angle = 35.0
dilatancy_angle = 15.0

[discretization]
spacing = 0.02
horizon_ratio = 3.0

[integrator]
dt = 1e-4
end_time = 0.2

[[boundary]]
kind = "prescribed-displacement"
side = "top"
component = "y"
schedule = [[0.0, 0.0], [0.2, -0.02]]

[[boundary]]
kind = "fixed"
side = "bottom"
components = ["x", "y"]

[output]
interval = 0.05
curve_interval = 0.01
"#;

fn ppm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppm")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn verify_passes_every_suite() {
    let out = ppm(&["verify", "--cases", "20"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn run_writes_products_and_report_reads_them() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SCENARIO);
    let run_dir = tmp.path().join("run");
    let out = ppm(&["run", &scenario, "--output", run_dir.to_str().unwrap(), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["manifest.json", "loading_curve.csv", "run_log.csv", "scenario.toml", "snapshots/snapshot_000004.vtk"] {
        assert!(run_dir.join(name).is_file(), "{name} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["snapshots"].as_array().unwrap().len(), 5);
    let report = ppm(&["report", run_dir.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("peak"));
}

#[test]
fn invalid_scenario_reports_field_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), &SCENARIO.replace("porosity = 0.2", "porosity = 1.5"));
    let out = ppm(&["run", &scenario, "--output", tmp.path().join("run").to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");
    let issue = &err["issues"][0];
    assert!(issue["field"].as_str().unwrap().contains("porosity"));
    assert!(issue["line"].as_u64().is_some());
}

#[test]
fn zero_threads_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SCENARIO);
    let out = ppm(&["run", &scenario, "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resumed_run_reproduces_the_final_state() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SCENARIO);
    let full = tmp.path().join("full");
    let out = ppm(&["run", &scenario, "--output", full.to_str().unwrap(), "--checkpoint-every", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = full.join("checkpoints/checkpoint_00001000.bin");
    assert!(ckpt.is_file());
    let resumed = tmp.path().join("resumed");
    let out = ppm(&[
        "run",
        &scenario,
        "--output",
        resumed.to_str().unwrap(),
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last = |dir: &Path| {
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        let file = m["snapshots"].as_array().unwrap().last().unwrap()["file"].as_str().unwrap().to_string();
        std::fs::read(dir.join(file)).unwrap()
    };
    assert_eq!(last(&full), last(&resumed));
}
