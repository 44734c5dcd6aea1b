//! End-to-end checks of the command-line interface.

use std::path::Path;
use std::process::Command;

fn viscoflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viscoflow"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn reservoir_run_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let status = viscoflow()
            .args([
                "run",
                "--case",
                "reservoir",
                "--nx",
                "6",
                "--tau-s",
                "10",
                "--gamma",
                "1e3",
                "--tol",
                "1e-8",
            ])
            .arg("--out")
            .arg(out)
            .status()
            .expect("spawn");
        assert!(status.success(), "run failed");
    }
    for name in ["solution.vtk", "residual.csv", "stats.json", "residual.svg"] {
        let a = read(&out1.join(name));
        let b = read(&out2.join(name));
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    let stats: serde_json::Value =
        serde_json::from_slice(&read(&out1.join("stats.json"))).expect("stats parse");
    assert_eq!(stats["case"], "reservoir");
    assert_eq!(stats["nx"], 6);
    assert_eq!(stats["report"]["converged"], true);
    // Parameters are echoed for reproduction.
    assert_eq!(stats["model"]["tau_s"], 10.0);
    assert_eq!(stats["model"]["gamma"], 1e3);
}

#[test]
fn stdout_reports_per_iteration_residuals() {
    let output = viscoflow()
        .args(["run", "--case", "reservoir", "--nx", "4", "--tol", "1e-6"])
        .output()
        .expect("spawn");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("iteration 0: relative residual 1"));
    assert!(stdout.contains("converged"));
}

#[test]
fn cavity_stagnation_zones_shrink_with_flow_index() {
    let fraction = |p: &str| -> f64 {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let status = viscoflow()
            .args(["run", "--case", "cavity", "--nx", "8", "--p", p, "--tau-s", "2.5", "--tol", "1e-8", "--no-vtk", "--no-svg"])
            .arg("--out")
            .arg(&out)
            .status()
            .expect("spawn");
        assert!(status.success(), "cavity run failed for p = {p}");
        let stats: serde_json::Value =
            serde_json::from_slice(&read(&out.join("stats.json"))).unwrap();
        assert_eq!(stats["report"]["converged"], true);
        1.0 - stats["report"]["active_fraction"].as_f64().unwrap()
    };
    let inactive_low = fraction("1.6");
    let inactive_high = fraction("4.0");
    assert!(
        inactive_low > inactive_high,
        "inactive fraction should shrink with p: {inactive_low} vs {inactive_high}"
    );
}

#[test]
fn custom_case_without_spec_is_a_usage_error() {
    let output = viscoflow().args(["run", "--case", "custom"]).output().expect("spawn");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("custom"), "stderr should explain the missing spec: {stderr}");
}

#[test]
fn custom_case_runs_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "case = custom\n\
         custom_x0 = 0\ncustom_y0 = 0\ncustom_x1 = 1\ncustom_y1 = 1\n\
         custom_nx = 4\ncustom_ny = 4\ncustom_fx = 10\ncustom_fy = -5\n\
         tau_s = 1\ntol = 1e-6\n",
    )
    .unwrap();
    let status = viscoflow().args(["run", "--config"]).arg(&cfg).status().expect("spawn");
    assert!(status.success());
}

#[test]
fn bad_parameters_exit_nonzero() {
    let output = viscoflow()
        .args(["run", "--case", "reservoir", "--nx", "4", "--p", "0.5"])
        .output()
        .expect("spawn");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("flow index"));
}
