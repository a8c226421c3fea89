use std::path::Path;
use std::process::{Command, Output};

use abac::experiment::ExperimentConfig;

fn abac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn show_config_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horizon = 500\nrepeats = 3\nseed = 9\n");
    let out = abac(&["show-config", "--config", &cfg, "--repeats", "7"]);
    assert_eq!(code(&out), 0);
    let shown = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((shown.horizon, shown.repeats, shown.seed), (500, 7, 9));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "horizn = 5\n");
    assert_eq!(code(&abac(&["show-config", "--config", &unknown])), 1);
    assert_eq!(code(&abac(&["run", "--repeats", "0"])), 1);
    assert_eq!(code(&abac(&["run", "--kind", "grid-world"])), 1);
    assert_eq!(code(&abac(&["show-config", "--config", "/nonexistent/abac.toml"])), 1);
}

#[test]
fn injected_faults_exit_with_two() {
    let clean = abac(&["validate", "--instances", "1"]);
    assert_eq!(code(&clean), 0, "{}", String::from_utf8_lossy(&clean.stdout));
    let flipped = abac(&["validate", "--instances", "1", "--inject-fault", "flip-abbe-basis-direction"]);
    assert_eq!(code(&flipped), 2);
    assert!(String::from_utf8_lossy(&flipped.stderr).contains("abbe s vs fd mstde"));
    assert_eq!(code(&abac(&["validate", "--instances", "1", "--wrong-phase"])), 2);
}

#[test]
fn schedule_check_reports_broken_schedules() {
    assert_eq!(code(&abac(&["schedule-check"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[schedule.critic]\ncoefficient = 1.0\noffset = 1.0\nexponent = 0.4\n",
    );
    let out = abac(&["schedule-check", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out");
    let out = abac(&[
        "run",
        "--horizon",
        "2000",
        "--repeats",
        "2",
        "--features",
        "2,3",
        "--eval-interval",
        "1000",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for series in ["abtd-k2", "static-ac-k2", "abtd-k3", "static-ac-k3"] {
        assert!(output.join(series).join("aggregate.csv").exists(), "{series}");
    }
    assert!(output.join("manifest.json").exists());
}

#[test]
fn divergent_repeats_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out");
    // A huge critic step makes every repeat overflow; the schedule still
    // satisfies the exponent conditions.
    let cfg = write_config(
        dir.path(),
        "horizon = 5000\nrepeats = 2\nmax_failure_fraction = 0.0\nalgorithms = [\"abtd\"]\n\
         [schedule.critic]\ncoefficient = 1e200\noffset = 1.0\nexponent = 0.6\n",
    );
    let out = abac(&["run", "--config", &cfg, "--output", output.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(output.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["quorum_ok"], false);
    assert_eq!(manifest["series"][0]["failed"], 2);
}
