use std::path::Path;
use std::process::{Command, Output};

fn geoflap(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoflap")).args(args).arg("--out").arg(out).output().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_writes_trajectory_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoflap(&["simulate", "--periods", "2", "--set", "simulation.samples_per_period=50"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("trajectory.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 102);
    assert!(lines[0].starts_with("t,"));
    let times: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    let snapshot = read(dir.path().join("config.toml"));
    assert!(snapshot.contains("samples_per_period = 50"));
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(geoflap(&["simulate", "--seed", "3"], d.path()).status.success());
    }
    assert_eq!(std::fs::read(a.path().join("trajectory.csv")).unwrap(), std::fs::read(b.path().join("trajectory.csv")).unwrap());
}

#[test]
fn snapshot_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(geoflap(&["simulate", "--set", "orbit.f=12.0", "--set", "aero.n_strips=12"], a.path()).status.success());
    let snapshot = a.path().join("config.toml");
    assert!(geoflap(&["simulate", "--config", snapshot.to_str().unwrap()], b.path()).status.success());
    assert_eq!(read(a.path().join("trajectory.csv")), read(b.path().join("trajectory.csv")));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(geoflap(&["simulate", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(geoflap(&["simulate", "--set", "orbit.nope=1"], dir.path()).status.code(), Some(1));
    assert_eq!(geoflap(&["simulate", "--morphology", "/nonexistent/vehicle.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoflap(&["validate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!read(dir.path().join("validation.txt")).contains("FAIL"));
}

#[test]
fn sensitivity_table_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoflap(&["sensitivity", "--set", "sensitivity.steps_per_period=400"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path().join("sensitivity.txt"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0].split('\t').count(), 7);
}
