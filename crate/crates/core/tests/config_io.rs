use geoflap::config::{RunConfig, SNAPSHOT_FILE};
use geoflap::morphology::Morphology;
use geoflap::optimization::OrbitParameters;
use geoflap::simulation::{csv_columns, save_csv, simulate, Model, StepPlan};

#[test]
fn snapshot_reloads_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.apply_override("orbit.f=12.5").unwrap();
    c.apply_override("mpc.weights.position=50.0").unwrap();
    let path = c.write_snapshot(dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap(), SNAPSHOT_FILE);
    assert_eq!(RunConfig::load(&path).unwrap(), c);
}

#[test]
fn morphology_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vehicle.toml");
    let m = Morphology::default();
    m.save(&path).unwrap();
    assert_eq!(Morphology::load(&path).unwrap(), m);
    std::fs::write(&path, "not = [valid").unwrap();
    assert!(Morphology::load(&path).is_err());
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let p = OrbitParameters::reference_undulating();
    let motion = p.motion();
    let plan = StepPlan::per_period(motion.period(), 1, 200, 50).unwrap();
    let traj = simulate(&Model::default(), &motion, &p.initial_state(), 0.0, &plan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    save_csv(&path, &traj.samples).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 52);
    let width = csv_columns().len();
    assert_eq!(lines[0].split(',').count(), width);
    let mut last = f64::NEG_INFINITY;
    for l in &lines[1..] {
        let cells: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), width);
        assert!(cells[0] > last);
        last = cells[0];
    }
}

#[test]
fn simulation_is_deterministic() {
    let p = OrbitParameters::reference_undulating();
    let motion = p.motion();
    let plan = StepPlan::per_period(motion.period(), 2, 400, 20).unwrap();
    let a = simulate(&Model::default(), &motion, &p.initial_state(), 0.0, &plan).unwrap();
    let b = simulate(&Model::default(), &motion, &p.initial_state(), 0.0, &plan).unwrap();
    assert_eq!(a.samples, b.samples);
}
