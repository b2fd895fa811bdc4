use geoflap::kinematics::DeltaSchedule;
use geoflap::optimization::{find_periodic_orbit, stabilize, MpcOptions, OrbitOptions, OrbitParameters};
use geoflap::simulation::Model;

#[test]
fn on_orbit_start_needs_almost_no_control() {
    let model = Model::default();
    let opts = OrbitOptions { steps_per_period: 400, restarts: 0, ..OrbitOptions::default() };
    let orbit = find_periodic_orbit(&model, &[OrbitParameters::reference_undulating()], &opts).unwrap().best;
    let mpc = MpcOptions { steps_per_period: 400, ..MpcOptions::default() };
    let report = stabilize(&model, &orbit, &orbit.initial_state(), 2, &mpc).unwrap();
    let errors = report.weighted_controlled();
    println!("errors {errors:?}, max |delta| {:.3e}", report.applied.max_abs());
    assert!(report.applied.max_abs() < 0.02);
    assert!(errors.iter().all(|e| *e < 0.05));
    assert!(report.horizons.iter().all(|h| !h.fallback && h.objective <= h.objective_zero));
}

#[test]
fn zero_schedule_leaves_motion_unchanged() {
    let p = OrbitParameters::reference_undulating();
    let base = p.motion();
    let with = p.motion().with_delta(DeltaSchedule::zeros(0.0, p.period() / 10.0, 20));
    for k in 0..30 {
        let t = k as f64 * p.period() / 13.0;
        let (a, b) = (base.eval(t), with.eval(t));
        for i in 0..3 {
            assert_eq!(a.q[i], b.q[i]);
            assert_eq!(a.omega[i], b.omega[i]);
        }
    }
}
