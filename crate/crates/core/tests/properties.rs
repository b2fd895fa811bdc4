use geoflap::dynamics::assemble_jg;
use geoflap::kinematics::{DeltaSchedule, N_DELTA};
use geoflap::lie::{exp_so3, log_so3, GroupElement, Vec3};
use geoflap::morphology::Morphology;
use geoflap::optimization::{mpc_objective, MpcWeights};
use geoflap::simulation::ReducedState;
use proptest::prelude::*;

fn vec3(s: f64) -> impl Strategy<Value = Vec3> {
    (-s..s, -s..s, -s..s).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn state() -> impl Strategy<Value = ReducedState> {
    (vec3(1.0), vec3(3.0), vec3(2.0), vec3(10.0)).prop_map(|(x, u, v, w)| ReducedState { x, r: exp_so3(&u), v, w })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_inverts_exp_below_pi(u in vec3(1.8)) {
        prop_assert!((log_so3(&exp_so3(&u)) - u).norm() < 1e-10);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(x in vec3(1.0), a in vec3(3.0), b in vec3(3.0), c in vec3(3.0), d in vec3(3.0)) {
        let g = GroupElement { x, r: exp_so3(&a), q: [exp_so3(&b), exp_so3(&c), exp_so3(&d)] };
        let j = assemble_jg(&Morphology::default(), &g);
        prop_assert!((j - j.transpose()).amax() < 1e-12 * j.amax());
        let eig = j.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0);
    }

    #[test]
    fn objective_is_nonnegative_and_vanishes_on_reference(states in proptest::collection::vec((state(), state()), 1..8)) {
        let w = MpcWeights::default();
        let traj: Vec<(f64, ReducedState)> = states.iter().enumerate().map(|(i, s)| (i as f64 * 0.01, s.0)).collect();
        let reference: Vec<(f64, ReducedState)> = states.iter().enumerate().map(|(i, s)| (i as f64 * 0.01, s.1)).collect();
        prop_assert!(mpc_objective(&traj, &reference, &w).unwrap() >= 0.0);
        prop_assert_eq!(mpc_objective(&reference, &reference, &w).unwrap(), 0.0);
    }

    #[test]
    fn schedule_interpolates_knots(knots in proptest::collection::vec(proptest::array::uniform6(-0.3f64..0.3), 2..12), frac in 0.0f64..1.0) {
        let spacing = 0.0085;
        let s = DeltaSchedule { start: 0.1, spacing, knots: knots.clone() };
        for (k, knot) in knots.iter().enumerate() {
            let (v, _) = s.eval(0.1 + k as f64 * spacing);
            for j in 0..N_DELTA {
                prop_assert!((v[j] - knot[j]).abs() < 1e-12);
            }
        }
        let k = ((knots.len() - 1) as f64 * frac).floor() as usize % (knots.len() - 1);
        let (v, rate) = s.eval(0.1 + (k as f64 + 0.5) * spacing);
        for j in 0..N_DELTA {
            prop_assert!((v[j] - 0.5 * (knots[k][j] + knots[k + 1][j])).abs() < 1e-12);
            prop_assert!((rate[j] - (knots[k + 1][j] - knots[k][j]) / spacing).abs() < 1e-9);
        }
        prop_assert_eq!(s.eval(0.0).0, [0.0; N_DELTA]);
        prop_assert_eq!(s.eval(0.2 + knots.len() as f64 * spacing).0, [0.0; N_DELTA]);
        prop_assert!(s.max_abs() <= 0.3);
    }

    #[test]
    fn state_array_round_trip(s in state()) {
        let back = ReducedState::from_array(&s.to_array());
        prop_assert!(back.distance(&s) < 1e-12);
    }
}
