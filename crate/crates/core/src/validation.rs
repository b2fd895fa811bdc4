//! Self-checks of the dynamics against independent numerical oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{aero_wrench, assemble_jg, assemble_kg, gravity_wrench, potential_energy, torque_wrench};
use crate::error::Result;
use crate::kinematics::PrescribedMotion;
use crate::lie::{exp_so3, AlgebraElement, GroupElement, Vec3};
use crate::optimization::OrbitParameters;
use crate::simulation::{full_accel, full_step, online_torques, reduced_solve, simulate, total_energy, FullState, Model, ReducedState, StepPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst observed error in the check's own units.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, value: f64, tolerance: f64) -> Self {
        CheckResult { name, value, tolerance, passed: value.is_finite() && value < tolerance }
    }
}

fn rand_vec(rng: &mut impl Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

fn rand_config(rng: &mut impl Rng) -> GroupElement {
    GroupElement {
        x: rand_vec(rng, 1.0),
        r: exp_so3(&rand_vec(rng, 2.0)),
        q: [exp_so3(&rand_vec(rng, 2.0)), exp_so3(&rand_vec(rng, 2.0)), exp_so3(&rand_vec(rng, 2.0))],
    }
}

fn rand_algebra(rng: &mut impl Rng, s: f64) -> AlgebraElement {
    AlgebraElement { v: rand_vec(rng, s), w: rand_vec(rng, s), w_app: [rand_vec(rng, s), rand_vec(rng, s), rand_vec(rng, s)] }
}

fn scaled(chi: &AlgebraElement, s: f64) -> AlgebraElement {
    AlgebraElement::from_vector(&(chi.to_vector() * s))
}

/// `K_g chi` against central differences of `J_g` along `chi`.
pub fn kg_check(model: &Model, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g = rand_config(&mut rng);
        let xi = rand_algebra(&mut rng, 5.0);
        let chi = rand_algebra(&mut rng, 1.0);
        let jp = assemble_jg(&model.morph, &g.retract(&scaled(&chi, eps)));
        let jm = assemble_jg(&model.morph, &g.retract(&scaled(&chi, -eps)));
        let numeric = (jp - jm) * xi.to_vector() / (2.0 * eps);
        let analytic = assemble_kg(&model.morph, &g, &xi) * chi.to_vector();
        worst = worst.max((analytic - numeric).norm() / numeric.norm());
    }
    CheckResult::new("K_g finite difference (rel)", worst, 1e-5)
}

/// Gravity wrench against central differences of the potential.
pub fn gravity_check(model: &Model, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g = rand_config(&mut rng);
        let chi = rand_algebra(&mut rng, 1.0);
        let du = (potential_energy(&model.morph, &g.retract(&scaled(&chi, eps)), model.gravity)
            - potential_energy(&model.morph, &g.retract(&scaled(&chi, -eps)), model.gravity))
            / (2.0 * eps);
        let f = gravity_wrench(&model.morph, &g, model.gravity).dot(&chi);
        worst = worst.max((du + f).abs() / du.abs().max(f.abs()));
    }
    CheckResult::new("gravity = -dU (rel)", worst, 1e-6)
}

/// Relative drift of `K + U` of the unforced full system without
/// aerodynamics over one period at `h = T/2000`.
pub fn energy_check(model: &Model, motion: &PrescribedMotion, ic: &ReducedState) -> Result<CheckResult> {
    let model = model.without_aero();
    let period = motion.period();
    let h = period / 2000.0;
    let mut s = FullState::from_reduced(motion, 0.0, ic);
    let e0 = total_energy(&model, &s.g, &s.xi);
    for n in 0..2000 {
        s = full_step(&model, &s, n as f64 * h, h, |_, _| Ok([Vec3::zeros(); 3]))?;
    }
    let e1 = total_energy(&model, &s.g, &s.xi);
    Ok(CheckResult::new("energy drift, no aero/torque (rel)", (e1 - e0).abs() / e0.abs(), 1e-7))
}

/// Reduced trajectory against the full system driven by the reconstructed
/// torques over one period. With aerodynamics on, the free wing coordinates
/// of the full system are stiff; `steps` below about 2000 per period can
/// make the explicit full-system integration diverge.
pub fn elimination_check(model: &Model, motion: &PrescribedMotion, ic: &ReducedState, steps: usize) -> Result<CheckResult> {
    let plan = StepPlan::per_period(motion.period(), 1, steps, steps)?;
    let reduced = simulate(model, motion, ic, 0.0, &plan)?;
    let mut full = FullState::from_reduced(motion, 0.0, ic);
    let mut worst: f64 = 0.0;
    for n in 0..steps {
        let t = n as f64 * plan.h;
        full = full_step(model, &full, t, plan.h, |tt, st| online_torques(model, motion, tt, st))?;
        let r = &reduced.samples[n + 1];
        let d = FullState { g: r.g, xi: r.xi }.reduced().distance(&full.reduced());
        worst = worst.max(d);
    }
    Ok(CheckResult::new("reduced vs full state", worst, 1e-6))
}

/// Reconstructed torques reproduce the prescribed appendage accelerations.
pub fn torque_check(model: &Model, motion: &PrescribedMotion, ic: &ReducedState) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let t = k as f64 * motion.period() / 50.0;
        let sol = reduced_solve(model, motion, t, ic)?;
        let acc = full_accel(model, &sol.g, &sol.xi, &sol.torques());
        worst = worst.max((acc.fixed_rows::<9>(6) - sol.xi2_dot).norm());
    }
    Ok(CheckResult::new("torque round trip", worst, 1e-8))
}

/// `|Delta(K + U) - int (f_a + f_tau) . xi dt|` over one period with
/// Simpson quadrature on the step grid.
pub fn work_energy_check(model: &Model, motion: &PrescribedMotion, ic: &ReducedState, steps: usize) -> Result<CheckResult> {
    let steps = steps + steps % 2;
    let plan = StepPlan::per_period(motion.period(), 1, steps, steps)?;
    let tr = simulate(model, motion, ic, 0.0, &plan)?;
    let power: Vec<f64> = tr
        .samples
        .iter()
        .map(|s| aero_wrench(&model.morph, &s.g, &s.aero_force, &s.aero_moment).dot(&s.xi) + torque_wrench(&s.g, &s.tau).dot(&s.xi))
        .collect();
    let work: f64 = power.windows(3).step_by(2).map(|w| (w[0] + 4.0 * w[1] + w[2]) * plan.h / 3.0).sum();
    let (first, last) = (&tr.samples[0], &tr.samples[steps]);
    let de = total_energy(model, &last.g, &last.xi) - total_energy(model, &first.g, &first.xi);
    Ok(CheckResult::new("work-energy residual (J)", (de - work).abs(), 1e-6))
}

/// All checks on the given model about the reference hover motion.
pub fn run_all(model: &Model, seed: u64) -> Result<Vec<CheckResult>> {
    let orbit = OrbitParameters::reference_undulating();
    let motion = orbit.motion();
    let ic = orbit.initial_state();
    Ok(vec![
        kg_check(model, seed),
        gravity_check(model, seed.wrapping_add(1)),
        energy_check(model, &motion, &ic)?,
        elimination_check(model, &motion, &ic, 4800)?,
        torque_check(model, &motion, &ic)?,
        work_energy_check(model, &motion, &ic, 1200)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_defaults() {
        let results = run_all(&Model::default(), 0).unwrap();
        for r in &results {
            assert!(r.passed, "{}: {:.3e} (tolerance {:.1e})", r.name, r.value, r.tolerance);
        }
    }
}
