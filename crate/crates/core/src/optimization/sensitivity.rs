//! Change of the cycle-averaged aerodynamic force and moment under constant
//! changes of the six control parameters, evaluated along a fixed body
//! trajectory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{thread_pool, OrbitParameters};
use crate::error::{Error, Result};
use crate::kinematics::{offsets_from, AppendageKinematics, Side, N_DELTA};
use crate::lie::{AlgebraElement, GroupElement, Vec3};
use crate::simulation::{propagate, Model, ReducedState};

pub const COLUMN_LABELS: [&str; N_DELTA] = ["Δφ_ms", "Δθ_0s", "Δφ_mk", "Δφ_0s", "Δθ_0k", "Δψ_0k"];
pub const ROW_LABELS: [&str; 6] = ["Δf̄_a1 × 10^4", "Δf̄_a2 × 10^4", "Δf̄_a3 × 10^4", "ΔM̄_a1 × 10^5", "ΔM̄_a2 × 10^5", "ΔM̄_a3 × 10^5"];
const ROW_SCALES: [f64; 6] = [1e4, 1e4, 1e4, 1e5, 1e5, 1e5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub delta: f64,
    /// `values[row][column]` in N and N m, unscaled.
    pub values: [[f64; N_DELTA]; 6],
}

impl SensitivityTable {
    pub fn scaled(&self, row: usize, col: usize) -> f64 {
        self.values[row][col] * ROW_SCALES[row]
    }

    /// Tab-separated table with the labelled rows and columns.
    pub fn to_text(&self) -> String {
        let mut out = format!("# change of cycle-averaged aerodynamic force (inertial) and moment about the body origin (body), delta = {} rad\n", self.delta);
        out.push_str("row");
        for c in COLUMN_LABELS {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (r, label) in ROW_LABELS.iter().enumerate() {
            out.push_str(label);
            for c in 0..N_DELTA {
                // keep symmetry zeros from printing as -0.0000
                let v = self.scaled(r, c);
                out.push_str(&format!("\t{:.4}", if v.abs() < 5e-5 { 0.0 } else { v }));
            }
            out.push('\n');
        }
        out
    }
}

/// Cycle-averaged aerodynamic force (inertial frame) and its moment about the
/// body origin (body frame) for the wing kinematics perturbed by the
/// constant parameter change `delta`.
fn averaged_wrench(model: &Model, p: &OrbitParameters, states: &[(f64, ReducedState)], delta: &[f64; N_DELTA]) -> [f64; 6] {
    let motion = p.motion();
    let [off_r, off_l] = offsets_from(delta, &[0.0; N_DELTA]);
    let mut force = Vec3::zeros();
    let mut moment = Vec3::zeros();
    for (t, s) in states {
        let r = motion.right.attitude_with_offset(Side::Right, *t, &off_r);
        let l = motion.left.attitude_with_offset(Side::Left, *t, &off_l);
        let a = motion.abdomen.attitude(motion.frequency(), *t);
        let k = AppendageKinematics { q: [r.q, l.q, a.q], omega: [r.omega, l.omega, a.omega], omega_dot: [r.omega_dot, l.omega_dot, a.omega_dot] };
        let g = GroupElement { x: s.x, r: s.r, q: k.q };
        let xi = AlgebraElement { v: s.v, w: s.w, w_app: k.omega };
        let (_, forces, _) = model.external_force(&g, &xi);
        for i in 0..3 {
            let f_body = g.q[i] * forces[i];
            force += g.r * f_body;
            moment += model.morph.appendages[i].joint_offset.cross(&f_body);
        }
    }
    let n = states.len() as f64;
    let (f, m) = (force / n, moment / n);
    [f.x, f.y, f.z, m.x, m.y, m.z]
}

/// Central-difference table `(W(+delta e_j) - W(-delta e_j)) / 2` along the
/// body trajectory of the reference orbit.
pub fn sensitivity_table(model: &Model, orbit: &OrbitParameters, delta: f64, steps_per_period: usize) -> Result<SensitivityTable> {
    if !(delta > 0.0) || steps_per_period == 0 {
        return Err(Error::InvalidArgument("perturbation size and step count must be positive".into()));
    }
    let motion = orbit.motion();
    let h = orbit.period() / steps_per_period as f64;
    let mut states = Vec::with_capacity(steps_per_period);
    let mut s = orbit.initial_state();
    for n in 0..steps_per_period {
        let t = n as f64 * h;
        states.push((t, s));
        s = propagate(model, &motion, &s, t, h, 1)?;
    }
    let jobs: Vec<(usize, f64)> = (0..N_DELTA).flat_map(|j| [(j, delta), (j, -delta)]).collect();
    let wrenches: Vec<[f64; 6]> = thread_pool().install(|| {
        jobs.par_iter()
            .map(|&(j, d)| {
                let mut v = [0.0; N_DELTA];
                v[j] = d;
                averaged_wrench(model, orbit, &states, &v)
            })
            .collect()
    });
    let mut values = [[0.0; N_DELTA]; 6];
    for j in 0..N_DELTA {
        let (plus, minus) = (wrenches[2 * j], wrenches[2 * j + 1]);
        for r in 0..6 {
            values[r][j] = 0.5 * (plus[r] - minus[r]);
        }
    }
    Ok(SensitivityTable { delta, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_zeros_on_reference_orbit() {
        let model = Model::default();
        let t = sensitivity_table(&model, &OrbitParameters::reference_undulating(), 0.05, 300).unwrap();
        for (r, c) in [(0, 2), (0, 4), (0, 5), (2, 2), (2, 4), (2, 5), (4, 2), (4, 4), (4, 5)] {
            assert!(t.values[r][c].abs() < 1e-10, "row {r} col {c}: {}", t.values[r][c]);
        }
        for (r, c) in [(1, 0), (1, 1), (1, 3), (3, 0), (3, 1), (3, 3), (5, 0), (5, 1), (5, 3)] {
            assert!(t.values[r][c].abs() < 1e-10, "row {r} col {c}: {}", t.values[r][c]);
        }
        let text = t.to_text();
        assert!(text.contains("Δφ_ms\tΔθ_0s\tΔφ_mk\tΔφ_0s\tΔθ_0k\tΔψ_0k"));
        assert!(text.contains("ΔM̄_a3 × 10^5"));
    }
}
