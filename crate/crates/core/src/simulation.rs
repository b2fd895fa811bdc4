//! Time integration of the free body under prescribed appendage motion.
//!
//! The free part `(x, R, xdot, Omega)` is integrated with a 4-stage
//! Runge-Kutta-Munthe-Kaas scheme: attitudes are advanced as `R0 exp(theta)`
//! with `theta` integrated in the Lie algebra, so every stage stays on SO(3).
//! Joint torques follow by dynamic inversion of the appendage equations.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::SVector;

use crate::aero::{blade_strips, total_aero_wrench_with, AeroModel, BladeStrip};
use crate::dynamics::{c_matrix, gravity_wrench, kinetic_energy, potential_energy, EomTerms, Vec6, Vec9, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::kinematics::PrescribedMotion;
use crate::lie::{exp_so3, renormalize, right_jacobian_inv, AlgebraElement, GroupElement, Rotation, Vec15, Vec3};
use crate::morphology::Morphology;

pub const DEFAULT_STEPS_PER_PERIOD: usize = 1200;
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 200;

/// Vehicle, aerodynamics and gravity.
#[derive(Debug, Clone)]
pub struct Model {
    pub morph: Morphology,
    /// `None` switches aerodynamics off.
    pub aero: Option<AeroModel>,
    pub gravity: f64,
    strips: Vec<BladeStrip>,
}

impl Default for Model {
    fn default() -> Self {
        Model::new(Morphology::default(), Some(AeroModel::default()), DEFAULT_GRAVITY)
    }
}

impl Model {
    pub fn new(morph: Morphology, aero: Option<AeroModel>, gravity: f64) -> Self {
        let strips = aero.as_ref().map(|a| blade_strips(&morph.planform, a.n_strips)).unwrap_or_default();
        Model { morph, aero, gravity, strips }
    }

    pub fn without_aero(&self) -> Self {
        Model::new(self.morph.clone(), None, self.gravity)
    }

    /// `f_a + f_g` with the wing forces and moments.
    pub fn external_force(&self, g: &GroupElement, xi: &AlgebraElement) -> (Vec15, [Vec3; 3], [Vec3; 3]) {
        let fg = gravity_wrench(&self.morph, g, self.gravity).to_vector();
        match &self.aero {
            Some(a) => {
                let (fa, forces, moments) = total_aero_wrench_with(a, &self.strips, &self.morph, g, xi);
                (fg + fa.to_vector(), forces, moments)
            }
            None => (fg, [Vec3::zeros(); 3], [Vec3::zeros(); 3]),
        }
    }
}

/// Position, attitude, inertial velocity and body angular velocity of the
/// thorax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub x: Vec3,
    pub r: Rotation,
    pub v: Vec3,
    pub w: Vec3,
}

impl ReducedState {
    pub fn at_rest() -> Self {
        ReducedState { x: Vec3::zeros(), r: Rotation::identity(), v: Vec3::zeros(), w: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.r.matrix().iter()).chain(self.v.iter()).chain(self.w.iter()).all(|v| v.is_finite())
    }

    /// `x, R (row-major), xdot, Omega`.
    pub fn to_array(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        out[..3].copy_from_slice(self.x.as_slice());
        for i in 0..3 {
            for j in 0..3 {
                out[3 + 3 * i + j] = self.r[(i, j)];
            }
        }
        out[12..15].copy_from_slice(self.v.as_slice());
        out[15..].copy_from_slice(self.w.as_slice());
        out
    }

    pub fn from_array(a: &[f64; 18]) -> Self {
        let r = crate::lie::Mat3::from_fn(|i, j| a[3 + 3 * i + j]);
        ReducedState {
            x: Vec3::new(a[0], a[1], a[2]),
            r: Rotation::from_matrix_unchecked(r),
            v: Vec3::new(a[12], a[13], a[14]),
            w: Vec3::new(a[15], a[16], a[17]),
        }
    }

    /// Distance used for trajectory comparisons: Euclidean norm over
    /// position, velocity, angular velocity and attitude matrix entries.
    pub fn distance(&self, other: &ReducedState) -> f64 {
        ((self.x - other.x).norm_squared()
            + (self.v - other.v).norm_squared()
            + (self.w - other.w).norm_squared()
            + (self.r.matrix() - other.r.matrix()).norm_squared())
        .sqrt()
    }
}

/// Full configuration and velocity at `t` given the free state and the
/// prescribed appendage motion.
pub fn assemble_state(motion: &PrescribedMotion, t: f64, s: &ReducedState) -> (GroupElement, AlgebraElement, Vec9) {
    let k = motion.eval(t);
    let g = GroupElement { x: s.x, r: s.r, q: k.q };
    let xi = AlgebraElement { v: s.v, w: s.w, w_app: k.omega };
    let mut xi2_dot = Vec9::zeros();
    for i in 0..3 {
        xi2_dot.fixed_rows_mut::<3>(3 * i).copy_from(&k.omega_dot[i]);
    }
    (g, xi, xi2_dot)
}

/// Everything evaluated while solving for the free acceleration.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub g: GroupElement,
    pub xi: AlgebraElement,
    pub xi1_dot: Vec6,
    pub xi2_dot: Vec9,
    pub terms: EomTerms,
    /// `f_a + f_g`.
    pub force: Vec15,
    pub aero_force: [Vec3; 3],
    pub aero_moment: [Vec3; 3],
}

impl ReducedSolution {
    pub fn xi_dot(&self) -> Vec15 {
        let mut out = Vec15::zeros();
        out.fixed_rows_mut::<6>(0).copy_from(&self.xi1_dot);
        out.fixed_rows_mut::<9>(6).copy_from(&self.xi2_dot);
        out
    }

    /// Joint torques in the body frame that realize the prescribed
    /// appendage acceleration.
    pub fn torques(&self) -> [Vec3; 3] {
        let j = &self.terms.jg;
        let j21 = j.fixed_view::<9, 6>(6, 0);
        let j22 = j.fixed_view::<9, 9>(6, 6);
        let rhs2 = self.terms.bias.fixed_rows::<9>(6) + self.force.fixed_rows::<9>(6);
        let f_tau2 = j21 * self.xi1_dot + j22 * self.xi2_dot - rhs2;
        std::array::from_fn(|i| self.g.q[i] * f_tau2.fixed_rows::<3>(3 * i).into_owned())
    }
}

/// Solves the free-body equations with the joint torques eliminated.
pub fn reduced_solve(model: &Model, motion: &PrescribedMotion, t: f64, s: &ReducedState) -> Result<ReducedSolution> {
    let (g, xi, xi2_dot) = assemble_state(motion, t, s);
    let terms = EomTerms::new(&model.morph, &g, &xi);
    let (force, aero_force, aero_moment) = model.external_force(&g, &xi);
    let rhs = terms.bias + force;
    let c = c_matrix(&g);
    let j = &terms.jg;
    let a = j.fixed_view::<6, 6>(0, 0) - c * j.fixed_view::<9, 6>(6, 0);
    let b = rhs.fixed_rows::<6>(0) - c * rhs.fixed_rows::<9>(6) - (j.fixed_view::<6, 9>(0, 6) - c * j.fixed_view::<9, 9>(6, 6)) * xi2_dot;
    if !(a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite { t, last_good: format!("{s:?}") });
    }
    let xi1_dot = a.lu().solve(&b).filter(|x| x.iter().all(|v| v.is_finite())).ok_or_else(|| {
        let sv = a.singular_values();
        Error::Singular { condition: sv.max() / sv.min() }
    })?;
    Ok(ReducedSolution { g, xi, xi1_dot, xi2_dot, terms, force, aero_force, aero_moment })
}

/// `(xddot, Omega_dot)` of the free body.
pub fn reduced_accel(model: &Model, motion: &PrescribedMotion, t: f64, s: &ReducedState) -> Result<Vec6> {
    reduced_solve(model, motion, t, s).map(|r| r.xi1_dot)
}

/// `(tau_R, tau_L, tau_A)` given a free acceleration consistent with `s`.
pub fn reconstruct_torques(model: &Model, motion: &PrescribedMotion, t: f64, s: &ReducedState, xi1_dot: &Vec6) -> [Vec3; 3] {
    let (g, xi, xi2_dot) = assemble_state(motion, t, s);
    let terms = EomTerms::new(&model.morph, &g, &xi);
    let (force, aero_force, aero_moment) = model.external_force(&g, &xi);
    ReducedSolution { g, xi, xi1_dot: *xi1_dot, xi2_dot, terms, force, aero_force, aero_moment }.torques()
}

/// One Runge-Kutta-Munthe-Kaas step for `N` attitudes and a vector part.
///
/// `f` returns the body angular velocity of each attitude and the derivative
/// of the vector part.
pub fn rkmk4_step<const N: usize, const D: usize, F>(
    rots: &[Rotation; N],
    y: &SVector<f64, D>,
    t: f64,
    h: f64,
    mut f: F,
) -> Result<([Rotation; N], SVector<f64, D>)>
where
    F: FnMut(f64, &[Rotation; N], &SVector<f64, D>) -> Result<([Vec3; N], SVector<f64, D>)>,
{
    const C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
    let mut k_theta = [[Vec3::zeros(); N]; 4];
    let mut k_y = [SVector::<f64, D>::zeros(); 4];
    for s in 0..4 {
        let (stage_rots, theta, ys) = if s == 0 {
            (*rots, [Vec3::zeros(); N], *y)
        } else {
            let theta: [Vec3; N] = std::array::from_fn(|j| k_theta[s - 1][j] * (C[s] * h));
            (std::array::from_fn(|j| rots[j] * exp_so3(&theta[j])), theta, y + k_y[s - 1] * (C[s] * h))
        };
        let (w, dy) = f(t + C[s] * h, &stage_rots, &ys)?;
        k_theta[s] = std::array::from_fn(|j| if s == 0 { w[j] } else { right_jacobian_inv(&theta[j]) * w[j] });
        k_y[s] = dy;
    }
    let new_rots = std::array::from_fn(|j| {
        let theta = (k_theta[0][j] + k_theta[1][j] * 2.0 + k_theta[2][j] * 2.0 + k_theta[3][j]) * (h / 6.0);
        renormalize(rots[j] * exp_so3(&theta))
    });
    let new_y = y + (k_y[0] + k_y[1] * 2.0 + k_y[2] * 2.0 + k_y[3]) * (h / 6.0);
    Ok((new_rots, new_y))
}

/// Advances the free state by one step of size `h`.
pub fn step(model: &Model, motion: &PrescribedMotion, s: &ReducedState, t: f64, h: f64) -> Result<ReducedState> {
    let mut y = SVector::<f64, 9>::zeros();
    y.fixed_rows_mut::<3>(0).copy_from(&s.x);
    y.fixed_rows_mut::<3>(3).copy_from(&s.v);
    y.fixed_rows_mut::<3>(6).copy_from(&s.w);
    let ([r], y) = rkmk4_step(&[s.r], &y, t, h, |tt, rots, yy| {
        let st = ReducedState { x: yy.fixed_rows::<3>(0).into(), r: rots[0], v: yy.fixed_rows::<3>(3).into(), w: yy.fixed_rows::<3>(6).into() };
        let a = reduced_accel(model, motion, tt, &st)?;
        let mut dy = SVector::<f64, 9>::zeros();
        dy.fixed_rows_mut::<3>(0).copy_from(&st.v);
        dy.fixed_rows_mut::<6>(3).copy_from(&a);
        Ok(([st.w], dy))
    })?;
    Ok(ReducedState { x: y.fixed_rows::<3>(0).into(), r, v: y.fixed_rows::<3>(3).into(), w: y.fixed_rows::<3>(6).into() })
}

fn checked_step(model: &Model, motion: &PrescribedMotion, s: &ReducedState, t: f64, h: f64) -> Result<ReducedState> {
    match step(model, motion, s, t, h) {
        Ok(next) if next.is_finite() => Ok(next),
        Ok(_) => Err(Error::NonFinite { t: t + h, last_good: format!("t = {t}, {s:?}") }),
        Err(Error::Singular { .. }) if !s.is_finite() => Err(Error::NonFinite { t, last_good: format!("{s:?}") }),
        Err(e) => Err(e),
    }
}

/// Fixed-step schedule: `n_steps` steps of size `h`, recording every
/// `stride` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub h: f64,
    pub n_steps: usize,
    pub stride: usize,
}

impl StepPlan {
    pub fn per_period(period: f64, periods: usize, steps_per_period: usize, samples_per_period: usize) -> Result<Self> {
        if steps_per_period == 0 || samples_per_period == 0 || steps_per_period % samples_per_period != 0 {
            return Err(Error::InvalidArgument(format!(
                "steps per period ({steps_per_period}) must be a positive multiple of samples per period ({samples_per_period})"
            )));
        }
        Ok(StepPlan { h: period / steps_per_period as f64, n_steps: periods * steps_per_period, stride: steps_per_period / samples_per_period })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || self.stride == 0 {
            return Err(Error::InvalidArgument("step size must be positive and stride at least 1".into()));
        }
        Ok(())
    }
}

/// Advances `n_steps` without recording.
pub fn propagate(model: &Model, motion: &PrescribedMotion, ic: &ReducedState, t0: f64, h: f64, n_steps: usize) -> Result<ReducedState> {
    let mut s = *ic;
    for n in 0..n_steps {
        s = checked_step(model, motion, &s, t0 + n as f64 * h, h)?;
    }
    Ok(s)
}

/// One recorded instant of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub g: GroupElement,
    pub xi: AlgebraElement,
    pub energy: f64,
    pub energy_rate: f64,
    /// Joint torques in the body frame.
    pub tau: [Vec3; 3],
    /// Joint powers.
    pub power: [f64; 3],
    pub aero_force: [Vec3; 3],
    pub aero_moment: [Vec3; 3],
}

/// `E = m|xdot|^2/2 - m g e3.x` and its rate; joint powers `tau_i . Q_i Omega_i`.
pub fn energy_power(model: &Model, sol: &ReducedSolution, tau: &[Vec3; 3]) -> (f64, f64, [f64; 3]) {
    let m = model.morph.total_mass();
    let (x, v) = (sol.g.x, sol.xi.v);
    let a = sol.xi1_dot.fixed_rows::<3>(0);
    let e = 0.5 * m * v.norm_squared() - m * model.gravity * x.z;
    let e_dot = m * v.dot(&a) - m * model.gravity * v.z;
    let p = std::array::from_fn(|i| tau[i].dot(&(sol.g.q[i] * sol.xi.w_app[i])));
    (e, e_dot, p)
}

pub fn sample_at(model: &Model, motion: &PrescribedMotion, t: f64, s: &ReducedState) -> Result<TrajectorySample> {
    let sol = reduced_solve(model, motion, t, s)?;
    let tau = sol.torques();
    let (energy, energy_rate, power) = energy_power(model, &sol, &tau);
    Ok(TrajectorySample {
        t,
        g: sol.g,
        xi: sol.xi,
        energy,
        energy_rate,
        tau,
        power,
        aero_force: sol.aero_force,
        aero_moment: sol.aero_moment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Samples at `t0 + k * stride * h`, including both ends.
    pub samples: Vec<TrajectorySample>,
    pub final_state: ReducedState,
    pub t_end: f64,
}

/// Integrates from `t0` and records samples every `plan.stride` steps.
pub fn simulate(model: &Model, motion: &PrescribedMotion, ic: &ReducedState, t0: f64, plan: &StepPlan) -> Result<Trajectory> {
    plan.validate()?;
    let mut s = *ic;
    let mut samples = Vec::with_capacity(plan.n_steps / plan.stride + 2);
    samples.push(sample_at(model, motion, t0, &s)?);
    for n in 0..plan.n_steps {
        let t = t0 + n as f64 * plan.h;
        s = checked_step(model, motion, &s, t, plan.h)?;
        if (n + 1) % plan.stride == 0 {
            samples.push(sample_at(model, motion, t0 + (n + 1) as f64 * plan.h, &s)?);
        }
    }
    Ok(Trajectory { samples, final_state: s, t_end: t0 + plan.n_steps as f64 * plan.h })
}

// ---------------------------------------------------------------------------
// Unconstrained 15-dimensional system, used as an oracle.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub g: GroupElement,
    pub xi: AlgebraElement,
}

impl FullState {
    pub fn reduced(&self) -> ReducedState {
        ReducedState { x: self.g.x, r: self.g.r, v: self.xi.v, w: self.xi.w }
    }

    pub fn from_reduced(motion: &PrescribedMotion, t: f64, s: &ReducedState) -> Self {
        let (g, xi, _) = assemble_state(motion, t, s);
        FullState { g, xi }
    }
}

/// `xi_dot` of the full system under joint torques `tau`.
pub fn full_accel(model: &Model, g: &GroupElement, xi: &AlgebraElement, tau: &[Vec3; 3]) -> Vec15 {
    let terms = EomTerms::new(&model.morph, g, xi);
    let (force, _, _) = model.external_force(g, xi);
    let f_tau = crate::dynamics::torque_wrench(g, tau).to_vector();
    terms.acceleration(&(force + f_tau))
}

/// `K + U` of the whole vehicle.
pub fn total_energy(model: &Model, g: &GroupElement, xi: &AlgebraElement) -> f64 {
    kinetic_energy(&model.morph, g, xi) + potential_energy(&model.morph, g, model.gravity)
}

/// One RKMK step of the full system with torques supplied per stage.
pub fn full_step<F>(model: &Model, s: &FullState, t: f64, h: f64, mut torque: F) -> Result<FullState>
where
    F: FnMut(f64, &FullState) -> Result<[Vec3; 3]>,
{
    let rots = [s.g.r, s.g.q[0], s.g.q[1], s.g.q[2]];
    let mut y = SVector::<f64, 18>::zeros();
    y.fixed_rows_mut::<3>(0).copy_from(&s.g.x);
    y.fixed_rows_mut::<15>(3).copy_from(&s.xi.to_vector());
    let unpack = |rots: &[Rotation; 4], y: &SVector<f64, 18>| FullState {
        g: GroupElement { x: y.fixed_rows::<3>(0).into(), r: rots[0], q: [rots[1], rots[2], rots[3]] },
        xi: AlgebraElement::from_vector(&y.fixed_rows::<15>(3).into()),
    };
    let (rots, y) = rkmk4_step(&rots, &y, t, h, |tt, rr, yy| {
        let st = unpack(rr, yy);
        let tau = torque(tt, &st)?;
        let acc = full_accel(model, &st.g, &st.xi, &tau);
        let mut dy = SVector::<f64, 18>::zeros();
        dy.fixed_rows_mut::<3>(0).copy_from(&st.xi.v);
        dy.fixed_rows_mut::<15>(3).copy_from(&acc);
        Ok(([st.xi.w, st.xi.w_app[0], st.xi.w_app[1], st.xi.w_app[2]], dy))
    })?;
    let out = unpack(&rots, &y);
    if !out.xi.is_finite() || !out.g.x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t: t + h, last_good: format!("t = {t}, {s:?}") });
    }
    Ok(out)
}

/// Full-system torques that reproduce the prescribed motion, computed from
/// the free part of the given state.
pub fn online_torques(model: &Model, motion: &PrescribedMotion, t: f64, s: &FullState) -> Result<[Vec3; 3]> {
    Ok(reduced_solve(model, motion, t, &s.reduced())?.torques())
}

// ---------------------------------------------------------------------------
// Output formats.

const BINARY_MAGIC: &[u8; 4] = b"GFW1";

/// Column names of [`TrajectorySample::to_row`], in order.
pub fn csv_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let vec3 = |cols: &mut Vec<String>, name: &str| cols.extend((1..=3).map(|k| format!("{name}_{k}")));
    let mat3 = |cols: &mut Vec<String>, name: &str| cols.extend((1..=3).flat_map(|i| (1..=3).map(move |j| format!("{name}_{i}{j}"))));
    vec3(&mut cols, "x");
    mat3(&mut cols, "R");
    for n in ["Q_R", "Q_L", "Q_A"] {
        mat3(&mut cols, n);
    }
    vec3(&mut cols, "xdot");
    vec3(&mut cols, "Omega");
    for n in ["Omega_R", "Omega_L", "Omega_A"] {
        vec3(&mut cols, n);
    }
    cols.push("E".into());
    cols.push("Edot".into());
    for n in ["tau_R", "tau_L", "tau_A"] {
        vec3(&mut cols, n);
    }
    cols.extend(["P_R", "P_L", "P_A"].map(String::from));
    for n in ["F_R", "F_L", "F_A", "M_R", "M_L", "M_A"] {
        vec3(&mut cols, n);
    }
    cols
}

impl TrajectorySample {
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = vec![self.t];
        let mat = |row: &mut Vec<f64>, r: &Rotation| {
            for i in 0..3 {
                for j in 0..3 {
                    row.push(r[(i, j)]);
                }
            }
        };
        row.extend(self.g.x.iter());
        mat(&mut row, &self.g.r);
        for q in &self.g.q {
            mat(&mut row, q);
        }
        row.extend(self.xi.to_vector().iter());
        row.push(self.energy);
        row.push(self.energy_rate);
        for v in &self.tau {
            row.extend(v.iter());
        }
        row.extend(self.power);
        for v in self.aero_force.iter().chain(self.aero_moment.iter()) {
            row.extend(v.iter());
        }
        row
    }
}

/// Headered CSV, one sample per row.
pub fn write_csv<W: Write>(mut w: W, samples: &[TrajectorySample]) -> std::io::Result<()> {
    writeln!(w, "{}", csv_columns().join(","))?;
    for s in samples {
        let row: Vec<String> = s.to_row().iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, samples: &[TrajectorySample]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, samples).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Binary table: magic `GFW1`, row count and column count as little-endian
/// `u64`, then the rows as little-endian `f64`.
pub fn write_binary<W: Write>(mut w: W, rows: &[Vec<f64>]) -> std::io::Result<()> {
    let n_cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "ragged rows"));
    }
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    w.write_all(&(n_cols as u64).to_le_bytes())?;
    for v in rows.iter().flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Vec<Vec<f64>>> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(bad("missing GFW1 header"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n_rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n_cols = u64::from_le_bytes(word) as usize;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut row = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            r.read_exact(&mut word)?;
            row.push(f64::from_le_bytes(word));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn save_binary(path: impl AsRef<Path>, samples: &[TrajectorySample]) -> Result<()> {
    let path = path.as_ref();
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.to_row()).collect();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_binary(&mut w, &rows).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{AbdomenWaveform, WingWaveform};
    use crate::lie::vee_unchecked;
    use approx::assert_relative_eq;

    pub(crate) fn wing() -> WingWaveform {
        WingWaveform {
            f: 11.7575,
            beta: -0.0087,
            phi_m: 0.7271,
            phi_k: 0.9493,
            phi_0: -0.1977,
            theta_m: 0.6981,
            theta_c: 2.8289,
            theta_0: 0.4843,
            theta_a: 0.2905,
            psi_m: 0.0004,
            psi_n: 2.0,
            psi_0: -0.0223,
            psi_a: 2.7130,
        }
    }

    fn motion() -> PrescribedMotion {
        let abd = AbdomenWaveform { theta_am: 0.2618, theta_aa: 2.7743, theta_a0: 0.2950, undulation: true };
        PrescribedMotion::symmetric(wing(), abd)
    }

    fn still_motion() -> PrescribedMotion {
        let w = WingWaveform { phi_m: 0.0, theta_m: 0.0, psi_m: 0.0, ..wing() };
        PrescribedMotion::symmetric(w, AbdomenWaveform::fixed(0.4))
    }

    fn hover_ic() -> ReducedState {
        ReducedState { x: Vec3::zeros(), r: Rotation::about_axis(1, 0.7314), v: Vec3::new(-0.2332, 0.0, -0.0764), w: Vec3::new(0.0, -2.2583, 0.0) }
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let model = Model::new(Morphology::default(), None, 0.0);
        let m = still_motion();
        let s0 = ReducedState::at_rest();
        let s = propagate(&model, &m, &s0, 0.0, 1e-3, 50).unwrap();
        assert_eq!(s.x, Vec3::zeros());
        assert_eq!(s.v, Vec3::zeros());
        assert!(s.w.norm() == 0.0);
    }

    #[test]
    fn static_appendages_match_full_solve() {
        let model = Model::new(Morphology::default(), None, DEFAULT_GRAVITY);
        let m = still_motion();
        let s = ReducedState::at_rest();
        let sol = reduced_solve(&model, &m, 0.0, &s).unwrap();
        // with everything at rest the appendage rows only fix the torques,
        // so the free block reduces to the locked rigid body
        let j = &sol.terms.jg;
        let j11 = j.fixed_view::<6, 6>(0, 0).into_owned();
        let c = c_matrix(&sol.g);
        let locked = (j11 - c * j.fixed_view::<9, 6>(6, 0)).lu().solve(&(sol.force.fixed_rows::<6>(0) - c * sol.force.fixed_rows::<9>(6))).unwrap();
        assert_relative_eq!(sol.xi1_dot, locked, epsilon = 1e-12);
        // full solve with the reconstructed torques reproduces it
        let tau = sol.torques();
        let acc = full_accel(&model, &sol.g, &sol.xi, &tau);
        assert_relative_eq!(acc.fixed_rows::<6>(0).into_owned(), sol.xi1_dot, epsilon = 1e-9);
        assert!(acc.fixed_rows::<9>(6).norm() < 1e-9);
        // vertical acceleration is gravity
        assert_relative_eq!(sol.xi1_dot[2], DEFAULT_GRAVITY, max_relative = 1e-9);
    }

    #[test]
    fn rest_torques_balance_gravity() {
        let model = Model::new(Morphology::default(), None, DEFAULT_GRAVITY);
        let m = still_motion();
        let s = ReducedState::at_rest();
        let sol = reduced_solve(&model, &m, 0.0, &s).unwrap();
        // free fall: the body accelerates with gravity so the joints carry no load
        let tau = sol.torques();
        for t in tau {
            assert!(t.norm() < 1e-15, "{t}");
        }
        // held in place, the abdomen joint must cancel the gravity moment
        let mut held = sol.clone();
        held.xi1_dot = Vec6::zeros();
        let tau = held.torques();
        let p = model.morph.abdomen();
        let qa = sol.g.q[2];
        let down = qa.transpose() * Vec3::z();
        let expected = qa * (-(p.com_offset.cross(&down)) * (p.mass * DEFAULT_GRAVITY));
        assert_relative_eq!(tau[2], expected, epsilon = 1e-15);
    }

    #[test]
    fn elimination_residual_vanishes() {
        let model = Model::default();
        let m = motion();
        let s = hover_ic();
        for k in 0..20 {
            let t = k as f64 * m.period() / 20.0;
            let sol = reduced_solve(&model, &m, t, &s).unwrap();
            let res = sol.terms.residual(&sol.xi_dot(), &sol.force);
            let c = c_matrix(&sol.g);
            let projected = res.fixed_rows::<6>(0) - c * res.fixed_rows::<9>(6);
            assert!(projected.norm() < 1e-9 * sol.force.norm().max(1e-6), "{}", projected.norm());
        }
    }

    #[test]
    fn torque_round_trip() {
        let model = Model::default();
        let m = motion();
        let s = hover_ic();
        for k in 0..50 {
            let t = k as f64 * m.period() / 50.0;
            let sol = reduced_solve(&model, &m, t, &s).unwrap();
            let acc = full_accel(&model, &sol.g, &sol.xi, &sol.torques());
            let err = (acc.fixed_rows::<9>(6) - sol.xi2_dot).norm();
            assert!(err < 1e-8 * sol.xi2_dot.norm().max(1.0), "{err}");
            assert!((acc.fixed_rows::<6>(0) - sol.xi1_dot).norm() < 1e-8);
        }
    }

    #[test]
    fn energy_rate_matches_difference() {
        let model = Model::default();
        let m = motion();
        let plan = StepPlan::per_period(m.period(), 1, 1200, 40).unwrap();
        let tr = simulate(&model, &m, &hover_ic(), 0.0, &plan).unwrap();
        let d = 2e-6;
        let mass = model.morph.total_mass();
        for smp in &tr.samples {
            let s = FullState { g: smp.g, xi: smp.xi }.reduced();
            let fwd = sample_at(&model, &m, smp.t + d, &step(&model, &m, &s, smp.t, d).unwrap()).unwrap();
            let back = sample_at(&model, &m, smp.t - d, &step(&model, &m, &s, smp.t, -d).unwrap()).unwrap();
            let fd = (fwd.energy - back.energy) / (2.0 * d);
            // scale of the two terms that make up the rate
            let acc = reduced_accel(&model, &m, smp.t, &s).unwrap();
            let scale = mass * smp.xi.v.norm() * (acc.fixed_rows::<3>(0).norm() + model.gravity);
            assert!((fd - smp.energy_rate).abs() < 1e-5 * scale, "{fd} vs {}", smp.energy_rate);
            assert_relative_eq!(smp.power[0], smp.power[1], max_relative = 1e-12);
        }
    }

    #[test]
    fn at_rest_energy_and_power_vanish() {
        let model = Model::new(Morphology::default(), None, DEFAULT_GRAVITY);
        let s = sample_at(&model, &still_motion(), 0.0, &ReducedState::at_rest()).unwrap();
        assert_eq!(s.energy, 0.0);
        assert_eq!(s.power, [0.0; 3]);
    }

    #[test]
    fn attitude_stays_orthonormal() {
        let model = Model::default();
        let m = motion();
        let plan = StepPlan::per_period(m.period(), 3, 1200, 12).unwrap();
        let tr = simulate(&model, &m, &hover_ic(), 0.0, &plan).unwrap();
        for s in &tr.samples {
            assert!(s.g.r.orthogonality_error() < 1e-9);
        }
        // samples land on the step grid
        assert_eq!(tr.samples.len(), 3 * 12 + 1);
        assert_eq!(tr.samples[1].t, 100.0 * plan.h);
    }

    #[test]
    fn full_system_tracks_prescribed_attitudes() {
        let model = Model::default();
        let m = motion();
        let h = m.period() / 1200.0;
        let mut s = FullState::from_reduced(&m, 0.0, &hover_ic());
        for n in 0..120 {
            let t = n as f64 * h;
            s = full_step(&model, &s, t, h, |tt, st| online_torques(&model, &m, tt, st)).unwrap();
        }
        let k = m.eval(120.0 * h);
        for i in 0..3 {
            let d = vee_unchecked(&(k.q[i].matrix().transpose() * s.g.q[i].matrix()));
            assert!(d.norm() < 1e-8, "{}", d.norm());
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        let model = Model::default();
        let mut ic = hover_ic();
        ic.v.x = f64::NAN;
        let err = propagate(&model, &motion(), &ic, 0.0, 1e-4, 3).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. } | Error::Singular { .. }), "{err}");
    }

    #[test]
    fn binary_round_trip_and_csv_shape() {
        let model = Model::default();
        let m = motion();
        let plan = StepPlan::per_period(m.period(), 1, 120, 10).unwrap();
        let tr = simulate(&model, &m, &hover_ic(), 0.0, &plan).unwrap();
        let rows: Vec<Vec<f64>> = tr.samples.iter().map(|s| s.to_row()).collect();
        assert_eq!(rows[0].len(), csv_columns().len());
        let mut buf = Vec::new();
        write_binary(&mut buf, &rows).unwrap();
        assert_eq!(&buf[..4], b"GFW1");
        assert_eq!(read_binary(&buf[..]).unwrap(), rows);
        assert!(read_binary(&b"XXXX"[..]).is_err());

        let mut csv = Vec::new();
        write_csv(&mut csv, &tr.samples).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), tr.samples.len() + 1);
        assert!(lines[0].starts_with("t,x_1,x_2,x_3,R_11"));
        let parsed: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, rows[0]);
    }

    #[test]
    fn reduced_state_array_round_trip() {
        let s = hover_ic();
        assert_eq!(ReducedState::from_array(&s.to_array()), s);
    }
}
