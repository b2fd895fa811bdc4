//! Receding-horizon stabilization of a hover orbit over the six control
//! parameter changes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{thread_pool, OrbitParameters};
use crate::error::{Error, Result};
use crate::kinematics::{DeltaSchedule, PrescribedMotion, N_DELTA};
use crate::lie::{exp_so3, Mat3, Rotation, Vec3};
use crate::simulation::{propagate, simulate, ReducedState, StepPlan, TrajectorySample};
use crate::simulation::Model;

/// Per-class error magnitudes between two body states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateError {
    pub position: f64,
    pub velocity: f64,
    /// Rotation angle of `R_d^T R`.
    pub attitude: f64,
    pub angular_velocity: f64,
}

impl StateError {
    pub fn between(s: &ReducedState, reference: &ReducedState) -> Self {
        StateError {
            position: (s.x - reference.x).norm(),
            velocity: (s.v - reference.v).norm(),
            attitude: s.r.angle_to(&reference.r),
            angular_velocity: (s.w - reference.w).norm(),
        }
    }
}

/// Component weights (inverse characteristic scales) and the slope of the
/// horizon weights `W_i = 1 + slope * i / N_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcWeights {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
    pub angular_velocity: f64,
    pub horizon_slope: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        MpcWeights { position: 1.0 / 0.01, velocity: 1.0 / 0.1, attitude: 1.0 / 0.1, angular_velocity: 1.0, horizon_slope: 1.0 }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.position, self.velocity, self.attitude, self.angular_velocity];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(self.horizon_slope >= 0.0) {
            return Err(Error::InvalidArgument("MPC weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn horizon_weight(&self, i: usize, n: usize) -> f64 {
        1.0 + self.horizon_slope * i as f64 / n as f64
    }

    /// Weighted error vector: position and velocity differences, the
    /// rotation vector of `R_d^T R`, and the angular velocity difference.
    fn residual(&self, s: &ReducedState, reference: &ReducedState) -> [f64; 12] {
        let dx = (s.x - reference.x) * self.position;
        let dv = (s.v - reference.v) * self.velocity;
        let dr = crate::lie::log_so3(&(reference.r.transpose() * s.r)) * self.attitude;
        let dw = (s.w - reference.w) * self.angular_velocity;
        [dx.x, dx.y, dx.z, dv.x, dv.y, dv.z, dr.x, dr.y, dr.z, dw.x, dw.y, dw.z]
    }

    pub fn weighted_norm(&self, e: &StateError) -> f64 {
        ((self.position * e.position).powi(2)
            + (self.velocity * e.velocity).powi(2)
            + (self.attitude * e.attitude).powi(2)
            + (self.angular_velocity * e.angular_velocity).powi(2))
        .sqrt()
    }
}

/// `sum_i W_i |W_x (x(t_i) - x_d(t_i))|` over paired samples `(t_i, x)`;
/// sample `i` (1-based) gets horizon weight `W_i`.
pub fn mpc_objective(traj: &[(f64, ReducedState)], reference: &[(f64, ReducedState)], weights: &MpcWeights) -> Result<f64> {
    weights.validate()?;
    if traj.len() != reference.len() {
        return Err(Error::InvalidArgument(format!("{} samples against {} reference samples", traj.len(), reference.len())));
    }
    let n = traj.len();
    let mut j = 0.0;
    for (i, ((t, s), (td, sd))) in traj.iter().zip(reference).enumerate() {
        if (t - td).abs() > 1e-9 * t.abs().max(td.abs()).max(1.0) {
            return Err(Error::InvalidArgument(format!("sample {i} at t = {t} does not match reference time {td}")));
        }
        j += weights.horizon_weight(i + 1, n) * weights.weighted_norm(&StateError::between(s, sd));
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcOptions {
    /// Knot intervals per period.
    pub knots_per_period: usize,
    pub horizon_periods: usize,
    pub steps_per_period: usize,
    pub samples_per_period: usize,
    pub max_iterations: usize,
    /// Finite-difference step on knot values (rad).
    pub fd_step: f64,
    /// The solve stops once the mean weighted error per horizon sample is
    /// below this value.
    pub tolerance: f64,
    /// Knot values are clipped to `[-bound, bound]` (rad).
    pub bound: f64,
    pub weights: MpcWeights,
}

impl Default for MpcOptions {
    fn default() -> Self {
        MpcOptions {
            knots_per_period: 10,
            horizon_periods: 2,
            steps_per_period: 1200,
            samples_per_period: 200,
            max_iterations: 8,
            fd_step: 1e-3,
            tolerance: 0.05,
            bound: 0.35,
            weights: MpcWeights::default(),
        }
    }
}

impl MpcOptions {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.knots_per_period == 0 || self.horizon_periods == 0 {
            return Err(Error::InvalidArgument("knot and horizon counts must be positive".into()));
        }
        if self.steps_per_period % self.knots_per_period != 0 || self.steps_per_period % self.samples_per_period.max(1) != 0 {
            return Err(Error::InvalidArgument(format!(
                "steps per period ({}) must be a multiple of the knot count ({}) and of the sample count ({})",
                self.steps_per_period, self.knots_per_period, self.samples_per_period
            )));
        }
        if !(self.fd_step > 0.0 && self.tolerance >= 0.0 && self.bound > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step, tolerance and bound must be positive".into()));
        }
        Ok(())
    }

    fn n_intervals(&self) -> usize {
        self.knots_per_period * self.horizon_periods
    }

    /// Knot indices that are free; period boundaries are pinned to zero.
    fn free_knots(&self) -> Vec<usize> {
        (1..self.n_intervals()).filter(|k| k % self.knots_per_period != 0).collect()
    }
}

/// Deviation of an initial state from the orbit's: position offset, body
/// rotation `R = R_0 dR`, and velocity offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub dx: Vec3,
    pub dr: Rotation,
    pub dv: Vec3,
    pub dw: Vec3,
}

impl Perturbation {
    /// Offset of the reference perturbed hover state from the reference
    /// orbit's initial state.
    pub fn reference() -> Self {
        let rounded = Mat3::new(0.7365, 0.0163, 0.6763, -0.0130, 0.9999, -0.0100, -0.6764, -0.0014, 0.7366);
        let r = Rotation::project(&rounded);
        let r0 = exp_so3(&Vec3::new(0.0, 0.7314, 0.0));
        Perturbation {
            dx: Vec3::new(-0.0003, 0.0004, -0.0004),
            dr: r0.transpose() * r,
            dv: Vec3::new(-0.2412 + 0.2332, 0.0100, -0.0787 + 0.0764),
            dw: Vec3::new(-0.0437, -2.2907 + 2.2470, -0.0487),
        }
    }

    pub fn apply(&self, s: &ReducedState) -> ReducedState {
        ReducedState { x: s.x + self.dx, r: s.r * self.dr, v: s.v + self.dv, w: s.w + self.dw }
    }
}

/// Orbit states at the knot times of one period, extended periodically.
#[derive(Debug, Clone)]
struct ReferenceOrbit {
    period: f64,
    states: Vec<ReducedState>,
}

impl ReferenceOrbit {
    fn new(model: &Model, orbit: &OrbitParameters, opts: &MpcOptions) -> Result<Self> {
        let motion = orbit.motion();
        let period = orbit.period();
        let n = opts.steps_per_period / opts.knots_per_period;
        let h = period / opts.steps_per_period as f64;
        let mut s = orbit.initial_state();
        let mut states = Vec::with_capacity(opts.knots_per_period);
        for k in 0..opts.knots_per_period {
            states.push(s);
            s = propagate(model, &motion, &s, k as f64 * n as f64 * h, h, n)?;
        }
        Ok(ReferenceOrbit { period, states })
    }

    /// Reference state at knot `k` counted from `t = 0`.
    fn at(&self, k: usize) -> ReducedState {
        self.states[k % self.states.len()]
    }
}

/// One receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRecord {
    pub period: usize,
    pub schedule: DeltaSchedule,
    /// Objective of the zero schedule and of the solved schedule.
    pub objective_zero: f64,
    pub objective: f64,
    pub iterations: usize,
    /// The solve failed and zero deltas were applied.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeReport {
    pub controlled: Vec<TrajectorySample>,
    pub uncontrolled: Vec<TrajectorySample>,
    /// Knot values applied over the whole run.
    pub applied: DeltaSchedule,
    pub horizons: Vec<HorizonRecord>,
    /// Errors against the orbit at each period boundary, starting at `t = 0`.
    pub controlled_errors: Vec<StateError>,
    pub uncontrolled_errors: Vec<StateError>,
    pub weights: MpcWeights,
}

impl StabilizeReport {
    pub fn weighted_controlled(&self) -> Vec<f64> {
        self.controlled_errors.iter().map(|e| self.weights.weighted_norm(e)).collect()
    }

    pub fn weighted_uncontrolled(&self) -> Vec<f64> {
        self.uncontrolled_errors.iter().map(|e| self.weights.weighted_norm(e)).collect()
    }
}

struct Horizon<'a> {
    model: &'a Model,
    orbit: &'a OrbitParameters,
    reference: &'a ReferenceOrbit,
    opts: &'a MpcOptions,
    /// Knot index of the horizon start counted from `t = 0`.
    first_knot: usize,
    start: ReducedState,
}

impl Horizon<'_> {
    fn spacing(&self) -> f64 {
        self.reference.period / self.opts.knots_per_period as f64
    }

    fn schedule(&self, knots: Vec<[f64; N_DELTA]>) -> DeltaSchedule {
        DeltaSchedule { start: self.first_knot as f64 * self.spacing(), spacing: self.spacing(), knots }
    }

    /// States at knots `from..=N_p` given the state at knot `from`.
    fn predict_from(&self, schedule: &DeltaSchedule, from: usize, s: ReducedState) -> Result<Vec<ReducedState>> {
        let motion = self.orbit.motion().with_delta(schedule.clone());
        let per_knot = self.opts.steps_per_period / self.opts.knots_per_period;
        let h = self.reference.period / self.opts.steps_per_period as f64;
        let mut out = vec![s];
        let mut s = s;
        for k in from..self.opts.n_intervals() {
            let t0 = (self.first_knot + k) as f64 * self.spacing();
            s = propagate(self.model, &motion, &s, t0, h, per_knot)?;
            out.push(s);
        }
        Ok(out)
    }

    fn residuals(&self, states: &[ReducedState]) -> Vec<[f64; 12]> {
        (1..states.len()).map(|i| self.opts.weights.residual(&states[i], &self.reference.at(self.first_knot + i))).collect()
    }

    fn objective(&self, res: &[[f64; 12]]) -> f64 {
        let n = res.len();
        res.iter().enumerate().map(|(i, r)| self.opts.weights.horizon_weight(i + 1, n) * norm(r)).sum()
    }

    fn evaluate(&self, knots: &[[f64; N_DELTA]]) -> Result<(Vec<ReducedState>, f64)> {
        let states = self.predict_from(&self.schedule(knots.to_vec()), 0, self.start)?;
        let j = self.objective(&self.residuals(&states));
        Ok((states, j))
    }

    /// Damped Gauss-Newton on the reweighted sum of horizon errors, starting
    /// from `warm`.
    fn solve(&self, warm: Vec<[f64; N_DELTA]>) -> Result<(Vec<[f64; N_DELTA]>, f64, f64, usize)> {
        let opts = self.opts;
        let n_p = opts.n_intervals();
        let free = self.free_knots();
        let n_free = free.len() * N_DELTA;
        let weight_sum: f64 = (1..=n_p).map(|i| opts.weights.horizon_weight(i, n_p)).sum();
        let target = opts.tolerance * weight_sum;

        let zeros = vec![[0.0; N_DELTA]; n_p + 1];
        let (_, j_zero) = self.evaluate(&zeros)?;
        let (mut knots, mut states, mut j) = (zeros.clone(), None, j_zero);
        if warm.iter().flatten().any(|v| *v != 0.0) {
            if let Ok((st, jw)) = self.evaluate(&warm) {
                if jw < j {
                    (knots, states, j) = (warm, Some(st), jw);
                }
            }
        }
        let mut states = match states {
            Some(s) => s,
            None => self.evaluate(&knots)?.0,
        };
        let mut lambda = 1e-2;
        let mut iterations = 0;
        while iterations < opts.max_iterations && j > target {
            iterations += 1;
            let res = self.residuals(&states);
            let jac = self.jacobian(&knots, &states, &res, &free)?;
            let rows = n_p * 12;
            let mut r = DVector::zeros(rows);
            let mut a = DMatrix::zeros(rows, n_free);
            for (i, ri) in res.iter().enumerate() {
                let w = (opts.weights.horizon_weight(i + 1, n_p) / norm(ri).max(1e-6)).sqrt();
                for c in 0..12 {
                    r[i * 12 + c] = w * ri[c];
                    for p in 0..n_free {
                        a[(i * 12 + c, p)] = w * jac[(i * 12 + c, p)];
                    }
                }
            }
            let ata = a.transpose() * &a;
            let atr = a.transpose() * &r;
            let scale = ata.diagonal().max().max(1e-12);
            let mut improved = false;
            for _ in 0..8 {
                let m = &ata + DMatrix::identity(n_free, n_free) * (lambda * scale);
                let Some(chol) = m.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let d = chol.solve(&(-&atr));
                let mut trial = knots.clone();
                for (fi, &k) in free.iter().enumerate() {
                    for c in 0..N_DELTA {
                        trial[k][c] = (trial[k][c] + d[fi * N_DELTA + c]).clamp(-opts.bound, opts.bound);
                    }
                }
                match self.evaluate(&trial) {
                    Ok((st, jt)) if jt < j => {
                        (knots, states, j) = (trial, st, jt);
                        lambda = (lambda * 0.3).max(1e-8);
                        improved = true;
                        break;
                    }
                    _ => lambda *= 10.0,
                }
            }
            log::debug!("horizon at knot {}: iteration {iterations}, J {j:.6e}, lambda {lambda:.1e}", self.first_knot);
            if !improved {
                break;
            }
        }
        Ok((knots, j_zero, j, iterations))
    }

    fn free_knots(&self) -> Vec<usize> {
        self.opts.free_knots()
    }

    /// Forward-difference Jacobian of the unweighted residuals; a change of
    /// knot `k` leaves the states up to knot `k - 1` untouched.
    fn jacobian(&self, knots: &[[f64; N_DELTA]], states: &[ReducedState], res: &[[f64; 12]], free: &[usize]) -> Result<DMatrix<f64>> {
        let n_p = self.opts.n_intervals();
        let cols: Vec<(usize, usize, usize)> = free.iter().enumerate().flat_map(|(fi, &k)| (0..N_DELTA).map(move |c| (fi, k, c))).collect();
        let step = self.opts.fd_step;
        let columns: Vec<Result<(usize, Vec<f64>)>> = thread_pool().install(|| {
            cols.par_iter()
                .map(|&(fi, k, c)| {
                    let mut trial = knots.to_vec();
                    let h = if trial[k][c] + step > self.opts.bound { -step } else { step };
                    trial[k][c] += h;
                    let from = k - 1;
                    let tail = self.predict_from(&self.schedule(trial), from, states[from])?;
                    let mut col = vec![0.0; n_p * 12];
                    for (j, s) in tail.iter().enumerate().skip(1) {
                        let i = from + j;
                        let r = self.opts.weights.residual(s, &self.reference.at(self.first_knot + i));
                        for q in 0..12 {
                            col[(i - 1) * 12 + q] = (r[q] - res[i - 1][q]) / h;
                        }
                    }
                    Ok((fi * N_DELTA + c, col))
                })
                .collect()
        });
        let mut jac = DMatrix::zeros(n_p * 12, free.len() * N_DELTA);
        for c in columns {
            let (p, col) = c?;
            for (row, v) in col.into_iter().enumerate() {
                jac[(row, p)] = v;
            }
        }
        Ok(jac)
    }
}

fn norm(r: &[f64; 12]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs the receding-horizon loop for `n_periods` from `ic` at `t = 0`,
/// together with the uncontrolled run from the same state.
pub fn stabilize(model: &Model, orbit: &OrbitParameters, ic: &ReducedState, n_periods: usize, opts: &MpcOptions) -> Result<StabilizeReport> {
    opts.validate()?;
    orbit.motion().validate()?;
    if n_periods == 0 {
        return Err(Error::InvalidArgument("at least one period is required".into()));
    }
    if !ic.is_finite() {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    let reference = ReferenceOrbit::new(model, orbit, opts)?;
    let period = reference.period;
    let n_s = opts.knots_per_period;
    let plan = StepPlan::per_period(period, 1, opts.steps_per_period, opts.samples_per_period)?;

    let mut applied = DeltaSchedule::zeros(0.0, period / n_s as f64, n_periods * n_s);
    let mut horizons = Vec::with_capacity(n_periods);
    let mut controlled: Vec<TrajectorySample> = Vec::new();
    let mut controlled_errors = vec![StateError::between(ic, &reference.at(0))];
    let mut warm = vec![[0.0; N_DELTA]; opts.n_intervals() + 1];
    let mut s = *ic;
    for p in 0..n_periods {
        let horizon = Horizon { model, orbit, reference: &reference, opts, first_knot: p * n_s, start: s };
        let (knots, record) = match horizon.solve(warm.clone()) {
            Ok((knots, j0, j, iterations)) => {
                let schedule = horizon.schedule(knots.clone());
                (knots, HorizonRecord { period: p, schedule, objective_zero: j0, objective: j, iterations, fallback: false })
            }
            Err(e) => {
                log::warn!("period {p}: horizon solve failed ({e}); applying zero deltas");
                let knots = vec![[0.0; N_DELTA]; opts.n_intervals() + 1];
                let schedule = horizon.schedule(knots.clone());
                (knots, HorizonRecord { period: p, schedule, objective_zero: f64::NAN, objective: f64::NAN, iterations: 0, fallback: true })
            }
        };
        log::info!(
            "period {p}: J {:.4e} -> {:.4e} in {} iterations, max |delta| {:.4}",
            record.objective_zero,
            record.objective,
            record.iterations,
            record.schedule.max_abs()
        );
        let first: Vec<[f64; N_DELTA]> = knots[..=n_s].to_vec();
        for (k, v) in first.iter().enumerate() {
            applied.knots[p * n_s + k] = *v;
        }
        let motion = orbit.motion().with_delta(horizon.schedule(first));
        let traj = simulate(model, &motion, &s, p as f64 * period, &plan)?;
        let skip = usize::from(p > 0);
        controlled.extend(traj.samples.into_iter().skip(skip));
        s = traj.final_state;
        controlled_errors.push(StateError::between(&s, &reference.at((p + 1) * n_s)));
        warm = knots[n_s..].iter().copied().chain(std::iter::repeat([0.0; N_DELTA]).take(n_s)).collect();
        horizons.push(record);
    }

    let free_motion: PrescribedMotion = orbit.motion();
    let plan_all = StepPlan::per_period(period, n_periods, opts.steps_per_period, opts.samples_per_period)?;
    let uncontrolled = simulate(model, &free_motion, ic, 0.0, &plan_all)?.samples;
    let mut uncontrolled_errors = vec![StateError::between(ic, &reference.at(0))];
    let h = plan_all.h;
    let mut u = *ic;
    for p in 0..n_periods {
        u = propagate(model, &free_motion, &u, p as f64 * period, h, opts.steps_per_period)?;
        uncontrolled_errors.push(StateError::between(&u, &reference.at((p + 1) * n_s)));
    }
    Ok(StabilizeReport { controlled, uncontrolled, applied, horizons, controlled_errors, uncontrolled_errors, weights: opts.weights })
}
