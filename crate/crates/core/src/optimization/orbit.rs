//! Periodic hover orbits: energy-variation objective, feasibility projection
//! and multistart search.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, NelderMeadOptions};
use super::{thread_pool, OrbitParameters, ParameterBounds};
use crate::error::{Error, Result};
use crate::lie::log_so3;
use crate::simulation::{simulate, Model, StepPlan, Trajectory, DEFAULT_SAMPLES_PER_PERIOD, DEFAULT_STEPS_PER_PERIOD};

/// Objective value assigned to candidates whose simulation fails.
pub const FAILED_OBJECTIVE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitOptions {
    /// Weight on the integral of `|E|` (1/s).
    pub w1: f64,
    /// Weight on the integral of `|Edot|` (s).
    pub w2: f64,
    pub steps_per_period: usize,
    pub samples_per_period: usize,
    /// Position periodicity tolerance (m).
    pub eps_x: f64,
    /// Velocity periodicity tolerance (m/s).
    pub eps_v: f64,
    /// Also require the body attitude and angular velocity to return.
    pub periodic_attitude: bool,
    /// Attitude periodicity tolerance (rad).
    pub eps_r: f64,
    /// Angular-velocity periodicity tolerance (rad/s).
    pub eps_w: f64,
    /// Number of Latin-hypercube restarts in addition to the seeds.
    pub restarts: usize,
    /// Half-width of the restart box around the first seed, as a fraction of
    /// each parameter's range.
    pub restart_radius: f64,
    /// Objective evaluations per simplex search.
    pub max_evals: usize,
    /// Weight of the squared normalized periodicity residual, relative to
    /// the objective at the feasible starting point.
    pub penalty: f64,
    /// Levenberg-Marquardt iterations per feasibility projection.
    pub projection_iterations: usize,
    pub seed: u64,
    pub bounds: ParameterBounds,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            w1: 1.0,
            w2: 0.1,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            eps_x: 1e-3,
            eps_v: 1e-2,
            periodic_attitude: true,
            eps_r: 1e-2,
            eps_w: 1e-1,
            restarts: 3,
            restart_radius: 0.05,
            max_evals: 600,
            penalty: 1.0,
            projection_iterations: 12,
            seed: 0,
            bounds: ParameterBounds::default(),
        }
    }
}

impl OrbitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::Validation("orbit weights w1, w2 >= 0".into()));
        }
        if !(self.eps_x > 0.0 && self.eps_v > 0.0 && self.eps_r > 0.0 && self.eps_w > 0.0) {
            return Err(Error::Validation("periodicity tolerances > 0".into()));
        }
        if !(self.restart_radius > 0.0 && self.restart_radius <= 1.0) {
            return Err(Error::Validation("restart_radius in (0, 1]".into()));
        }
        self.bounds.validate()
    }
}

/// Objective, periodicity residuals and the underlying trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitEvaluation {
    pub j: f64,
    /// `x(T) - x(0)`, `xdot(T) - xdot(0)`, `log(R(0)^T R(T))`,
    /// `Omega(T) - Omega(0)`.
    pub residual: [f64; 12],
    pub trajectory: Trajectory,
}

impl OrbitEvaluation {
    pub fn residual_x(&self) -> f64 {
        self.residual[..3].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn residual_v(&self) -> f64 {
        self.residual[3..6].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn residual_r(&self) -> f64 {
        self.residual[6..9].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn residual_w(&self) -> f64 {
        self.residual[9..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_periodic(&self, opts: &OrbitOptions) -> bool {
        self.residual_x() < opts.eps_x
            && self.residual_v() < opts.eps_v
            && (!opts.periodic_attitude || (self.residual_r() < opts.eps_r && self.residual_w() < opts.eps_w))
    }

    /// Residual scaled by the tolerances; attitude entries are zero when
    /// attitude periodicity is not required.
    fn normalized(&self, opts: &OrbitOptions) -> [f64; 12] {
        let tol = [opts.eps_x, opts.eps_v, opts.eps_r, opts.eps_w];
        std::array::from_fn(|k| if k >= 6 && !opts.periodic_attitude { 0.0 } else { self.residual[k] / tol[k / 3] })
    }
}

/// `w1 int |E| dt + w2 int |Edot| dt` by the trapezoidal rule.
pub fn energy_objective(trajectory: &Trajectory, w1: f64, w2: f64) -> f64 {
    let s = &trajectory.samples;
    s.windows(2)
        .map(|p| {
            let dt = p[1].t - p[0].t;
            0.5 * dt * (w1 * (p[0].energy.abs() + p[1].energy.abs()) + w2 * (p[0].energy_rate.abs() + p[1].energy_rate.abs()))
        })
        .sum()
}

/// Simulates one period of the orbit.
pub fn evaluate_orbit(model: &Model, p: &OrbitParameters, opts: &OrbitOptions) -> Result<OrbitEvaluation> {
    p.check_feasible()?;
    let motion = p.motion();
    let ic = p.initial_state();
    let plan = StepPlan::per_period(p.period(), 1, opts.steps_per_period, opts.samples_per_period)?;
    let trajectory = simulate(model, &motion, &ic, 0.0, &plan)?;
    let end = &trajectory.final_state;
    let dx = end.x - ic.x;
    let dv = end.v - ic.v;
    let dr = log_so3(&(ic.r.transpose() * end.r));
    let dw = end.w - ic.w;
    let residual = [dx.x, dx.y, dx.z, dv.x, dv.y, dv.z, dr.x, dr.y, dr.z, dw.x, dw.y, dw.z];
    let j = energy_objective(&trajectory, opts.w1, opts.w2);
    Ok(OrbitEvaluation { j, residual, trajectory })
}

/// `J` of the orbit, or [`FAILED_OBJECTIVE`] when the simulation fails.
pub fn orbit_objective(model: &Model, p: &OrbitParameters, opts: &OrbitOptions) -> f64 {
    match evaluate_orbit(model, p, opts) {
        Ok(e) => e.j,
        Err(e) => {
            log::debug!("orbit candidate rejected: {e}");
            FAILED_OBJECTIVE
        }
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    /// `seed` for supplied starting points, `lhs` for sampled ones.
    pub origin: String,
    pub j: f64,
    pub residual_x: f64,
    pub residual_v: f64,
    pub residual_r: f64,
    pub residual_w: f64,
    pub feasible: bool,
    pub evaluations: usize,
    pub simplex_iterations: usize,
    pub projection_iterations: usize,
    #[serde(skip)]
    pub params: Option<OrbitParameters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub best: OrbitParameters,
    pub j: f64,
    pub residual_x: f64,
    pub residual_v: f64,
    pub residual_r: f64,
    pub residual_w: f64,
    pub seed_j: Option<f64>,
    pub rng_seed: u64,
    pub restarts: Vec<RestartRecord>,
}

fn project_periodic(model: &Model, start: &OrbitParameters, opts: &OrbitOptions, target: f64) -> (OrbitParameters, Option<OrbitEvaluation>, usize) {
    let bounds = &opts.bounds;
    let mut u = DVector::from_vec(bounds.normalize(start));
    let n = u.len();
    let eval = |u: &DVector<f64>| evaluate_orbit(model, &bounds.denormalize(u.as_slice(), start), opts).ok();
    let mut current = match eval(&u) {
        Some(e) => e,
        None => return (*start, None, 0),
    };
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.projection_iterations {
        let r = DVector::from_row_slice(&current.normalized(opts));
        if r.amax() < target {
            break;
        }
        iterations += 1;
        let d = 1e-6;
        let mut jac = DMatrix::zeros(12, n);
        for k in 0..n {
            let mut up = u.clone();
            let step = if up[k] + d <= 1.0 { d } else { -d };
            up[k] += step;
            let Some(e) = eval(&up) else { continue };
            let rk = DVector::from_row_slice(&e.normalized(opts));
            jac.set_column(k, &((rk - &r) / step));
        }
        let mut improved = false;
        for _ in 0..8 {
            // minimum-norm Levenberg-Marquardt step
            let m = &jac * jac.transpose() + DMatrix::identity(12, 12) * lambda;
            let Some(y) = m.lu().solve(&r) else { break };
            let cand = (&u - jac.transpose() * y).map(|v| v.clamp(0.0, 1.0));
            if let Some(e) = eval(&cand) {
                if DVector::from_row_slice(&e.normalized(opts)).norm() < r.norm() {
                    u = cand;
                    current = e;
                    lambda = (lambda / 3.0).max(1e-9);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (bounds.denormalize(u.as_slice(), start), Some(current), iterations)
}

fn run_restart(model: &Model, index: usize, origin: &str, start: &OrbitParameters, opts: &OrbitOptions) -> RestartRecord {
    let mut rec = RestartRecord {
        index,
        origin: origin.to_string(),
        j: f64::INFINITY,
        residual_x: f64::INFINITY,
        residual_v: f64::INFINITY,
        residual_r: f64::INFINITY,
        residual_w: f64::INFINITY,
        feasible: false,
        evaluations: 0,
        simplex_iterations: 0,
        projection_iterations: 0,
        params: None,
    };
    let feasible = |e: &OrbitEvaluation| e.is_periodic(opts);
    let mut best: Option<(OrbitParameters, OrbitEvaluation)> = None;
    let offer = |p: OrbitParameters, e: OrbitEvaluation, best: &mut Option<(OrbitParameters, OrbitEvaluation)>| {
        if feasible(&e) && opts.bounds.contains(&p) && best.as_ref().map_or(true, |(_, b)| e.j < b.j) {
            *best = Some((p, e));
        }
    };
    if let Ok(e) = evaluate_orbit(model, start, opts) {
        offer(*start, e, &mut best);
    }

    let (projected, eval, it) = project_periodic(model, start, opts, 0.3);
    rec.projection_iterations += it;
    let Some(eval) = eval else {
        return rec;
    };
    let j0 = eval.j.max(1e-12);
    offer(projected, eval, &mut best);

    let bounds = &opts.bounds;
    let weight = opts.penalty * j0;
    let objective = |u: &[f64]| {
        let p = bounds.denormalize(u, &projected);
        match evaluate_orbit(model, &p, opts) {
            Ok(e) => e.j + weight * e.normalized(opts).iter().map(|v| v * v).sum::<f64>(),
            Err(_) => FAILED_OBJECTIVE,
        }
    };
    let nm = nelder_mead::minimize(objective, &bounds.normalize(&projected), &NelderMeadOptions { max_evals: opts.max_evals, ..Default::default() });
    rec.evaluations = nm.evals;
    rec.simplex_iterations = nm.iterations;
    let candidate = bounds.denormalize(&nm.x, &projected);
    let (polished, eval, it) = project_periodic(model, &candidate, opts, 0.3);
    rec.projection_iterations += it;
    if let Some(e) = eval {
        offer(polished, e, &mut best);
    }

    if let Some((p, e)) = best {
        rec.j = e.j;
        rec.residual_x = e.residual_x();
        rec.residual_v = e.residual_v();
        rec.residual_r = e.residual_r();
        rec.residual_w = e.residual_w();
        rec.feasible = true;
        rec.params = Some(p);
    }
    rec
}

/// Latin-hypercube samples in the box of half-width `radius` around `center`
/// (normalized coordinates).
pub fn latin_hypercube(rng: &mut impl Rng, center: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &c in center {
        let (lo, hi) = ((c - radius).max(0.0), (c + radius).min(1.0));
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        columns.push(strata.iter().map(|&k| lo + (hi - lo) * (k as f64 + rng.gen::<f64>()) / count as f64).collect());
    }
    (0..count).map(|i| (0..n).map(|j| columns[j][i]).collect()).collect()
}

/// Multistart search from the given seeds plus Latin-hypercube restarts
/// around the first seed. All seeds must share one undulation setting.
pub fn find_periodic_orbit(model: &Model, seeds: &[OrbitParameters], opts: &OrbitOptions) -> Result<OrbitReport> {
    opts.validate()?;
    let first = *seeds.first().ok_or_else(|| Error::InvalidArgument("at least one seed orbit is required".into()))?;
    if seeds.iter().any(|s| s.undulation != first.undulation) {
        return Err(Error::InvalidArgument("seed orbits disagree on abdomen undulation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<(String, OrbitParameters)> = seeds.iter().map(|s| ("seed".to_string(), *s)).collect();
    for u in latin_hypercube(&mut rng, &opts.bounds.normalize(&first), opts.restart_radius, opts.restarts) {
        starts.push(("lhs".to_string(), opts.bounds.denormalize(&u, &first)));
    }
    let records: Vec<RestartRecord> = thread_pool().install(|| {
        starts.par_iter().enumerate().map(|(i, (origin, p))| run_restart(model, i, origin, p, opts)).collect()
    });
    for r in &records {
        log::info!("restart {} ({}): feasible {}, J {:.6e}, |dx| {:.2e}, |dv| {:.2e}", r.index, r.origin, r.feasible, r.j, r.residual_x, r.residual_v);
    }
    let seed_j = evaluate_orbit(model, &first, opts).ok().map(|e| e.j);
    let best = records.iter().filter(|r| r.feasible).min_by(|a, b| a.j.total_cmp(&b.j));
    let Some(best) = best else {
        let lines: Vec<String> = records
            .iter()
            .map(|r| {
                format!(
                    "restart {} ({}): |dx| {:.3e} m, |dv| {:.3e} m/s, |dR| {:.3e} rad, |dOmega| {:.3e} rad/s",
                    r.index, r.origin, r.residual_x, r.residual_v, r.residual_r, r.residual_w
                )
            })
            .collect();
        return Err(Error::Infeasible(format!("seed {}; {}", opts.seed, lines.join("; "))));
    };
    let params = best.params.expect("feasible restart records its parameters");
    // post-hoc check of the stated constraints
    params.check_feasible()?;
    debug_assert!(opts.bounds.contains(&params));
    Ok(OrbitReport {
        best: params,
        j: best.j,
        residual_x: best.residual_x,
        residual_v: best.residual_v,
        residual_r: best.residual_r,
        residual_w: best.residual_w,
        seed_j,
        rng_seed: opts.seed,
        restarts: records,
    })
}

/// One row of the paired comparison series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Time as a fraction of each orbit's period.
    pub phase: f64,
    pub energy: [f64; 2],
    pub power_r: [f64; 2],
    pub power_a: [f64; 2],
    pub torque_r: [f64; 2],
    pub torque_a: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbdomenComparison {
    pub j: [f64; 2],
    /// `100 (J_0 - J_1) / J_1`.
    pub percent_change: f64,
    /// Largest `|P_R - P_L|` over both orbits.
    pub max_power_asymmetry: f64,
    pub rows: Vec<ComparisonRow>,
}

/// Paired series of two orbits sampled at equal phases.
pub fn compare_orbits(model: &Model, a: &OrbitParameters, b: &OrbitParameters, opts: &OrbitOptions) -> Result<AbdomenComparison> {
    let ea = evaluate_orbit(model, a, opts)?;
    let eb = evaluate_orbit(model, b, opts)?;
    let (sa, sb) = (&ea.trajectory.samples, &eb.trajectory.samples);
    let rows = sa
        .iter()
        .zip(sb)
        .enumerate()
        .map(|(k, (x, y))| ComparisonRow {
            phase: k as f64 / opts.samples_per_period as f64,
            energy: [x.energy, y.energy],
            power_r: [x.power[0], y.power[0]],
            power_a: [x.power[2], y.power[2]],
            torque_r: [x.tau[0].norm(), y.tau[0].norm()],
            torque_a: [x.tau[2].norm(), y.tau[2].norm()],
        })
        .collect();
    let max_power_asymmetry = sa.iter().chain(sb).map(|s| (s.power[0] - s.power[1]).abs()).fold(0.0, f64::max);
    Ok(AbdomenComparison { j: [ea.j, eb.j], percent_change: 100.0 * (ea.j - eb.j) / eb.j, max_power_asymmetry, rows })
}

/// Orbit searches with and without undulation. The undulating search is
/// also seeded from the fixed-abdomen optimum, which lies in its family.
pub fn compare_abdomen(
    model: &Model,
    undulating_seed: &OrbitParameters,
    fixed_seed: &OrbitParameters,
    opts: &OrbitOptions,
) -> Result<(OrbitReport, OrbitReport, AbdomenComparison)> {
    let fixed = find_periodic_orbit(model, &[fixed_seed.with_fixed_abdomen()], opts)?;
    let mut lifted = fixed.best;
    lifted.undulation = true;
    let mut seed = *undulating_seed;
    seed.undulation = true;
    let undulating = find_periodic_orbit(model, &[seed, lifted], opts)?;
    let cmp = compare_orbits(model, &undulating.best, &fixed.best, opts)?;
    Ok((undulating, fixed, cmp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OrbitOptions {
        OrbitOptions { steps_per_period: 400, samples_per_period: 100, ..Default::default() }
    }

    #[test]
    fn objective_is_nonnegative_and_refines() {
        let model = Model::default();
        let p = OrbitParameters::reference_undulating();
        let coarse = OrbitOptions { steps_per_period: 1200, samples_per_period: 200, ..Default::default() };
        let fine = OrbitOptions { samples_per_period: 400, ..coarse.clone() };
        let a = orbit_objective(&model, &p, &coarse);
        let b = orbit_objective(&model, &p, &fine);
        assert!(a >= 0.0 && b >= 0.0);
        assert!((a - b).abs() < 1e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn infeasible_flapping_is_penalized() {
        let mut p = OrbitParameters::reference_undulating();
        p.phi_m = 1.3;
        p.phi_0 = 0.5;
        assert_eq!(orbit_objective(&Model::default(), &p, &quick()), FAILED_OBJECTIVE);
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(&mut rng, &[0.5, 0.0], 0.5, 10);
        for j in 0..2 {
            let mut bins: Vec<usize> = pts.iter().map(|p| ((p[j] - if j == 0 { 0.0 } else { 0.0 }) / if j == 0 { 0.1 } else { 0.05 }) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_orbit_compares_to_zero_difference() {
        let model = Model::default();
        let p = OrbitParameters::reference_fixed();
        let c = compare_orbits(&model, &p, &p, &quick()).unwrap();
        assert_eq!(c.percent_change, 0.0);
        for r in &c.rows {
            assert_eq!(r.energy[0], r.energy[1]);
            assert_eq!(r.power_r[0], r.power_r[1]);
            assert_eq!(r.torque_a[0], r.torque_a[1]);
        }
        assert!(c.max_power_asymmetry < 1e-15);
    }
}
