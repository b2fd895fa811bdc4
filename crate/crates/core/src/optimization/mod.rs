//! Hover-orbit search, sensitivity of averaged wrenches to the control
//! parameters, and receding-horizon stabilization.

pub mod mpc;
pub mod nelder_mead;
pub mod orbit;
pub mod sensitivity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{AbdomenWaveform, PrescribedMotion, WingWaveform};
use crate::lie::{Rotation, Vec3};
use crate::simulation::ReducedState;

pub use crate::kinematics::DeltaSchedule;

pub use orbit::{compare_abdomen, evaluate_orbit, find_periodic_orbit, orbit_objective, AbdomenComparison, OrbitEvaluation, OrbitOptions, OrbitReport};
pub use mpc::{mpc_objective, stabilize, HorizonRecord, MpcOptions, MpcWeights, Perturbation, StabilizeReport, StateError};
pub use sensitivity::{sensitivity_table, SensitivityTable};

/// Number of scalars in the full parameter vector.
pub const N_ORBIT_PARAMS: usize = 21;

/// Names in canonical order.
pub const PARAM_NAMES: [&str; N_ORBIT_PARAMS] = [
    "f", "beta", "phi_m", "phi_k", "phi_0", "theta_m", "theta_c", "theta_0", "theta_a", "psi_m", "psi_n", "psi_0", "psi_a",
    "theta_am", "theta_a0", "theta_aa", "xdot0_1", "xdot0_2", "xdot0_3", "theta_b0", "omega2_0",
];

/// The deviation harmonic is an integer and never optimized.
const PSI_N_INDEX: usize = 10;
/// Indices frozen when the abdomen does not undulate.
const UNDULATION_INDICES: [usize; 2] = [13, 15];

/// Wing and abdomen waveform parameters plus the initial body state of a
/// planar hover orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParameters {
    pub f: f64,
    pub beta: f64,
    pub phi_m: f64,
    pub phi_k: f64,
    pub phi_0: f64,
    pub theta_m: f64,
    pub theta_c: f64,
    pub theta_0: f64,
    pub theta_a: f64,
    pub psi_m: f64,
    /// Deviation harmonic, held fixed.
    pub psi_n: f64,
    pub psi_0: f64,
    pub psi_a: f64,
    pub theta_am: f64,
    pub theta_a0: f64,
    pub theta_aa: f64,
    pub xdot0: [f64; 3],
    /// Initial body pitch, `R(0) = exp(theta_b0 e2)`.
    pub theta_b0: f64,
    /// Initial body pitch rate.
    pub omega2_0: f64,
    pub undulation: bool,
}

impl Default for OrbitParameters {
    fn default() -> Self {
        OrbitParameters::reference_undulating()
    }
}

impl OrbitParameters {
    /// Reference hover orbit with abdomen undulation.
    pub fn reference_undulating() -> Self {
        OrbitParameters {
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
            theta_am: 0.2618,
            theta_a0: 0.2950,
            theta_aa: 2.7743,
            xdot0: [-0.2332, 0.0, -0.0764],
            theta_b0: 0.7314,
            omega2_0: -2.2583,
            undulation: true,
        }
    }

    /// Reference hover orbit with the abdomen held fixed.
    pub fn reference_fixed() -> Self {
        OrbitParameters {
            f: 11.3975,
            beta: 0.2014,
            phi_m: 0.6655,
            phi_k: 0.0138,
            phi_0: -0.0434,
            theta_m: 0.6980,
            theta_c: 2.9968,
            theta_0: 0.3503,
            theta_a: 0.3971,
            psi_m: 0.0003,
            psi_n: 2.0,
            psi_0: -0.0400,
            psi_a: 3.1109,
            theta_am: 0.0,
            theta_a0: 0.7667,
            theta_aa: 0.0,
            xdot0: [-0.2437, 0.0, -0.0859],
            theta_b0: 0.5666,
            omega2_0: -0.1709,
            undulation: false,
        }
    }

    /// Same orbit with the abdomen frozen at its mean pitch.
    pub fn with_fixed_abdomen(mut self) -> Self {
        self.theta_am = 0.0;
        self.theta_aa = 0.0;
        self.undulation = false;
        self
    }

    /// Values in canonical order.
    pub fn to_array(&self) -> [f64; N_ORBIT_PARAMS] {
        [
            self.f, self.beta, self.phi_m, self.phi_k, self.phi_0, self.theta_m, self.theta_c, self.theta_0, self.theta_a, self.psi_m,
            self.psi_n, self.psi_0, self.psi_a, self.theta_am, self.theta_a0, self.theta_aa, self.xdot0[0], self.xdot0[1],
            self.xdot0[2], self.theta_b0, self.omega2_0,
        ]
    }

    pub fn from_array(a: &[f64; N_ORBIT_PARAMS], undulation: bool) -> Self {
        OrbitParameters {
            f: a[0],
            beta: a[1],
            phi_m: a[2],
            phi_k: a[3],
            phi_0: a[4],
            theta_m: a[5],
            theta_c: a[6],
            theta_0: a[7],
            theta_a: a[8],
            psi_m: a[9],
            psi_n: a[10],
            psi_0: a[11],
            psi_a: a[12],
            theta_am: a[13],
            theta_a0: a[14],
            theta_aa: a[15],
            xdot0: [a[16], a[17], a[18]],
            theta_b0: a[19],
            omega2_0: a[20],
            undulation,
        }
    }

    /// Indices of the optimized scalars: 20 with undulation, 18 without.
    pub fn free_indices(undulation: bool) -> Vec<usize> {
        (0..N_ORBIT_PARAMS).filter(|&i| i != PSI_N_INDEX && (undulation || !UNDULATION_INDICES.contains(&i))).collect()
    }

    pub fn wing(&self) -> WingWaveform {
        WingWaveform {
            f: self.f,
            beta: self.beta,
            phi_m: self.phi_m,
            phi_k: self.phi_k,
            phi_0: self.phi_0,
            theta_m: self.theta_m,
            theta_c: self.theta_c,
            theta_0: self.theta_0,
            theta_a: self.theta_a,
            psi_m: self.psi_m,
            psi_n: self.psi_n,
            psi_0: self.psi_0,
            psi_a: self.psi_a,
        }
    }

    pub fn abdomen(&self) -> AbdomenWaveform {
        AbdomenWaveform { theta_am: self.theta_am, theta_aa: self.theta_aa, theta_a0: self.theta_a0, undulation: self.undulation }
    }

    /// Symmetric wing motion with this abdomen program.
    pub fn motion(&self) -> PrescribedMotion {
        PrescribedMotion::symmetric(self.wing(), self.abdomen())
    }

    pub fn initial_state(&self) -> ReducedState {
        ReducedState {
            x: Vec3::zeros(),
            r: Rotation::about_axis(1, self.theta_b0),
            v: Vec3::from(self.xdot0),
            w: Vec3::new(0.0, self.omega2_0, 0.0),
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f
    }

    /// Flapping feasibility `|phi_m| + |phi_0| < pi/2` and waveform validity.
    pub fn check_feasible(&self) -> Result<()> {
        if !(self.phi_m.abs() + self.phi_0.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Validation("|phi_m| + |phi_0| < pi/2".into()));
        }
        self.wing().validate()
    }
}

/// Box bounds on the orbit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterBounds {
    pub lower: OrbitParameters,
    pub upper: OrbitParameters,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        let lower = OrbitParameters {
            f: 8.0,
            beta: -0.6,
            phi_m: 0.3,
            phi_k: 0.01,
            phi_0: -0.6,
            theta_m: 0.2,
            theta_c: 0.1,
            theta_0: -0.5,
            theta_a: -1.5,
            psi_m: 0.0,
            psi_n: 2.0,
            psi_0: -0.2,
            psi_a: -3.14,
            theta_am: 0.0,
            theta_a0: -0.5,
            theta_aa: -3.14,
            xdot0: [-1.0, -0.1, -1.0],
            theta_b0: 0.0,
            omega2_0: -10.0,
            undulation: true,
        };
        let upper = OrbitParameters {
            f: 16.0,
            beta: 0.6,
            phi_m: 1.3,
            phi_k: 1.0,
            phi_0: 0.6,
            theta_m: 1.2,
            theta_c: 5.0,
            theta_0: 1.0,
            theta_a: 1.5,
            psi_m: 0.2,
            psi_n: 2.0,
            psi_0: 0.2,
            psi_a: 3.14,
            theta_am: 0.6,
            theta_a0: 1.2,
            theta_aa: 3.14,
            xdot0: [1.0, 0.1, 1.0],
            theta_b0: 1.5,
            omega2_0: 10.0,
            undulation: true,
        };
        ParameterBounds { lower, upper }
    }
}

impl ParameterBounds {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        for i in 0..N_ORBIT_PARAMS {
            if !(lo[i] <= hi[i]) {
                return Err(Error::Validation(format!("bounds on {}: lower <= upper", PARAM_NAMES[i])));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &OrbitParameters) -> bool {
        let (lo, hi, v) = (self.lower.to_array(), self.upper.to_array(), p.to_array());
        OrbitParameters::free_indices(p.undulation).iter().all(|&i| v[i] >= lo[i] - 1e-12 && v[i] <= hi[i] + 1e-12)
    }

    /// Maps free parameters to `[0, 1]`, clipping to the box.
    pub fn normalize(&self, p: &OrbitParameters) -> Vec<f64> {
        let (lo, hi, v) = (self.lower.to_array(), self.upper.to_array(), p.to_array());
        OrbitParameters::free_indices(p.undulation)
            .iter()
            .map(|&i| if hi[i] > lo[i] { ((v[i] - lo[i]) / (hi[i] - lo[i])).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize); fixed parameters come from `base`.
    pub fn denormalize(&self, u: &[f64], base: &OrbitParameters) -> OrbitParameters {
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        let mut v = base.to_array();
        for (k, &i) in OrbitParameters::free_indices(base.undulation).iter().enumerate() {
            v[i] = lo[i] + u[k].clamp(0.0, 1.0) * (hi[i] - lo[i]);
        }
        OrbitParameters::from_array(&v, base.undulation)
    }
}

/// Thread pool sized by `GEOFLAP_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("GEOFLAP_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}
