//! Prescribed wing and abdomen motion.
//!
//! Each wing follows a flapping / pitch / deviation Euler-angle program
//! relative to a stroke plane tilted by `beta` about the body y axis; the
//! abdomen pitches about the body y axis. Attitudes, angular velocities and
//! angular accelerations are all evaluated in closed form.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{Rotation, Vec3};

/// A scalar signal with its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Signal {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

impl Signal {
    fn scaled(self, k: f64) -> Signal {
        Signal { value: self.value * k, rate: self.rate * k, accel: self.accel * k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub phi: Signal,
    pub theta: Signal,
    pub psi: Signal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

/// Waveform parameters of one wing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingWaveform {
    /// Flapping frequency (Hz).
    pub f: f64,
    /// Stroke-plane angle (rad).
    pub beta: f64,
    pub phi_m: f64,
    pub phi_k: f64,
    pub phi_0: f64,
    pub theta_m: f64,
    pub theta_c: f64,
    pub theta_0: f64,
    pub theta_a: f64,
    pub psi_m: f64,
    pub psi_n: f64,
    pub psi_0: f64,
    pub psi_a: f64,
}

/// Time-varying additive changes to the wing parameters that the
/// receding-horizon controller adjusts. Each entry is `(value, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaveformOffset {
    pub phi_m: (f64, f64),
    pub phi_0: (f64, f64),
    pub theta_0: (f64, f64),
    pub psi_0: (f64, f64),
}

impl WingWaveform {
    pub fn period(&self) -> f64 {
        1.0 / self.f
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Validation(what.to_string()));
        if !(self.f > 0.0) {
            return fail("f > 0");
        }
        if !(self.phi_k > 0.0 && self.phi_k <= 1.0) {
            return fail("0 < phi_K <= 1");
        }
        if !(self.theta_c > 0.0) {
            return fail("theta_C > 0");
        }
        if !(self.theta_a.abs() < PI && self.psi_a.abs() < PI) {
            return fail("theta_a, psi_a in (-pi, pi)");
        }
        if !(self.phi_m.abs() + self.phi_0.abs() < FRAC_PI_2) {
            return fail("|phi_m| + |phi_0| < pi/2");
        }
        Ok(())
    }

    /// Flapping, pitch and deviation angles with analytic derivatives.
    pub fn euler_angles(&self, t: f64) -> EulerAngles {
        self.euler_angles_with_offset(t, &WaveformOffset::default())
    }

    pub fn euler_angles_with_offset(&self, t: f64, off: &WaveformOffset) -> EulerAngles {
        let omega = 2.0 * PI * self.f;

        // normalized flapping shape asin(K cos wt) / asin(K)
        let (c, s) = ((omega * t).cos(), (omega * t).sin());
        let k = self.phi_k;
        let x = k * c;
        let x_dot = -k * omega * s;
        let x_ddot = -k * omega * omega * c;
        let one_minus = (1.0 - x * x).max(0.0);
        let root = one_minus.sqrt();
        let norm = 1.0 / k.asin();
        let shape = Signal {
            value: x.asin(),
            rate: if root > 0.0 { x_dot / root } else { 0.0 },
            accel: if root > 0.0 { x_ddot / root + x * x_dot * x_dot / (one_minus * root) } else { 0.0 },
        }
        .scaled(norm);
        let amp = self.phi_m + off.phi_m.0;
        let phi = Signal {
            value: amp * shape.value + self.phi_0 + off.phi_0.0,
            rate: amp * shape.rate + off.phi_m.1 * shape.value + off.phi_0.1,
            accel: amp * shape.accel + 2.0 * off.phi_m.1 * shape.rate,
        };

        // pitch: tanh(C sin(wt + a)) / tanh(C)
        let arg = omega * t + self.theta_a;
        let y = self.theta_c * arg.sin();
        let y_dot = self.theta_c * omega * arg.cos();
        let y_ddot = -self.theta_c * omega * omega * arg.sin();
        let th = y.tanh();
        let sech2 = 1.0 - th * th;
        let pitch_shape = Signal {
            value: th,
            rate: sech2 * y_dot,
            accel: sech2 * y_ddot - 2.0 * th * sech2 * y_dot * y_dot,
        }
        .scaled(self.theta_m / self.theta_c.tanh());
        let theta = Signal {
            value: pitch_shape.value + self.theta_0 + off.theta_0.0,
            rate: pitch_shape.rate + off.theta_0.1,
            accel: pitch_shape.accel,
        };

        let wn = omega * self.psi_n;
        let arg = wn * t + self.psi_a;
        let psi = Signal {
            value: self.psi_m * arg.cos() + self.psi_0 + off.psi_0.0,
            rate: -self.psi_m * wn * arg.sin() + off.psi_0.1,
            accel: -self.psi_m * wn * wn * arg.cos(),
        };
        EulerAngles { phi, theta, psi }
    }

    pub fn attitude(&self, side: Side, t: f64) -> AppendageState {
        self.attitude_with_offset(side, t, &WaveformOffset::default())
    }

    /// Right: `exp(beta e2) exp(phi e1) exp(-psi e3) exp(theta e2)`;
    /// left: `exp(beta e2) exp(-phi e1) exp(psi e3) exp(theta e2)`.
    pub fn attitude_with_offset(&self, side: Side, t: f64, off: &WaveformOffset) -> AppendageState {
        let a = self.euler_angles_with_offset(t, off);
        let sign = match side {
            Side::Right => 1.0,
            Side::Left => -1.0,
        };
        let factors = [
            (1, Signal { value: self.beta, rate: 0.0, accel: 0.0 }),
            (0, a.phi.scaled(sign)),
            (2, a.psi.scaled(-sign)),
            (1, a.theta),
        ];
        compose_axis_rotations(&factors)
    }
}

/// Attitude, body angular velocity and angular acceleration of a product of
/// single-axis rotations `exp(a_1 e_{k1}) ... exp(a_n e_{kn})`.
fn compose_axis_rotations(factors: &[(usize, Signal); 4]) -> AppendageState {
    let rots: Vec<Rotation> = factors.iter().map(|(axis, s)| Rotation::about_axis(*axis, s.value)).collect();
    // tail[k] = E_{k+1} ... E_n
    let mut tail = [Rotation::identity(); 4];
    for k in (0..3).rev() {
        tail[k] = rots[k + 1] * tail[k + 1];
    }
    let mut omega = Vec3::zeros();
    let mut omega_dot = Vec3::zeros();
    // walk from the last factor so `omega` holds the velocity of the tail
    for k in (0..4).rev() {
        let (axis, s) = factors[k];
        let u = tail[k].transpose() * Vec3::ith(axis, 1.0);
        omega_dot += u * s.accel - omega.cross(&u) * s.rate;
        omega += u * s.rate;
    }
    AppendageState { q: rots[0] * tail[0], omega, omega_dot }
}

/// Relative attitude of an appendage with its angular velocity and
/// acceleration resolved in the appendage frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendageState {
    pub q: Rotation,
    pub omega: Vec3,
    pub omega_dot: Vec3,
}

/// Abdomen pitch `theta_A(t) = theta_Am cos(2 pi f t + theta_Aa) + theta_A0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbdomenWaveform {
    pub theta_am: f64,
    pub theta_aa: f64,
    pub theta_a0: f64,
    pub undulation: bool,
}

impl AbdomenWaveform {
    pub fn fixed(theta_a0: f64) -> Self {
        AbdomenWaveform { theta_am: 0.0, theta_aa: 0.0, theta_a0, undulation: false }
    }

    pub fn pitch(&self, f: f64, t: f64) -> Signal {
        let amp = if self.undulation { self.theta_am } else { 0.0 };
        let w = 2.0 * PI * f;
        let arg = w * t + self.theta_aa;
        Signal {
            value: amp * arg.cos() + self.theta_a0,
            rate: -amp * w * arg.sin(),
            accel: -amp * w * w * arg.cos(),
        }
    }

    /// `Q_A = exp(theta_A e2)`.
    pub fn attitude(&self, f: f64, t: f64) -> AppendageState {
        let p = self.pitch(f, t);
        let e2 = Vec3::y();
        AppendageState { q: Rotation::about_axis(1, p.value), omega: e2 * p.rate, omega_dot: e2 * p.accel }
    }
}

/// Number of controller parameters.
pub const N_DELTA: usize = 6;

/// Piecewise-linear schedule of the six control parameters
/// `[dphi_ms, dtheta_0s, dphi_mk, dphi_0s, dtheta_0k, dpsi_0k]`.
///
/// Knot `k` sits at `start + k * spacing`; the schedule is zero outside the
/// knot span.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSchedule {
    pub start: f64,
    pub spacing: f64,
    pub knots: Vec<[f64; N_DELTA]>,
}

impl DeltaSchedule {
    pub fn zeros(start: f64, spacing: f64, n_intervals: usize) -> Self {
        DeltaSchedule { start, spacing, knots: vec![[0.0; N_DELTA]; n_intervals + 1] }
    }

    pub fn n_intervals(&self) -> usize {
        self.knots.len().saturating_sub(1)
    }

    /// Value and slope at `t`.
    pub fn eval(&self, t: f64) -> ([f64; N_DELTA], [f64; N_DELTA]) {
        let n = self.n_intervals();
        let s = (t - self.start) / self.spacing;
        // knot times computed by the caller may round just outside the span
        if n == 0 || !(s >= -1e-9) || s > n as f64 + 1e-9 {
            return ([0.0; N_DELTA], [0.0; N_DELTA]);
        }
        let s = s.clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let frac = s - k as f64;
        let (a, b) = (&self.knots[k], &self.knots[k + 1]);
        let mut value = [0.0; N_DELTA];
        let mut rate = [0.0; N_DELTA];
        for j in 0..N_DELTA {
            value[j] = a[j] + (b[j] - a[j]) * frac;
            rate[j] = (b[j] - a[j]) / self.spacing;
        }
        (value, rate)
    }

    /// Per-wing parameter changes implied by the symmetric/antisymmetric
    /// decomposition.
    pub fn offsets(&self, t: f64) -> [WaveformOffset; 2] {
        let (v, r) = self.eval(t);
        offsets_from(&v, &r)
    }

    pub fn max_abs(&self) -> f64 {
        self.knots.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Right/left offsets from symmetric (`s`) and antisymmetric (`k`) parts.
pub fn offsets_from(v: &[f64; N_DELTA], r: &[f64; N_DELTA]) -> [WaveformOffset; 2] {
    let [phi_ms, theta_0s, phi_mk, phi_0s, theta_0k, psi_0k] = *v;
    let [rphi_ms, rtheta_0s, rphi_mk, rphi_0s, rtheta_0k, rpsi_0k] = *r;
    let side = |sgn: f64| WaveformOffset {
        phi_m: (phi_ms + sgn * phi_mk, rphi_ms + sgn * rphi_mk),
        phi_0: (phi_0s, rphi_0s),
        theta_0: (theta_0s + sgn * theta_0k, rtheta_0s + sgn * rtheta_0k),
        psi_0: (sgn * psi_0k, sgn * rpsi_0k),
    };
    [side(1.0), side(-1.0)]
}

/// Relative attitudes and rates of all three appendages at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendageKinematics {
    pub q: [Rotation; 3],
    pub omega: [Vec3; 3],
    pub omega_dot: [Vec3; 3],
}

/// Complete prescribed motion of the wings and abdomen.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribedMotion {
    pub right: WingWaveform,
    pub left: WingWaveform,
    pub abdomen: AbdomenWaveform,
    pub delta: Option<DeltaSchedule>,
}

impl PrescribedMotion {
    pub fn symmetric(wing: WingWaveform, abdomen: AbdomenWaveform) -> Self {
        PrescribedMotion { right: wing, left: wing, abdomen, delta: None }
    }

    pub fn with_delta(mut self, delta: DeltaSchedule) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn frequency(&self) -> f64 {
        self.right.f
    }

    pub fn period(&self) -> f64 {
        1.0 / self.right.f
    }

    pub fn validate(&self) -> Result<()> {
        self.right.validate()?;
        self.left.validate()?;
        if self.left.f != self.right.f {
            return Err(Error::Validation("both wings share one flapping frequency".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> AppendageKinematics {
        let [off_r, off_l] = match &self.delta {
            Some(d) => d.offsets(t),
            None => [WaveformOffset::default(); 2],
        };
        let r = self.right.attitude_with_offset(Side::Right, t, &off_r);
        let l = self.left.attitude_with_offset(Side::Left, t, &off_l);
        let a = self.abdomen.attitude(self.frequency(), t);
        AppendageKinematics {
            q: [r.q, l.q, a.q],
            omega: [r.omega, l.omega, a.omega],
            omega_dot: [r.omega_dot, l.omega_dot, a.omega_dot],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{vee_unchecked, Mat3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn table_wing() -> WingWaveform {
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

    fn lively_wing() -> WingWaveform {
        // larger deviation amplitude so every term is exercised
        WingWaveform { psi_m: 0.15, beta: 0.3, ..table_wing() }
    }

    #[test]
    fn flapping_angle_at_zero() {
        let w = table_wing();
        let a = w.euler_angles(0.0);
        assert_relative_eq!(a.phi.value, 0.7271 - 0.1977, epsilon = 1e-15);
        assert_relative_eq!(a.phi.value, 0.5294, epsilon = 1e-12);
    }

    #[test]
    fn pitch_tends_to_sine_for_small_shape() {
        let w = WingWaveform { theta_c: 1e-4, ..table_wing() };
        for k in 0..50 {
            let t = k as f64 / 50.0 * w.period();
            let expected = w.theta_m * (2.0 * PI * w.f * t + w.theta_a).sin() + w.theta_0;
            assert!((w.euler_angles(t).theta.value - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn angle_derivatives_match_finite_differences() {
        let w = lively_wing();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-7;
        for _ in 0..100 {
            let t = rng.gen_range(0.0..w.period());
            let (a, p, m) = (w.euler_angles(t), w.euler_angles(t + h), w.euler_angles(t - h));
            let pairs = [(a.phi, p.phi, m.phi), (a.theta, p.theta, m.theta), (a.psi, p.psi, m.psi)];
            for (c, p, m) in pairs {
                let rate_fd = (p.value - m.value) / (2.0 * h);
                let accel_fd = (p.rate - m.rate) / (2.0 * h);
                assert!((rate_fd - c.rate).abs() <= 1e-6 * c.rate.abs().max(1.0), "{rate_fd} vs {}", c.rate);
                assert!((accel_fd - c.accel).abs() <= 1e-6 * c.accel.abs().max(1.0), "{accel_fd} vs {}", c.accel);
            }
        }
    }

    #[test]
    fn waveforms_are_periodic_and_bounded() {
        let w = lively_wing();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let t = rng.gen_range(0.0..5.0 * w.period());
            let (a, b) = (w.euler_angles(t), w.euler_angles(t + w.period()));
            assert!((a.phi.value - b.phi.value).abs() < 1e-12);
            assert!((a.theta.value - b.theta.value).abs() < 1e-12);
            assert!((a.psi.value - b.psi.value).abs() < 1e-12);
            assert!((a.phi.value - w.phi_0).abs() <= w.phi_m.abs() + 1e-15);
            assert!((a.theta.value - w.theta_0).abs() <= w.theta_m.abs() + 1e-15);
            assert!((a.psi.value - w.psi_0).abs() <= w.psi_m.abs() + 1e-15);
        }
    }

    #[test]
    fn zero_angles_give_identity() {
        let w = WingWaveform { beta: 0.0, phi_m: 0.0, phi_0: 0.0, theta_m: 0.0, theta_0: 0.0, psi_m: 0.0, psi_0: 0.0, ..table_wing() };
        let s = w.attitude(Side::Right, 0.013);
        assert_relative_eq!(*s.q.matrix(), Mat3::identity(), epsilon = 1e-15);
        assert_eq!(s.omega, Vec3::zeros());
    }

    #[test]
    fn angular_velocity_matches_attitude_difference() {
        let w = lively_wing();
        let h = 1e-7;
        for side in [Side::Right, Side::Left] {
            for k in 0..40 {
                let t = k as f64 * w.period() / 40.0 + 1e-4;
                let s = w.attitude(side, t);
                assert!(s.q.orthogonality_error() < 1e-12);
                let (p, m) = (w.attitude(side, t + h), w.attitude(side, t - h));
                let q_dot = (p.q.matrix() - m.q.matrix()) / (2.0 * h);
                let omega_fd = vee_unchecked(&(s.q.matrix().transpose() * q_dot));
                assert!((omega_fd - s.omega).norm() < 1e-5, "{omega_fd} vs {}", s.omega);
                let alpha_fd = (p.omega - m.omega) / (2.0 * h);
                assert!((alpha_fd - s.omega_dot).norm() <= 1e-6 * s.omega_dot.norm().max(1.0));
            }
        }
    }

    #[test]
    fn left_wing_mirrors_right() {
        let w = lively_wing();
        let s = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        for k in 0..50 {
            let t = k as f64 * w.period() / 50.0;
            let (r, l) = (w.attitude(Side::Right, t), w.attitude(Side::Left, t));
            assert_relative_eq!(*l.q.matrix(), s * r.q.matrix() * s, epsilon = 1e-14);
        }
    }

    #[test]
    fn abdomen_examples() {
        let fixed = AbdomenWaveform::fixed(0.7667);
        for t in [0.0, 0.01, 0.05] {
            let s = fixed.attitude(11.3975, t);
            assert_eq!(s.q, Rotation::about_axis(1, 0.7667));
            assert_eq!(s.omega, Vec3::zeros());
        }
        // a disabled undulation ignores the amplitude
        let off = AbdomenWaveform { theta_am: 0.3, theta_aa: 1.0, theta_a0: 0.7667, undulation: false };
        assert_eq!(off.attitude(10.0, 0.02).omega, Vec3::zeros());

        let und = AbdomenWaveform { theta_am: 0.2618, theta_aa: 2.7743, theta_a0: 0.2950, undulation: true };
        assert_relative_eq!(und.pitch(11.7575, 0.0).value, 0.2618 * 2.7743f64.cos() + 0.2950, epsilon = 1e-15);
        let f = 11.7575;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let t = rng.gen_range(0.0..1.0);
            let (a, b) = (und.attitude(f, t), und.attitude(f, t + 1.0 / f));
            assert!((a.q.matrix() - b.q.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn delta_schedule_interpolates_and_vanishes_outside() {
        let mut d = DeltaSchedule::zeros(1.0, 0.1, 4);
        d.knots[1][0] = 0.2;
        d.knots[2][0] = -0.2;
        let (v, r) = d.eval(1.15);
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r[0], -4.0, epsilon = 1e-12);
        assert_eq!(d.eval(0.5).0, [0.0; N_DELTA]);
        assert_eq!(d.eval(1.6).0, [0.0; N_DELTA]);
    }

    #[test]
    fn offset_rates_are_consistent_with_values() {
        // attitude under a drifting schedule: analytic omega vs difference of attitude
        let w = lively_wing();
        let mut d = DeltaSchedule::zeros(0.0, w.period() / 10.0, 10);
        for (k, knot) in d.knots.iter_mut().enumerate().take(10).skip(1) {
            *knot = [0.05, -0.03, 0.02, 0.04, 0.01, -0.02].map(|v| v * (k as f64).sin());
        }
        let motion = PrescribedMotion::symmetric(w, AbdomenWaveform::fixed(0.3)).with_delta(d);
        let h = 1e-7;
        let t = 0.37 * w.period();
        let s = motion.eval(t);
        let (p, m) = (motion.eval(t + h), motion.eval(t - h));
        for i in 0..2 {
            let q_dot = (p.q[i].matrix() - m.q[i].matrix()) / (2.0 * h);
            let omega_fd = vee_unchecked(&(s.q[i].matrix().transpose() * q_dot));
            assert!((omega_fd - s.omega[i]).norm() < 1e-5);
            let alpha_fd = (p.omega[i] - m.omega[i]) / (2.0 * h);
            assert!((alpha_fd - s.omega_dot[i]).norm() <= 1e-5 * s.omega_dot[i].norm());
        }
    }

    #[test]
    fn validation_rejects_infeasible_flapping() {
        let w = WingWaveform { phi_m: 1.2, phi_0: 0.5, ..table_wing() };
        assert!(w.validate().is_err());
        assert!(WingWaveform { phi_k: 0.0, ..table_wing() }.validate().is_err());
        table_wing().validate().unwrap();
    }
}
