//! Quasi-steady blade-element aerodynamics of the wings.
//!
//! Each wing is cut into spanwise strips. A strip's aerodynamic center sits on
//! the span axis (quarter chord) at `nu = (0, +-r, 0)` in the wing frame. The
//! air is at rest; only the velocity component normal to the span produces
//! force.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::aero_wrench;
use crate::error::{Error, Result};
use crate::kinematics::Side;
use crate::lie::{AlgebraElement, GroupElement, Vec3};
use crate::morphology::{Morphology, Planform};

pub const DEFAULT_AIR_DENSITY: f64 = 1.225;
pub const DEFAULT_STRIPS: usize = 40;

/// Lift or drag coefficient as a function of the angle of attack in
/// `[0, pi/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientCurve {
    /// `0.225 + 1.58 sin(2.13 a - 7.20 deg)`
    RevolvingWingLift,
    /// `1.92 - 1.55 cos(2.04 a - 9.82 deg)`
    RevolvingWingDrag,
    /// Linear interpolation in a table of `(angle rad, coefficient)`,
    /// clamped at the ends.
    Table(Vec<(f64, f64)>),
}

impl CoefficientCurve {
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            CoefficientCurve::RevolvingWingLift => 0.225 + 1.58 * (2.13 * alpha - 7.20f64.to_radians()).sin(),
            CoefficientCurve::RevolvingWingDrag => 1.92 - 1.55 * (2.04 * alpha - 9.82f64.to_radians()).cos(),
            CoefficientCurve::Table(rows) => {
                let k = rows.partition_point(|&(a, _)| a <= alpha);
                if k == 0 {
                    rows[0].1
                } else if k == rows.len() {
                    rows[k - 1].1
                } else {
                    let ((a0, c0), (a1, c1)) = (rows[k - 1], rows[k]);
                    c0 + (c1 - c0) * (alpha - a0) / (a1 - a0)
                }
            }
        }
    }

    /// Reads a two-column text table: angle of attack in degrees, then the
    /// coefficient. Blank lines and lines starting with `#` are skipped.
    pub fn load_table(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })
    }

    pub fn parse_table(text: &str) -> std::result::Result<Self, String> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(format!("line {}: expected two columns", n + 1));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
            rows.push((parse(cols[0])?.to_radians(), parse(cols[1])?));
        }
        if rows.len() < 2 {
            return Err("table needs at least two rows".into());
        }
        if !rows.windows(2).all(|w| w[1].0 > w[0].0) {
            return Err("angles must be strictly increasing".into());
        }
        Ok(CoefficientCurve::Table(rows))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeroModel {
    /// Air density (kg/m^3).
    pub rho: f64,
    pub lift: CoefficientCurve,
    pub drag: CoefficientCurve,
    /// Adds the pitch-rate circulation force normal to the wing.
    pub rotational: bool,
    pub n_strips: usize,
}

impl Default for AeroModel {
    fn default() -> Self {
        AeroModel {
            rho: DEFAULT_AIR_DENSITY,
            lift: CoefficientCurve::RevolvingWingLift,
            drag: CoefficientCurve::RevolvingWingDrag,
            rotational: false,
            n_strips: DEFAULT_STRIPS,
        }
    }
}

impl AeroModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || self.n_strips == 0 {
            return Err(Error::Validation("rho >= 0 and n_strips >= 1".into()));
        }
        let n = 200;
        for k in 0..=n {
            let a = FRAC_PI_2 * k as f64 / n as f64;
            if !(self.drag.eval(a) >= 0.0) || !self.lift.eval(a).is_finite() {
                return Err(Error::Validation("drag coefficient >= 0 on [0, pi/2]".into()));
            }
        }
        Ok(())
    }
}

/// One spanwise strip of a wing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BladeStrip {
    /// Spanwise station of the strip center (m).
    pub r: f64,
    /// Mean chord over the strip (m).
    pub c: f64,
    /// Strip width (m).
    pub dr: f64,
    /// Strip area (m^2), exact for the piecewise-linear outline.
    pub d_a: f64,
}

/// Uniform strips whose areas add up to the planform area.
pub fn blade_strips(planform: &Planform, n: usize) -> Vec<BladeStrip> {
    let dr = planform.span / n as f64;
    (0..n)
        .map(|k| {
            let (a, b) = (k as f64 * dr, (k + 1) as f64 * dr);
            // integrate the piecewise-linear chord over [a, b]
            let mut cuts: Vec<f64> = planform
                .stations
                .iter()
                .map(|s| s * planform.span)
                .filter(|&r| r > a && r < b)
                .collect();
            cuts.insert(0, a);
            cuts.push(b);
            let d_a: f64 = cuts.windows(2).map(|w| 0.5 * (planform.chord_at(w[0]) + planform.chord_at(w[1])) * (w[1] - w[0])).sum();
            BladeStrip { r: 0.5 * (a + b), c: d_a / dr, dr, d_a }
        })
        .collect()
}

/// Force and moment about the root contributed by one wing, both in the wing
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WingLoads {
    pub force: Vec3,
    pub moment: Vec3,
    /// Power of the drag components against the local flow; never positive.
    pub drag_power: f64,
}

/// Loads on one wing, building the strips from the planform.
pub fn wing_aero(model: &AeroModel, morph: &Morphology, g: &GroupElement, xi: &AlgebraElement, side: Side) -> WingLoads {
    let strips = blade_strips(&morph.planform, model.n_strips);
    wing_aero_with(model, &strips, morph, g, xi, side)
}

pub fn wing_aero_with(
    model: &AeroModel,
    strips: &[BladeStrip],
    morph: &Morphology,
    g: &GroupElement,
    xi: &AlgebraElement,
    side: Side,
) -> WingLoads {
    let (i, sign) = match side {
        Side::Right => (0, 1.0),
        Side::Left => (1, -1.0),
    };
    let p = &morph.appendages[i];
    let q = &g.q[i];
    let qt = q.transpose();
    // velocity of the wing root and body rotation, in the wing frame
    let v_root = qt * (g.r.transpose() * xi.v + xi.w.cross(&p.joint_offset));
    let w_body = qt * xi.w;
    // total angular velocity of the wing frame
    let w = w_body + xi.w_app[i];

    let mut out = WingLoads::default();
    for s in strips {
        let nu = Vec3::new(0.0, sign * s.r, 0.0);
        let v = v_root + w.cross(&nu);
        let (vx, vz) = (v.x, v.z);
        let speed2 = vx * vx + vz * vz;
        if speed2 == 0.0 {
            continue;
        }
        let speed = speed2.sqrt();
        let alpha = vz.abs().atan2(vx.abs());
        let q_dyn = 0.5 * model.rho * speed2 * s.d_a;
        let drag_dir = Vec3::new(-vx, 0.0, -vz) / speed;
        // perpendicular to the flow, opposing the normal velocity component
        let lift_sign = if vx * vz >= 0.0 { 1.0 } else { -1.0 };
        let lift_dir = Vec3::new(vz, 0.0, -vx) * (lift_sign / speed);
        let drag = drag_dir * (q_dyn * model.drag.eval(alpha));
        let mut df = drag + lift_dir * (q_dyn * model.lift.eval(alpha));
        if model.rotational {
            let c_rot = std::f64::consts::PI * 0.5;
            let sgn = if vx >= 0.0 { 1.0 } else { -1.0 };
            df.z -= sgn * c_rot * model.rho * w.y * speed * s.c * s.d_a;
        }
        out.force += df;
        out.moment += nu.cross(&df);
        out.drag_power += drag.dot(&v);
    }
    out
}

/// Aerodynamic generalized force. The abdomen carries no aerodynamic load.
pub fn total_aero_wrench(model: &AeroModel, morph: &Morphology, g: &GroupElement, xi: &AlgebraElement) -> AlgebraElement {
    let strips = blade_strips(&morph.planform, model.n_strips);
    total_aero_wrench_with(model, &strips, morph, g, xi).0
}

/// Generalized force together with the per-appendage forces and moments.
pub fn total_aero_wrench_with(
    model: &AeroModel,
    strips: &[BladeStrip],
    morph: &Morphology,
    g: &GroupElement,
    xi: &AlgebraElement,
) -> (AlgebraElement, [Vec3; 3], [Vec3; 3]) {
    let r = wing_aero_with(model, strips, morph, g, xi, Side::Right);
    let l = wing_aero_with(model, strips, morph, g, xi, Side::Left);
    let forces = [r.force, l.force, Vec3::zeros()];
    let moments = [r.moment, l.moment, Vec3::zeros()];
    (aero_wrench(morph, g, &forces, &moments), forces, moments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{AbdomenWaveform, PrescribedMotion, WingWaveform};
    use crate::lie::Rotation;
    use approx::assert_relative_eq;

    fn wing() -> WingWaveform {
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

    fn state_at(motion: &PrescribedMotion, t: f64, r: Rotation, v: Vec3, w: Vec3) -> (GroupElement, AlgebraElement) {
        let k = motion.eval(t);
        (GroupElement { x: Vec3::zeros(), r, q: k.q }, AlgebraElement { v, w, w_app: k.omega })
    }

    #[test]
    fn strips_cover_the_planform() {
        let m = Morphology::default();
        for n in [1, 7, 40, 400] {
            let s = blade_strips(&m.planform, n);
            let total: f64 = s.iter().map(|s| s.d_a).sum();
            assert_relative_eq!(total, m.planform.area(), max_relative = 1e-12);
            assert!(s.iter().all(|s| s.r >= 0.0 && s.r <= m.planform.span && s.c > 0.0));
        }
    }

    #[test]
    fn no_motion_no_load() {
        let m = Morphology::default();
        let g = GroupElement::identity();
        let l = wing_aero(&AeroModel::default(), &m, &g, &AlgebraElement::zero(), Side::Right);
        assert_eq!(l.force, Vec3::zeros());
        assert_eq!(l.moment, Vec3::zeros());
    }

    #[test]
    fn loads_scale_with_square_of_rate() {
        let m = Morphology::default();
        let model = AeroModel::default();
        let g = GroupElement { q: [Rotation::about_axis(1, 0.3); 3], ..GroupElement::identity() };
        let at = |rate: f64| {
            let xi = AlgebraElement { w_app: [Vec3::new(rate, 0.0, 0.0), Vec3::new(-rate, 0.0, 0.0), Vec3::zeros()], ..AlgebraElement::zero() };
            wing_aero(&model, &m, &g, &xi, Side::Right)
        };
        let (a, b) = (at(40.0), at(80.0));
        assert!(a.force.norm() > 0.0);
        assert_relative_eq!(b.force, a.force * 4.0, max_relative = 1e-12);
        assert_relative_eq!(b.moment, a.moment * 4.0, max_relative = 1e-12);
    }

    #[test]
    fn strip_refinement_converges() {
        let m = Morphology::default();
        let motion = PrescribedMotion::symmetric(wing(), AbdomenWaveform::fixed(0.3));
        let coarse = AeroModel { n_strips: 50, ..AeroModel::default() };
        let fine = AeroModel { n_strips: 400, ..AeroModel::default() };
        let r = Rotation::about_axis(1, 0.7);
        for k in 0..40 {
            let t = motion.period() * (k as f64 + 0.5) / 40.0;
            let (g, xi) = state_at(&motion, t, r, Vec3::new(-0.2, 0.0, -0.08), Vec3::new(0.0, -2.0, 0.0));
            let a = wing_aero(&coarse, &m, &g, &xi, Side::Right).force.norm();
            let b = wing_aero(&fine, &m, &g, &xi, Side::Right).force.norm();
            assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn symmetric_motion_gives_longitudinal_wrench() {
        let m = Morphology::default();
        let motion = PrescribedMotion::symmetric(wing(), AbdomenWaveform::fixed(0.3));
        for rotational in [false, true] {
            let model = AeroModel { rotational, ..AeroModel::default() };
            for k in 0..50 {
                let t = motion.period() * k as f64 / 50.0;
                let (g, xi) = state_at(&motion, t, Rotation::about_axis(1, 0.7), Vec3::new(-0.2, 0.0, -0.08), Vec3::new(0.0, -2.0, 0.0));
                let f = total_aero_wrench(&model, &m, &g, &xi);
                let scale = f.v.norm().max(1e-12);
                assert!(f.v.y.abs() < 1e-10 * scale.max(1.0));
                assert!(f.w.x.abs() < 1e-10 && f.w.z.abs() < 1e-10);
                assert_eq!(f.w_app[2], Vec3::zeros());
            }
        }
    }

    #[test]
    fn drag_never_adds_energy() {
        let m = Morphology::default();
        let motion = PrescribedMotion::symmetric(wing(), AbdomenWaveform::fixed(0.3));
        for k in 0..100 {
            let t = motion.period() * k as f64 / 100.0;
            let (g, xi) = state_at(&motion, t, Rotation::about_axis(1, 0.5), Vec3::new(0.3, 0.1, -0.2), Vec3::new(0.5, -1.0, 0.2));
            for side in [Side::Right, Side::Left] {
                assert!(wing_aero(&AeroModel::default(), &m, &g, &xi, side).drag_power <= 0.0);
            }
        }
    }

    #[test]
    fn default_curves_at_reference_angles() {
        let lift = CoefficientCurve::RevolvingWingLift;
        let drag = CoefficientCurve::RevolvingWingDrag;
        assert_relative_eq!(lift.eval(0.0), 0.225 - 1.58 * 7.2f64.to_radians().sin(), epsilon = 1e-14);
        assert_relative_eq!(drag.eval(FRAC_PI_2), 1.92 - 1.55 * (2.04 * FRAC_PI_2 - 9.82f64.to_radians()).cos(), epsilon = 1e-14);
        AeroModel::default().validate().unwrap();
    }

    #[test]
    fn tables_interpolate_in_degrees() {
        let c = CoefficientCurve::parse_table("# alpha  C\n0 0.0\n45, 1.0\n90 0.5\n").unwrap();
        assert_relative_eq!(c.eval(22.5f64.to_radians()), 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.eval(2.0), 0.5, epsilon = 1e-12);
        assert!(CoefficientCurve::parse_table("0 1 2\n").is_err());
        assert!(CoefficientCurve::parse_table("10 1\n5 2\n").is_err());
    }
}
