//! Rotation-group and product-group primitives.
//!
//! The configuration space is `R^3 x SO(3)^4`: body position, body attitude
//! and the three appendage attitudes relative to the body. Velocities are
//! left-trivialized, so every angular velocity is resolved in its own frame.

use std::ops::{Index, Mul};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec15 = SVector<f64, 15>;
pub type Mat15 = SMatrix<f64, 15, 15>;

/// Tolerance used by [`Rotation::check`] and [`vee`].
pub const ORTHO_TOL: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;

/// `hat(u) * y == u.cross(y)`.
#[rustfmt::skip]
pub fn hat(u: &Vec3) -> Mat3 {
    Mat3::new(
         0.0, -u.z,  u.y,
         u.z,  0.0, -u.x,
        -u.y,  u.x,  0.0,
    )
}

/// Inverse of [`hat`]. Fails on matrices that are not skew-symmetric.
pub fn vee(a: &Mat3) -> Result<Vec3> {
    let asym = (a + a.transpose()).norm();
    if asym >= ORTHO_TOL {
        return Err(Error::InvalidArgument(format!(
            "vee of a non-skew matrix (|A + A^T| = {asym:.3e})"
        )));
    }
    Ok(vee_unchecked(a))
}

/// [`vee`] without the skew check; reads the lower-triangle entries.
pub fn vee_unchecked(a: &Mat3) -> Vec3 {
    Vec3::new(a[(2, 1)], a[(0, 2)], a[(1, 0)])
}

/// An element of SO(3) stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix after checking orthonormality and orientation.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let r = Rotation(m);
        r.check()?;
        Ok(r)
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Rotation by `angle` about the standard basis axis `axis` (0, 1, 2).
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let mut u = Vec3::zeros();
        u[axis] = angle;
        exp_so3(&u)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `|R^T R - I|_F`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn check(&self) -> Result<()> {
        if !self.0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("rotation has non-finite entries".into()));
        }
        let ortho = self.orthogonality_error();
        let det = self.0.determinant();
        if ortho >= ORTHO_TOL || (det - 1.0).abs() >= ORTHO_TOL {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: |R^T R - I| = {ortho:.3e}, det = {det}"
            )));
        }
        Ok(())
    }

    /// Closest rotation in the Frobenius sense (polar factor).
    pub fn project(m: &Mat3) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Mat3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Rotation(u * d * v_t)
    }

    /// Geodesic angle between two rotations. The `atan2` form keeps full
    /// precision near zero, where `arccos` of the trace does not.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let m = self.0.transpose() * other.0;
        let c = (m.trace() - 1.0) / 2.0;
        let s = 0.5 * vee_unchecked(&(m - m.transpose())).norm();
        s.atan2(c)
    }
}

impl Index<(usize, usize)> for Rotation {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Exponential map `R^3 -> SO(3)` (Rodrigues form).
pub fn exp_so3(u: &Vec3) -> Rotation {
    let theta_sq = u.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        // sin(t)/t and (1 - cos t)/t^2 to second order
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    let k = hat(u);
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Logarithm `SO(3) -> R^3` with rotation angle in `[0, pi]`.
pub fn log_so3(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    if theta < 1e-6 {
        return skew * (0.5 + theta * theta / 12.0);
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // axis from the symmetric part: R = I + 2 n n^T - ... near pi
        let b = (m + Mat3::identity()) * 0.5;
        let col = (0..3)
            .max_by(|&i, &j| b[(i, i)].partial_cmp(&b[(j, j)]).unwrap())
            .unwrap();
        let mut n = b.column(col).into_owned();
        n /= n.norm();
        if n.dot(&skew) < 0.0 {
            n = -n;
        }
        return n * theta;
    }
    skew * (theta / (2.0 * theta.sin()))
}

/// Geometric attitude update `R * exp(h w)`.
pub fn attitude_step(r: &Rotation, w: &Vec3, h: f64) -> Rotation {
    let next = *r * exp_so3(&(w * h));
    renormalize(next)
}

/// Polar re-projection, applied only when drift exceeds [`ORTHO_TOL`].
pub fn renormalize(r: Rotation) -> Rotation {
    let drift = r.orthogonality_error();
    if drift > ORTHO_TOL {
        log::debug!("re-orthonormalizing attitude, drift {drift:.3e}");
        Rotation::project(r.matrix())
    } else {
        r
    }
}

/// Inverse right Jacobian of SO(3).
///
/// If `R(t) = R0 exp(theta(t))` and `R^T dR/dt = hat(w)` then
/// `dtheta/dt = right_jacobian_inv(theta) * w`.
pub fn right_jacobian_inv(theta: &Vec3) -> Mat3 {
    let t_sq = theta.norm_squared();
    let t = t_sq.sqrt();
    let k = hat(theta);
    let c = if t < 1e-4 {
        1.0 / 12.0 + t_sq / 720.0
    } else {
        1.0 / t_sq - (1.0 + t.cos()) / (2.0 * t * t.sin())
    };
    Mat3::identity() + k * 0.5 + k * k * c
}

/// Configuration `g = (x, R, Q_R, Q_L, Q_A)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    /// Body position in the inertial NED frame (m).
    pub x: Vec3,
    /// Body attitude.
    pub r: Rotation,
    /// Right wing, left wing, abdomen attitudes relative to the body.
    pub q: [Rotation; 3],
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement {
            x: Vec3::zeros(),
            r: Rotation::identity(),
            q: [Rotation::identity(); 3],
        }
    }

    pub fn check(&self) -> Result<()> {
        self.r.check()?;
        self.q.iter().try_for_each(|q| q.check())
    }

    /// Right multiplication by `exp(chi)` on each factor.
    pub fn retract(&self, chi: &AlgebraElement) -> GroupElement {
        GroupElement {
            x: self.x + chi.v,
            r: self.r * exp_so3(&chi.w),
            q: [
                self.q[0] * exp_so3(&chi.w_app[0]),
                self.q[1] * exp_so3(&chi.w_app[1]),
                self.q[2] * exp_so3(&chi.w_app[2]),
            ],
        }
    }
}

/// Left-trivialized velocity `(xdot, Omega, Omega_R, Omega_L, Omega_A)`.
///
/// The same layout is used for covectors (generalized forces).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlgebraElement {
    pub v: Vec3,
    pub w: Vec3,
    pub w_app: [Vec3; 3],
}

impl AlgebraElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vec15 {
        let mut out = Vec15::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.v);
        out.fixed_rows_mut::<3>(3).copy_from(&self.w);
        for (i, w) in self.w_app.iter().enumerate() {
            out.fixed_rows_mut::<3>(6 + 3 * i).copy_from(w);
        }
        out
    }

    pub fn from_vector(v: &Vec15) -> Self {
        let block = |k: usize| v.fixed_rows::<3>(3 * k).into_owned();
        AlgebraElement {
            v: block(0),
            w: block(1),
            w_app: [block(2), block(3), block(4)],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &AlgebraElement) -> f64 {
        self.to_vector().dot(&other.to_vector())
    }
}

/// Co-adjoint operator `diag[0, -hat(Omega), -hat(Omega_R), -hat(Omega_L), -hat(Omega_A)]`.
pub fn ad_star(xi: &AlgebraElement) -> Mat15 {
    let mut out = Mat15::zeros();
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-hat(&xi.w)));
    for (i, w) in xi.w_app.iter().enumerate() {
        let k = 6 + 3 * i;
        out.fixed_view_mut::<3, 3>(k, k).copy_from(&(-hat(w)));
    }
    out
}
