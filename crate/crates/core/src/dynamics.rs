//! Configuration-dependent inertia, its left-trivialized derivative and the
//! generalized forces of the articulated vehicle.
//!
//! All 15-dimensional quantities use the block order
//! `(xdot, Omega, Omega_R, Omega_L, Omega_A)`. Entries are kept in SI base
//! units, so a single 15x15 matrix mixes kg, kg m and kg m^2 blocks.

use nalgebra::{SMatrix, SVector};

use crate::lie::{ad_star, hat, AlgebraElement, GroupElement, Mat15, Mat3, Rotation, Vec15, Vec3};
use crate::morphology::{AppendageParams, Morphology};

pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat69 = SMatrix<f64, 6, 9>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec9 = SVector<f64, 9>;

pub const DEFAULT_GRAVITY: f64 = 9.81;

const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

fn put(m: &mut Mat9, bi: usize, bj: usize, block: &Mat3) {
    m.fixed_view_mut::<3, 3>(3 * bi, 3 * bj).copy_from(block);
}

fn put15(m: &mut Mat15, bi: usize, bj: usize, block: &Mat3) {
    m.fixed_view_mut::<3, 3>(3 * bi, 3 * bj).copy_from(block);
}

fn add15(m: &mut Mat15, bi: usize, bj: usize, block: &Mat3) {
    let mut view = m.fixed_view_mut::<3, 3>(3 * bi, 3 * bj);
    view += block;
}

fn block9(m: &Mat9, bi: usize, bj: usize) -> Mat3 {
    m.fixed_view::<3, 3>(3 * bi, 3 * bj).into_owned()
}

/// Kinetic-energy metric of one appendage in the coordinates
/// `(xdot, Omega, Omega_i)`.
pub fn appendage_inertia(p: &AppendageParams, r: &Rotation, q: &Rotation) -> Mat9 {
    let (r, q) = (r.matrix(), q.matrix());
    let m = p.mass;
    let mu_hat = hat(&p.joint_offset);
    let qnu_hat = hat(&(q * p.com_offset));
    let nu_hat = hat(&p.com_offset);
    let a_hat = mu_hat + qnu_hat;

    let b11 = Mat3::identity() * m;
    let b12 = -r * a_hat * m;
    let b13 = -r * q * nu_hat * m;
    let b22 = mu_hat.transpose() * mu_hat * m
        + q * p.inertia * q.transpose()
        + (mu_hat.transpose() * qnu_hat + qnu_hat.transpose() * mu_hat) * m;
    let b23 = q * p.inertia + mu_hat.transpose() * q * nu_hat * m;
    let b33 = p.inertia;

    let mut out = Mat9::zeros();
    put(&mut out, 0, 0, &b11);
    put(&mut out, 0, 1, &b12);
    put(&mut out, 0, 2, &b13);
    put(&mut out, 1, 0, &b12.transpose());
    put(&mut out, 1, 1, &b22);
    put(&mut out, 1, 2, &b23);
    put(&mut out, 2, 0, &b13.transpose());
    put(&mut out, 2, 1, &b23.transpose());
    put(&mut out, 2, 2, &b33);
    out
}

/// Full 15x15 inertia tensor `J_g`.
pub fn assemble_jg(morph: &Morphology, g: &GroupElement) -> Mat15 {
    let mut out = Mat15::zeros();
    put15(&mut out, 0, 0, &(Mat3::identity() * morph.body.mass));
    put15(&mut out, 1, 1, &morph.body.inertia);
    for (i, p) in morph.appendages.iter().enumerate() {
        let ji = appendage_inertia(p, &g.r, &g.q[i]);
        let k = 2 + i;
        add15(&mut out, 0, 0, &block9(&ji, 0, 0));
        add15(&mut out, 0, 1, &block9(&ji, 0, 1));
        add15(&mut out, 1, 0, &block9(&ji, 1, 0));
        add15(&mut out, 1, 1, &block9(&ji, 1, 1));
        put15(&mut out, 0, k, &block9(&ji, 0, 2));
        put15(&mut out, k, 0, &block9(&ji, 2, 0));
        put15(&mut out, 1, k, &block9(&ji, 1, 2));
        put15(&mut out, k, 1, &block9(&ji, 2, 1));
        put15(&mut out, k, k, &block9(&ji, 2, 2));
    }
    out
}

/// Left-trivialized derivative of one appendage's `J_i(R, Q_i) [xdot, Omega, Omega_i]`
/// with respect to `(x, R, Q_i)`.
pub fn appendage_kg(p: &AppendageParams, r: &Rotation, q: &Rotation, xdot: &Vec3, omega: &Vec3, omega_i: &Vec3) -> Mat9 {
    let (r, q) = (r.matrix(), q.matrix());
    let m = p.mass;
    let j = &p.inertia;
    let mu = &p.joint_offset;
    let mu_hat = hat(mu);
    let nu_hat = hat(&p.com_offset);
    let a_hat = mu_hat + hat(&(q * p.com_offset));
    let u = r.transpose() * xdot;
    let u_hat = hat(&u);
    let om_hat = hat(omega);
    let nu_om_i = nu_hat * omega_i;
    let q_t_omega = q.transpose() * omega;

    let k12 = r * hat(&(a_hat * omega + q * nu_om_i)) * m;
    let k13 = r * (-om_hat * q * nu_hat + q * hat(&nu_om_i)) * m;
    let k22 = a_hat * u_hat * m;
    let k23 = u_hat * q * nu_hat * m - q * hat(&(j * q_t_omega)) + q * j * hat(&q_t_omega)
        - mu_hat * om_hat * q * nu_hat * m
        - hat(&(mu_hat * omega)) * q * nu_hat * m
        - q * hat(&(j * omega_i))
        + mu_hat * q * hat(&nu_om_i) * m;
    let k32 = nu_hat * q.transpose() * u_hat * m;
    let k33 = nu_hat * hat(&(q.transpose() * u)) * m + j * hat(&q_t_omega)
        - nu_hat * hat(&(q.transpose() * mu_hat * omega)) * m;

    let mut out = Mat9::zeros();
    put(&mut out, 0, 1, &k12);
    put(&mut out, 0, 2, &k13);
    put(&mut out, 1, 1, &k22);
    put(&mut out, 1, 2, &k23);
    put(&mut out, 2, 1, &k32);
    put(&mut out, 2, 2, &k33);
    out
}

/// Full 15x15 derivative `K_g(xi)`, so that `K_g(xi) chi` is the derivative
/// of `J_g xi` along `g exp(eps chi)`.
pub fn assemble_kg(morph: &Morphology, g: &GroupElement, xi: &AlgebraElement) -> Mat15 {
    let mut out = Mat15::zeros();
    for (i, p) in morph.appendages.iter().enumerate() {
        let ki = appendage_kg(p, &g.r, &g.q[i], &xi.v, &xi.w, &xi.w_app[i]);
        let k = 2 + i;
        add15(&mut out, 0, 1, &block9(&ki, 0, 1));
        add15(&mut out, 1, 1, &block9(&ki, 1, 1));
        put15(&mut out, 0, k, &block9(&ki, 0, 2));
        put15(&mut out, 1, k, &block9(&ki, 1, 2));
        put15(&mut out, k, 1, &block9(&ki, 2, 1));
        put15(&mut out, k, k, &block9(&ki, 2, 2));
    }
    out
}

/// `L_g = K_g - K_g^T / 2`.
pub fn assemble_lg(kg: &Mat15) -> Mat15 {
    kg - kg.transpose() * 0.5
}

pub fn kinetic_energy(morph: &Morphology, g: &GroupElement, xi: &AlgebraElement) -> f64 {
    let v = xi.to_vector();
    0.5 * v.dot(&(assemble_jg(morph, g) * v))
}

/// Gravitational potential in the NED frame (`+z` points down).
pub fn potential_energy(morph: &Morphology, g: &GroupElement, grav: f64) -> f64 {
    let mut u = -morph.body.mass * grav * E3.dot(&g.x);
    for (i, p) in morph.appendages.iter().enumerate() {
        let pos = g.x + g.r * (p.joint_offset + g.q[i] * p.com_offset);
        u -= p.mass * grav * E3.dot(&pos);
    }
    u
}

/// `f_g = -T_e^* L_g D_g U`.
pub fn gravity_wrench(morph: &Morphology, g: &GroupElement, grav: f64) -> AlgebraElement {
    let down_body = g.r.matrix().transpose() * E3;
    let mut out = AlgebraElement { v: E3 * (morph.total_mass() * grav), ..Default::default() };
    for (i, p) in morph.appendages.iter().enumerate() {
        let q = g.q[i].matrix();
        out.w += hat(&(p.joint_offset + q * p.com_offset)) * down_body * (p.mass * grav);
        out.w_app[i] = hat(&p.com_offset) * (q.transpose() * down_body) * (p.mass * grav);
    }
    out
}

/// Generalized force of aerodynamic forces `F_i` and moments `M_i` about the
/// joints, both resolved in the appendage frames.
pub fn aero_wrench(morph: &Morphology, g: &GroupElement, forces: &[Vec3; 3], moments: &[Vec3; 3]) -> AlgebraElement {
    let mut out = AlgebraElement { w_app: *moments, ..Default::default() };
    for (i, p) in morph.appendages.iter().enumerate() {
        let qf = g.q[i] * forces[i];
        out.v += g.r * qf;
        out.w += p.joint_offset.cross(&qf);
    }
    out
}

/// Generalized force of joint torques `tau_i` resolved in the body frame,
/// including the reaction on the body.
pub fn torque_wrench(g: &GroupElement, tau: &[Vec3; 3]) -> AlgebraElement {
    AlgebraElement {
        v: Vec3::zeros(),
        w: -(tau[0] + tau[1] + tau[2]),
        w_app: [
            g.q[0].transpose() * tau[0],
            g.q[1].transpose() * tau[1],
            g.q[2].transpose() * tau[2],
        ],
    }
}

/// Coupling `f_tau1 = C f_tau2` between the free and prescribed blocks.
pub fn c_matrix(g: &GroupElement) -> Mat69 {
    let mut c = Mat69::zeros();
    for i in 0..3 {
        c.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&(-g.q[i].matrix()));
    }
    c
}

/// Everything in the equations of motion that depends only on `(g, xi)`.
#[derive(Debug, Clone)]
pub struct EomTerms {
    pub jg: Mat15,
    pub kg: Mat15,
    /// `ad*_xi J_g xi - L_g xi`, the velocity-dependent part moved to the
    /// right-hand side.
    pub bias: Vec15,
}

impl EomTerms {
    pub fn new(morph: &Morphology, g: &GroupElement, xi: &AlgebraElement) -> Self {
        let jg = assemble_jg(morph, g);
        let kg = assemble_kg(morph, g, xi);
        let v = xi.to_vector();
        let bias = ad_star(xi) * (jg * v) - assemble_lg(&kg) * v;
        EomTerms { jg, kg, bias }
    }

    /// Solves `J_g xi_dot = bias + force` for the unconstrained system.
    pub fn acceleration(&self, force: &Vec15) -> Vec15 {
        let rhs = self.bias + force;
        self.jg.cholesky().expect("inertia tensor is positive definite").solve(&rhs)
    }

    /// Left-hand side minus right-hand side of the equations of motion.
    pub fn residual(&self, xi_dot: &Vec15, force: &Vec15) -> Vec15 {
        self.jg * xi_dot - self.bias - force
    }
}
