//! The three-body model: parameters, configuration, velocities, the 12x12
//! generalized inertia, kinetic energy, momentum maps and the control co-vector.
//!
//! Stacked 12-vectors always use the layout `[body 0 rotation; translation;
//! body 1 rotation; body 2 rotation]`.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::so3::{hat, orthogonality_error, Mat3, Rotation, Vec3};

pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;

/// Offset of body `i`'s angular block inside a stacked 12-vector.
#[inline]
pub const fn rot_block(i: usize) -> usize {
    match i {
        0 => 0,
        1 => 6,
        _ => 9,
    }
}

pub const TRANS_BLOCK: usize = 3;

/// Rigid-body portion of the effective inertias, i.e. the inertia the bodies
/// would have in vacuum. Only used to split momenta into body and fluid shares.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidShare {
    pub mass: [f64; 3],
    pub inertia: [Mat3; 3],
}

/// Effective (body plus added) inertias and joint offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// `M_i = m_i I + M^f_i`
    pub mass: [Mat3; 3],
    /// `J_i = J^b_i + J^f_i`
    pub inertia: [Mat3; 3],
    /// `d_01`, `d_02`: from body 0's center of mass to joints 1 and 2, body-0 frame.
    pub joint_on_center: [Vec3; 2],
    /// `d_10`, `d_20`: from body 1 (resp. 2)'s center of mass to its joint, own frame.
    pub joint_on_limb: [Vec3; 2],
    pub rigid: Option<RigidShare>,
}

impl SystemParams {
    /// `d_0i` for `i` in {1, 2}.
    #[inline]
    pub fn d0(&self, i: usize) -> &Vec3 {
        &self.joint_on_center[i - 1]
    }

    /// `d_i0` for `i` in {1, 2}.
    #[inline]
    pub fn di(&self, i: usize) -> &Vec3 {
        &self.joint_on_limb[i - 1]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            check_spd(&self.mass[i], &format!("params.M{i}"))?;
            check_spd(&self.inertia[i], &format!("params.J{i}"))?;
        }
        for (name, d) in [
            ("params.d01", &self.joint_on_center[0]),
            ("params.d02", &self.joint_on_center[1]),
            ("params.d10", &self.joint_on_limb[0]),
            ("params.d20", &self.joint_on_limb[1]),
        ] {
            if !d.iter().all(|v| v.is_finite()) {
                return Err(Error::validation(name, "non-finite entry"));
            }
        }
        if let Some(rigid) = &self.rigid {
            for i in 0..3 {
                let m = rigid.mass[i];
                if !(m > 0.0 && m.is_finite()) {
                    return Err(Error::validation(
                        format!("params.rigid.mass[{i}]"),
                        "must be positive",
                    ));
                }
                check_spd(&rigid.inertia[i], &format!("params.rigid.J{i}"))?;
            }
        }
        Ok(())
    }

    /// Parameters describing only the rigid bodies (no added inertia).
    pub fn rigid_only(&self) -> Option<SystemParams> {
        let rigid = self.rigid.as_ref()?;
        Some(SystemParams {
            mass: rigid.mass.map(|m| Mat3::identity() * m),
            inertia: rigid.inertia,
            joint_on_center: self.joint_on_center,
            joint_on_limb: self.joint_on_limb,
            rigid: None,
        })
    }
}

pub(crate) fn check_spd(m: &Mat3, field: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::validation(field, "non-finite entry"));
    }
    if (m - m.transpose()).norm() > 1e-12 * m.norm().max(1.0) {
        return Err(Error::validation(field, "matrix is not symmetric"));
    }
    if Cholesky::new(*m).is_none() {
        return Err(Error::validation(field, "matrix is not positive definite"));
    }
    Ok(())
}

/// `(R0, x, R1, R2)`; `rot[i]` maps body-`i` coordinates to the reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub rot: [Rotation; 3],
    pub x: Vec3,
}

impl Default for Configuration {
    fn default() -> Self {
        Self {
            rot: [Rotation::identity(); 3],
            x: Vec3::zeros(),
        }
    }
}

impl Configuration {
    pub fn max_orthogonality_error(&self) -> f64 {
        self.rot
            .iter()
            .map(|r| orthogonality_error(r.matrix()))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (i, r) in self.rot.iter().enumerate() {
            let m = r.matrix();
            if !m.iter().all(|v| v.is_finite())
                || orthogonality_error(m) > 1e-9
                || (m.determinant() - 1.0).abs() > 1e-9
            {
                return Err(Error::validation(
                    format!("{prefix}.R{i}"),
                    "not a rotation matrix",
                ));
            }
        }
        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!("{prefix}.x"), "non-finite entry"));
        }
        Ok(())
    }

    /// World-frame position of each body's center of mass.
    pub fn centers(&self, params: &SystemParams) -> [Vec3; 3] {
        let mut c = [self.x; 3];
        for i in 1..3 {
            c[i] = self.x + self.rot[0] * params.d0(i) - self.rot[i] * params.di(i);
        }
        c
    }
}

/// Left-trivialized velocity: body-frame angular velocities and the
/// reference-frame velocity of body 0's center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyVelocity {
    pub omega: [Vec3; 3],
    pub xdot: Vec3,
}

impl BodyVelocity {
    pub fn to_vector(&self) -> Vec12 {
        let mut v = Vec12::zeros();
        for i in 0..3 {
            v.fixed_rows_mut::<3>(rot_block(i)).copy_from(&self.omega[i]);
        }
        v.fixed_rows_mut::<3>(TRANS_BLOCK).copy_from(&self.xdot);
        v
    }

    pub fn from_vector(v: &Vec12) -> Self {
        Self {
            omega: [0, 1, 2].map(|i| v.fixed_rows::<3>(rot_block(i)).into_owned()),
            xdot: v.fixed_rows::<3>(TRANS_BLOCK).into_owned(),
        }
    }
}

/// `mu = [p_0; p_x; p_1; p_2]`. The angular blocks are body-frame, `p_x` is
/// reference-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Momentum(pub Vec12);

impl Momentum {
    pub fn angular(&self, i: usize) -> Vec3 {
        self.0.fixed_rows::<3>(rot_block(i)).into_owned()
    }

    pub fn linear(&self) -> Vec3 {
        self.0.fixed_rows::<3>(TRANS_BLOCK).into_owned()
    }
}

/// Internal joint moments, both expressed in the body-0 frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlMoment {
    pub u1: Vec3,
    pub u2: Vec3,
}

impl ControlMoment {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn norm_squared(&self) -> f64 {
        self.u1.norm_squared() + self.u2.norm_squared()
    }
}

/// Velocity of body `i`'s center of mass in its own frame.
pub fn body_velocity(
    params: &SystemParams,
    config: &Configuration,
    xi: &BodyVelocity,
    i: usize,
) -> Vec3 {
    let r0 = &config.rot[0];
    if i == 0 {
        return r0.transpose() * xi.xdot;
    }
    let ri = &config.rot[i];
    ri.transpose() * xi.xdot - ri.transpose() * (r0 * (hat(params.d0(i)) * xi.omega[0]))
        + hat(params.di(i)) * xi.omega[i]
}

/// Kinetic energy as the per-body sum of translational and rotational terms.
pub fn kinetic_energy(params: &SystemParams, config: &Configuration, xi: &BodyVelocity) -> f64 {
    (0..3)
        .map(|i| {
            let v = body_velocity(params, config, xi, i);
            let w = &xi.omega[i];
            0.5 * v.dot(&(params.mass[i] * v)) + 0.5 * w.dot(&(params.inertia[i] * w))
        })
        .sum()
}

/// The generalized inertia `I(R0, R1, R2)` with `T = xi^T I xi / 2`.
pub fn assemble_inertia(params: &SystemParams, config: &Configuration) -> Mat12 {
    let [r0, _, _] = &config.rot;
    let r0m = r0.matrix();
    let mut out = Mat12::zeros();
    let mut xx = r0m * params.mass[0] * r0m.transpose();
    let mut w0w0 = params.inertia[0];
    let mut w0x = Mat3::zeros();
    for i in 1..3 {
        let ri = config.rot[i].matrix();
        let mi = &params.mass[i];
        let d0 = hat(params.d0(i));
        let di = hat(params.di(i));
        // R0^T R_i M_i
        let coupling = r0m.transpose() * ri * mi;
        let bi = rot_block(i);

        w0w0 -= d0 * coupling * ri.transpose() * r0m * d0;
        w0x += d0 * coupling * ri.transpose();
        let w0wi = d0 * coupling * di;
        xx += ri * mi * ri.transpose();
        let xwi = ri * mi * di;
        let wiwi = params.inertia[i] - di * mi * di;
        let wiwi = (wiwi + wiwi.transpose()) * 0.5;

        out.fixed_view_mut::<3, 3>(0, bi).copy_from(&w0wi);
        out.fixed_view_mut::<3, 3>(TRANS_BLOCK, bi).copy_from(&xwi);
        out.fixed_view_mut::<3, 3>(bi, bi).copy_from(&wiwi);
        out.fixed_view_mut::<3, 3>(bi, 0).copy_from(&w0wi.transpose());
        out.fixed_view_mut::<3, 3>(bi, TRANS_BLOCK)
            .copy_from(&xwi.transpose());
    }
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&((w0w0 + w0w0.transpose()) * 0.5));
    out.fixed_view_mut::<3, 3>(TRANS_BLOCK, TRANS_BLOCK)
        .copy_from(&((xx + xx.transpose()) * 0.5));
    out.fixed_view_mut::<3, 3>(0, TRANS_BLOCK).copy_from(&w0x);
    out.fixed_view_mut::<3, 3>(TRANS_BLOCK, 0).copy_from(&w0x.transpose());
    out
}

/// Legendre transform `mu = I xi`.
pub fn momentum(params: &SystemParams, config: &Configuration, xi: &BodyVelocity) -> Momentum {
    Momentum(assemble_inertia(params, config) * xi.to_vector())
}

/// Inverse Legendre transform.
pub fn velocity_from_momentum(
    params: &SystemParams,
    config: &Configuration,
    mu: &Momentum,
) -> Result<BodyVelocity> {
    let chol = Cholesky::new(assemble_inertia(params, config)).ok_or(Error::IllConditionedInertia)?;
    Ok(BodyVelocity::from_vector(&chol.solve(&mu.0)))
}

/// Total linear and angular momentum `(p_x, x^ p_x + sum_i R_i p_i)` in the
/// reference frame.
pub fn momentum_map(config: &Configuration, mu: &Momentum) -> (Vec3, Vec3) {
    let px = mu.linear();
    let mut pw = config.x.cross(&px);
    for i in 0..3 {
        pw += config.rot[i] * mu.angular(i);
    }
    (px, pw)
}

pub fn total_momenta(
    params: &SystemParams,
    config: &Configuration,
    xi: &BodyVelocity,
) -> (Vec3, Vec3) {
    momentum_map(config, &momentum(params, config, xi))
}

/// Generalized force of the internal joint moments,
/// `U = [u1 + u2; 0; -R1^T R0 u1; -R2^T R0 u2]`.
pub fn control_covector(config: &Configuration, u: &ControlMoment) -> Vec12 {
    let r0 = &config.rot[0];
    let mut out = Vec12::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&(u.u1 + u.u2));
    for (i, ui) in [(1, &u.u1), (2, &u.u2)] {
        let body = -(config.rot[i].transpose() * (r0 * ui));
        out.fixed_rows_mut::<3>(rot_block(i)).copy_from(&body);
    }
    out
}
