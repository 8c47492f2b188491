//! SO(3) primitives: hat/vee, exponential and logarithm, and a Newton solver
//! for the implicit rotation equations of the discrete Euler-Lagrange step.
//!
//! Every rotation produced here is built from `exp_so3` (or products of such
//! rotations), so orthogonality is structural. The only projection in the
//! crate is [`polar_project`], which the explicit reference integrator uses.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Rotation = Rotation3<f64>;

/// Below this angle `exp_so3` and `log_so3` switch to truncated series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Within this distance of pi, `log_so3` reads the axis off the symmetric part.
pub const NEAR_PI: f64 = 1e-6;

const SKEW_TOL: f64 = 1e-10;

/// Cross-product matrix: `hat(v) * w == v.cross(&w)`.
#[inline]
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices that are not skew-symmetric.
pub fn vee(s: &Mat3) -> Result<Vec3> {
    let asymmetry = (s + s.transpose()).norm();
    if !(asymmetry <= SKEW_TOL) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `(A - A^T)^vee` without forming the difference.
#[inline]
pub(crate) fn skew_vee(a: &Mat3) -> Vec3 {
    Vec3::new(
        a[(2, 1)] - a[(1, 2)],
        a[(0, 2)] - a[(2, 0)],
        a[(1, 0)] - a[(0, 1)],
    )
}

/// Rodrigues formula.
pub fn exp_so3(v: &Vec3) -> Rotation {
    Rotation::from_matrix_unchecked(Mat3::identity() + expm1_so3(v))
}

/// `exp(v^) - I`, formed without the identity so that small rotations keep
/// full relative precision.
pub fn expm1_so3(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let k = hat(v);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        // (1 - cos)/theta^2 without the cancellation at small angles
        let half = 0.5 * theta;
        let sinc_half = half.sin() / half;
        (theta.sin() / theta, 0.5 * sinc_half * sinc_half)
    };
    k * a + k * k * b
}

/// Principal logarithm, returning the rotation vector with angle in `[0, pi]`.
///
/// Within [`NEAR_PI`] of a half turn the axis is taken from the symmetric
/// part, using the column with the largest diagonal entry, and its sign is
/// fixed so that the largest-magnitude component is positive.
pub fn log_so3(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let skew = skew_vee(m) * 0.5; // sin(theta) * axis
    if theta < SMALL_ANGLE {
        return skew * (1.0 + theta * theta / 6.0);
    }
    if theta < std::f64::consts::FRAC_PI_2 {
        return skew * (theta / theta.sin());
    }
    // (R + R^T)/2 - cos I = (1 - cos) a a^T
    let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * cos;
    let j = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap_or(0);
    let mut axis: Vec3 = sym.column(j).into_owned();
    axis /= axis.norm();
    if std::f64::consts::PI - theta < NEAR_PI {
        let k = axis.iamax();
        if axis[k] < 0.0 {
            axis = -axis;
        }
    } else if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// `|R^T R - I|_F`
pub fn orthogonality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).norm()
}

/// Nearest rotation in the Frobenius sense (polar factor).
pub fn polar_project(m: &Mat3) -> Rotation {
    let svd = m.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Rotation::identity();
    };
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Rotation::from_matrix_unchecked(u * d * vt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// Newton iteration on SO(3) in exponential coordinates.
///
/// `residual` evaluates the 3-vector equation at a rotation; `jacobian`
/// returns its derivative along `F -> F exp(hat(phi))` at `phi = 0`.
pub fn newton_so3<R, J>(
    mut residual: R,
    mut jacobian: J,
    guess: Rotation,
    opts: &NewtonOptions,
) -> Result<Rotation>
where
    R: FnMut(&Rotation) -> Vec3,
    J: FnMut(&Rotation) -> Mat3,
{
    let mut f = guess;
    let mut r = residual(&f);
    for _ in 0..opts.max_iter {
        if r.norm() <= opts.tol {
            return Ok(f);
        }
        let step = jacobian(&f)
            .lu()
            .solve(&(-r))
            .ok_or(Error::SingularJacobian)?;
        f *= exp_so3(&step);
        r = residual(&f);
    }
    if r.norm() <= opts.tol {
        return Ok(f);
    }
    Err(Error::NewtonDiverged {
        iterations: opts.max_iter,
        residual: r.norm(),
    })
}

/// Solves `(F J_d - J_d F^T)^vee = b` for `F` in SO(3).
///
/// This is the single-body core of the implicit update; with `J_d = tr(J)/2 I - J`
/// the linearization at `F = I` is `J phi = b`.
pub fn solve_implicit_rotation(
    j_d: &Mat3,
    b: &Vec3,
    guess: Option<Rotation>,
    opts: &NewtonOptions,
) -> Result<Rotation> {
    let residual = |f: &Rotation| skew_vee(&(f.matrix() * j_d)) - b;
    let jacobian = |f: &Rotation| implicit_rotation_jacobian(j_d, f);
    newton_so3(residual, jacobian, guess.unwrap_or_else(Rotation::identity), opts)
}

/// Derivative of `(F J_d - J_d F^T)^vee` along `F exp(hat(phi))`:
/// column `k` is `(F e_k^ J_d + J_d e_k^ F^T)^vee`.
pub(crate) fn implicit_rotation_jacobian(j_d: &Mat3, f: &Rotation) -> Mat3 {
    let mut jac = Mat3::zeros();
    for k in 0..3 {
        let dir = hat(&Vec3::ith(k, 1.0));
        let col = skew_vee(&(f.matrix() * dir * j_d));
        jac.set_column(k, &col);
    }
    jac
}

/// Central-difference jacobian of `fun` in exponential coordinates.
pub fn fd_jacobian_so3<F>(mut fun: F, at: &Rotation, step: f64) -> Mat3
where
    F: FnMut(&Rotation) -> Vec3,
{
    let mut jac = Mat3::zeros();
    for k in 0..3 {
        let e = Vec3::ith(k, step);
        let plus = fun(&(at * exp_so3(&e)));
        let minus = fun(&(at * exp_so3(&-e)));
        jac.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn vec3() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-3.0f64..3.0).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
    }

    #[test]
    fn hat_matches_definition() {
        let m = hat(&Vec3::new(1.0, 2.0, 3.0));
        let expected = Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expected);
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let v = Vec3::new(0.3, -1.1, 2.0);
        assert_eq!(hat(&v) * v, Vec3::zeros());
    }

    #[test]
    fn vee_inverts_hat_and_rejects_symmetric_parts() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        let mut s = hat(&v);
        // |S + S^T|_F = 1e-3
        s[(0, 0)] += 0.5e-3;
        assert!(matches!(vee(&s), Err(Error::NotSkew { .. })));
        assert!(vee(&Mat3::from_element(f64::NAN)).is_err());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_so3(&Vec3::zeros()), Rotation::identity());
        let r = exp_so3(&(Vec3::z() * FRAC_PI_4));
        let expected = Mat3::new(
            FRAC_1_SQRT_2,
            -FRAC_1_SQRT_2,
            0.0,
            FRAC_1_SQRT_2,
            FRAC_1_SQRT_2,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-15);
        let half = exp_so3(&(Vec3::x() * PI));
        assert_relative_eq!(
            *half.matrix(),
            Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let axis = Vec3::new(0.48, -0.6, 0.64);
        let below = exp_so3(&(axis * (SMALL_ANGLE * (1.0 - 1e-9))));
        let above = exp_so3(&(axis * (SMALL_ANGLE * (1.0 + 1e-9))));
        assert!((below.matrix() - above.matrix()).norm() <= 1e-12);
        let lb = log_so3(&below);
        let la = log_so3(&above);
        assert!((lb - la).norm() <= 1e-12 * SMALL_ANGLE.max(1.0));
    }

    #[test]
    fn log_near_half_turn_uses_fixed_sign() {
        let v = log_so3(&exp_so3(&(Vec3::x() * PI)));
        assert_relative_eq!(v, Vec3::x() * PI, epsilon = 1e-12);
        let v = log_so3(&exp_so3(&(-Vec3::x() * PI)));
        assert_relative_eq!(v, Vec3::x() * PI, epsilon = 1e-12);
        let axis = Vec3::new(1.0, -2.0, 0.5).normalize();
        let v = log_so3(&exp_so3(&(axis * (PI - 1e-3))));
        assert_relative_eq!(v, axis * (PI - 1e-3), epsilon = 1e-9);
    }

    #[test]
    fn polar_projection_recovers_rotation() {
        let r = exp_so3(&Vec3::new(0.4, -1.0, 2.0));
        let noisy = r.matrix() + Mat3::from_element(1e-7);
        let p = polar_project(&noisy);
        assert!(orthogonality_error(p.matrix()) < 1e-14);
        assert!((p.matrix() - r.matrix()).norm() < 1e-6);
    }

    #[test]
    fn implicit_rotation_zero_rhs_is_identity() {
        let j_d = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 0.5));
        let f = solve_implicit_rotation(&j_d, &Vec3::zeros(), None, &NewtonOptions::default())
            .unwrap();
        assert_eq!(f, Rotation::identity());
    }

    #[test]
    fn implicit_rotation_unit_inertia_matches_brute_force() {
        // Oracle: coarse-to-fine grid search of |(F - F^T)^vee - b| over exponential
        // coordinates. Independent of the Newton path.
        let b = Vec3::new(0.02, -0.01, 0.015);
        let j_d = Mat3::identity();
        let res = |phi: &Vec3| (skew_vee(exp_so3(phi).matrix()) - b).norm();
        let mut best = Vec3::zeros();
        let mut width = 0.05;
        for _ in 0..12 {
            let center = best;
            let mut best_val = res(&center);
            for i in -10..=10 {
                for j in -10..=10 {
                    for k in -10..=10 {
                        let p = center + Vec3::new(i as f64, j as f64, k as f64) * (width / 10.0);
                        let val = res(&p);
                        if val < best_val {
                            best_val = val;
                            best = p;
                        }
                    }
                }
            }
            width /= 5.0;
        }
        let f = solve_implicit_rotation(&j_d, &b, None, &NewtonOptions::default()).unwrap();
        let phi = log_so3(&f);
        assert!((phi - best).norm() < 1e-9, "{phi} vs {best}");
        // first-order guess exp(b/2)
        assert!((phi - b / 2.0).norm() < 1e-5);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let j_d = Mat3::new(1.5, 0.2, -0.1, 0.2, 0.8, 0.05, -0.1, 0.05, 2.0);
        let f = exp_so3(&Vec3::new(0.3, -0.2, 0.7));
        let fd = fd_jacobian_so3(|r| skew_vee(&(r.matrix() * j_d)), &f, 1e-7);
        let an = implicit_rotation_jacobian(&j_d, &f);
        assert!((fd - an).norm() < 1e-7);
    }

    #[test]
    fn implicit_rotation_random_inertia() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let j = a * a.transpose() + Mat3::identity();
            let j_d = Mat3::identity() * (0.5 * j.trace()) - j;
            let dir = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let b = dir * 0.1;
            let f = solve_implicit_rotation(&j_d, &b, None, &NewtonOptions::default()).unwrap();
            let r = skew_vee(&(f.matrix() * j_d)) - b;
            assert!(r.norm() <= 1e-12);
            assert!(orthogonality_error(f.matrix()) <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn hat_vee_roundtrip(v in vec3()) {
            prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
            let w = Vec3::new(0.1, 0.7, -0.4);
            prop_assert!((hat(&v) * w - v.cross(&w)).norm() < 1e-14);
        }

        #[test]
        fn exp_inverse_pairs(v in vec3()) {
            let v = if v.norm() > PI { v * (PI / v.norm()) } else { v };
            let p = exp_so3(&v) * exp_so3(&-v);
            prop_assert!((p.matrix() - Mat3::identity()).norm() <= 1e-13);
            prop_assert!(orthogonality_error(exp_so3(&v).matrix()) <= 1e-13);
            prop_assert!((exp_so3(&v).matrix().determinant() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn log_inverts_exp_inside_ball(v in vec3()) {
            let v = if v.norm() >= 3.1 { v * (3.1 / v.norm()) } else { v };
            prop_assert!((log_so3(&exp_so3(&v)) - v).norm() <= 1e-10);
        }
    }
}
