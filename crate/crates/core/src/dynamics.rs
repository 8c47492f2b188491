//! Continuous-time Euler-Lagrange equations and a classical RK4 reference
//! integrator used to cross-check the variational integrator.

use nalgebra::Cholesky;

use crate::body::{
    assemble_inertia, body_velocity, control_covector, rot_block, BodyVelocity, Configuration,
    ControlMoment, SystemParams, Vec12, TRANS_BLOCK,
};
use crate::error::{Error, Result};
use crate::so3::{hat, polar_project, Mat3, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuousState {
    pub config: Configuration,
    pub xi: BodyVelocity,
}

/// Time derivative of a [`ContinuousState`]: `R_i' = R_i Omega_i^`, `x' = xdot`
/// and the acceleration `xi_dot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub rot_dot: [Mat3; 3],
    pub xdot: Vec3,
    pub xi_dot: Vec12,
}

/// `R_i^T x' - R_i^T R_0 d_0i^ Omega_0`, the part of `V_i` not due to `Omega_i`.
fn joint_velocity(params: &SystemParams, config: &Configuration, xi: &BodyVelocity, i: usize) -> Vec3 {
    let ri_t = config.rot[i].transpose();
    ri_t * xi.xdot - ri_t * (config.rot[0] * (hat(params.d0(i)) * xi.omega[0]))
}

/// Coupling term `W_i` for `i` in {1, 2}.
pub fn coupling_term_w(
    params: &SystemParams,
    config: &Configuration,
    xi: &BodyVelocity,
    i: usize,
) -> Vec3 {
    let mi = &params.mass[i];
    let wi = hat(&xi.omega[i]);
    let w0 = hat(&xi.omega[0]);
    let rel = config.rot[i].transpose() * config.rot[0];
    (wi * mi - mi * wi) * joint_velocity(params, config, xi, i)
        - mi * (rel * (w0 * (hat(params.d0(i)) * xi.omega[0])))
        + wi * (mi * (hat(params.di(i)) * xi.omega[i]))
}

/// Gyroscopic and coupling terms of the Euler-Lagrange equations, so that
/// `I(g) xi_dot + bias(g, xi) = U`.
pub fn bias(params: &SystemParams, config: &Configuration, xi: &BodyVelocity) -> Vec12 {
    let r0 = config.rot[0].matrix();
    let m0 = &params.mass[0];
    let w0 = &xi.omega[0];
    let v0 = r0.transpose() * xi.xdot;

    let mut b0 = w0.cross(&(params.inertia[0] * w0)) + hat(&v0) * (m0 * v0);
    let w0h = hat(w0);
    let mut bx = r0 * ((w0h * m0 - m0 * w0h) * v0);
    let mut out = Vec12::zeros();
    for i in 1..3 {
        let ri = config.rot[i].matrix();
        let w = coupling_term_w(params, config, xi, i);
        b0 += hat(params.d0(i)) * (r0.transpose() * (ri * w));
        bx += ri * w;
        let vi = body_velocity(params, config, xi, i);
        let om = &xi.omega[i];
        let bi = om.cross(&(params.inertia[i] * om)) + vi.cross(&(params.mass[i] * vi))
            - hat(params.di(i)) * w;
        out.fixed_rows_mut::<3>(rot_block(i)).copy_from(&bi);
    }
    out.fixed_rows_mut::<3>(0).copy_from(&b0);
    out.fixed_rows_mut::<3>(TRANS_BLOCK).copy_from(&bx);
    out
}

/// Right-hand side of the controlled Euler-Lagrange system.
pub fn el_vector_field(
    params: &SystemParams,
    state: &ContinuousState,
    u: &ControlMoment,
) -> Result<StateRate> {
    let inertia = assemble_inertia(params, &state.config);
    let chol = Cholesky::new(inertia).ok_or(Error::IllConditionedInertia)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    // squared ratio of Cholesky pivots bounds the condition number from below
    if !(lo > 0.0) || (hi / lo).powi(2) > 1e12 {
        return Err(Error::IllConditionedInertia);
    }
    let rhs = control_covector(&state.config, u) - bias(params, &state.config, &state.xi);
    Ok(StateRate {
        rot_dot: [0, 1, 2].map(|i| state.config.rot[i].matrix() * hat(&state.xi.omega[i])),
        xdot: state.xi.xdot,
        xi_dot: chol.solve(&rhs),
    })
}

/// Euclidean update of the state along a rate, rotations treated as plain
/// 3x3 matrices (no re-projection).
fn advance(state: &ContinuousState, rate: &StateRate, dt: f64) -> ContinuousState {
    let rot = [0, 1, 2]
        .map(|i| Rotation::from_matrix_unchecked(state.config.rot[i].matrix() + rate.rot_dot[i] * dt));
    ContinuousState {
        config: Configuration {
            rot,
            x: state.config.x + rate.xdot * dt,
        },
        xi: BodyVelocity::from_vector(&(state.xi.to_vector() + rate.xi_dot * dt)),
    }
}

/// One classical fourth-order Runge-Kutta step, followed by polar
/// re-projection of the attitudes.
pub fn rk4_step<U>(
    params: &SystemParams,
    state: &ContinuousState,
    control: U,
    t: f64,
    h: f64,
) -> Result<ContinuousState>
where
    U: Fn(f64) -> ControlMoment,
{
    let k1 = el_vector_field(params, state, &control(t))?;
    let k2 = el_vector_field(params, &advance(state, &k1, h / 2.0), &control(t + h / 2.0))?;
    let k3 = el_vector_field(params, &advance(state, &k2, h / 2.0), &control(t + h / 2.0))?;
    let k4 = el_vector_field(params, &advance(state, &k3, h), &control(t + h))?;

    let rot = [0, 1, 2].map(|i| {
        let incr = k1.rot_dot[i] + k2.rot_dot[i] * 2.0 + k3.rot_dot[i] * 2.0 + k4.rot_dot[i];
        polar_project(&(state.config.rot[i].matrix() + incr * (h / 6.0)))
    });
    let dx = (k1.xdot + k2.xdot * 2.0 + k3.xdot * 2.0 + k4.xdot) * (h / 6.0);
    let dxi = (k1.xi_dot + k2.xi_dot * 2.0 + k3.xi_dot * 2.0 + k4.xi_dot) * (h / 6.0);
    Ok(ContinuousState {
        config: Configuration {
            rot,
            x: state.config.x + dx,
        },
        xi: BodyVelocity::from_vector(&(state.xi.to_vector() + dxi)),
    })
}

/// Integrates `steps` RK4 steps of size `h` from `t0`.
pub fn rk4_integrate<U>(
    params: &SystemParams,
    start: &ContinuousState,
    control: U,
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<ContinuousState>
where
    U: Fn(f64) -> ControlMoment,
{
    let mut state = *start;
    for k in 0..steps {
        state = rk4_step(params, &state, &control, t0 + k as f64 * h, h).map_err(|e| e.at_step(k))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::tests::{random_config, random_params, random_vec, random_velocity};
    use crate::body::{kinetic_energy, momentum, total_momenta};
    use crate::so3::exp_so3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coupling_term_vanishes_without_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(&mut rng);
        let config = random_config(&mut rng);
        for i in 1..3 {
            assert_eq!(
                coupling_term_w(&params, &config, &BodyVelocity::default(), i),
                Vec3::zeros()
            );
            let xi = BodyVelocity {
                xdot: Vec3::new(1.0, -2.0, 0.5),
                ..Default::default()
            };
            assert!(coupling_term_w(&params, &config, &xi, i).norm() < 1e-14);
        }
    }

    #[test]
    fn rest_is_equilibrium() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = random_params(&mut rng);
        let state = ContinuousState {
            config: random_config(&mut rng),
            xi: BodyVelocity::default(),
        };
        let rate = el_vector_field(&params, &state, &ControlMoment::zero()).unwrap();
        assert_eq!(rate.xi_dot, Vec12::zeros());
        let next = rk4_step(&params, &state, |_| ControlMoment::zero(), 0.0, 0.01).unwrap();
        for i in 0..3 {
            assert!((next.config.rot[i].matrix() - state.config.rot[i].matrix()).norm() < 1e-15);
        }
        assert_eq!(next.config.x, state.config.x);
    }

    #[test]
    fn rest_with_moment_accelerates_through_inverse_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&mut rng);
        let state = ContinuousState::default();
        let u = ControlMoment {
            u1: Vec3::z(),
            u2: Vec3::zeros(),
        };
        let rate = el_vector_field(&params, &state, &u).unwrap();
        let mut rhs = Vec12::zeros();
        rhs[2] = 1.0;
        rhs[8] = -1.0;
        let expected = assemble_inertia(&params, &state.config).lu().solve(&rhs).unwrap();
        assert!((rate.xi_dot - expected).norm() < 1e-12);
    }

    #[test]
    fn unforced_field_conserves_total_momenta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let params = random_params(&mut rng);
            let state = ContinuousState {
                config: random_config(&mut rng),
                xi: random_velocity(&mut rng),
            };
            let u = ControlMoment {
                u1: random_vec(&mut rng, 3.0),
                u2: random_vec(&mut rng, 3.0),
            };
            // d/dt along the exact flow, by differencing tiny RK4 steps
            let eps = 1e-4;
            let fwd = rk4_step(&params, &state, |_| u, 0.0, eps).unwrap();
            let bwd = rk4_step(&params, &state, |_| u, 0.0, -eps).unwrap();
            let (pf, wf) = total_momenta(&params, &fwd.config, &fwd.xi);
            let (pb, wb) = total_momenta(&params, &bwd.config, &bwd.xi);
            assert!(((pf - pb) / (2.0 * eps)).norm() < 1e-8);
            assert!(((wf - wb) / (2.0 * eps)).norm() < 1e-7);
        }
    }

    #[test]
    fn work_rate_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = random_params(&mut rng);
        let state = ContinuousState {
            config: random_config(&mut rng),
            xi: random_velocity(&mut rng),
        };
        let u = ControlMoment {
            u1: random_vec(&mut rng, 3.0),
            u2: random_vec(&mut rng, 3.0),
        };
        let eps = 1e-4;
        let fwd = rk4_step(&params, &state, |_| u, 0.0, eps).unwrap();
        let bwd = rk4_step(&params, &state, |_| u, 0.0, -eps).unwrap();
        let dt = (kinetic_energy(&params, &fwd.config, &fwd.xi)
            - kinetic_energy(&params, &bwd.config, &bwd.xi))
            / (2.0 * eps);
        let power = state.xi.to_vector().dot(&control_covector(&state.config, &u));
        assert!((dt - power).abs() < 1e-6 * power.abs().max(1.0));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = random_params(&mut rng);
        let start = ContinuousState {
            config: random_config(&mut rng),
            xi: random_velocity(&mut rng),
        };
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            rk4_integrate(&params, &start, |_| ControlMoment::zero(), 0.0, h, n).unwrap()
        };
        let err = |a: &ContinuousState, b: &ContinuousState| {
            (0..3)
                .map(|i| (a.config.rot[i].matrix() - b.config.rot[i].matrix()).norm())
                .sum::<f64>()
                + (a.config.x - b.config.x).norm()
        };
        let (a, b, c) = (run(1e-2), run(5e-3), run(2.5e-3));
        // Richardson: (y_h - y_{h/2}) / (y_{h/2} - y_{h/4}) -> 2^4
        let ratio = err(&a, &b) / err(&b, &c);
        assert!((ratio.log2() - 4.0).abs() < 0.3, "observed order {}", ratio.log2());
    }

    #[test]
    fn momentum_of_state_matches_legendre() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = random_params(&mut rng);
        let config = Configuration {
            rot: [exp_so3(&Vec3::x()); 3],
            x: Vec3::zeros(),
        };
        let xi = random_velocity(&mut rng);
        let mu = momentum(&params, &config, &xi);
        assert!((mu.0 - assemble_inertia(&params, &config) * xi.to_vector()).norm() == 0.0);
    }
}
