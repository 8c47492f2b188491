//! Lie group variational integrator.
//!
//! The configuration advances by group multiplication `g_{k+1} = g_k f_k`, and
//! the relative update `f_{k+1}` is found from the implicit discrete
//! Euler-Lagrange equations with a coupled 12-unknown Newton iteration in
//! exponential coordinates. Nothing is ever re-projected onto SO(3).
//!
//! Internally the discrete momenta are carried multiplied by `h`, which is the
//! natural scaling of the discrete Lagrangian's derivatives:
//!
//! * `h mu_plus(g_k, f_k)` is the momentum at `t_{k+1}` seen from step `k`,
//! * `h mu_minus(g_k, f_k)` is the momentum at `t_k` seen from step `k`,
//!
//! and one step solves `mu_minus(g_{k+1}, f_{k+1}) = mu_plus(g_k, f_k) + h U_{k+1}`.

use nalgebra::Cholesky;

use crate::body::{
    assemble_inertia, control_covector, kinetic_energy, momentum, momentum_map, rot_block,
    BodyVelocity, Configuration, ControlMoment, Mat12, Momentum, SystemParams, Vec12, TRANS_BLOCK,
};
use crate::error::{Error, Result};
use crate::so3::{exp_so3, expm1_so3, hat, log_so3, skew_vee, Mat3, NewtonOptions, Rotation, Vec3};

/// Relative update `f = (F0, dx, F1, F2)` between two time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteStep {
    pub rot: [Rotation; 3],
    pub dx: Vec3,
}

impl Default for DiscreteStep {
    fn default() -> Self {
        Self::identity()
    }
}

impl DiscreteStep {
    pub fn identity() -> Self {
        Self {
            rot: [Rotation::identity(); 3],
            dx: Vec3::zeros(),
        }
    }

    /// `(exp(h Omega_0^), h xdot, exp(h Omega_1^), exp(h Omega_2^))`
    pub fn from_velocity(xi: &BodyVelocity, h: f64) -> Self {
        Self {
            rot: xi.omega.map(|w| exp_so3(&(w * h))),
            dx: xi.xdot * h,
        }
    }

    /// Reporting-only velocity reconstruction `(log(F_i)/h, dx/h)`.
    pub fn velocity_proxy(&self, h: f64) -> BodyVelocity {
        BodyVelocity {
            omega: self.rot.map(|f| log_so3(&f) / h),
            xdot: self.dx / h,
        }
    }

    /// `g f`
    pub fn apply(&self, g: &Configuration) -> Configuration {
        Configuration {
            // R + R (F - I): a near-identity F would otherwise lose the low
            // bits of its small part to the identity, and the same rounding
            // repeats every step of a steady motion
            rot: [0, 1, 2].map(|i| {
                let r = g.rot[i].matrix();
                Rotation::from_matrix_unchecked(r + r * expm1_so3(&log_so3(&self.rot[i])))
            }),
            x: g.x + self.dx,
        }
    }

    /// `f exp(delta)` with `delta` stacked like a body velocity.
    pub fn perturbed(&self, delta: &Vec12) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.rot[i] *= exp_so3(&delta.fixed_rows::<3>(rot_block(i)).into_owned());
        }
        out.dx += delta.fixed_rows::<3>(TRANS_BLOCK);
        out
    }

    pub fn max_orthogonality_error(&self) -> f64 {
        Configuration {
            rot: self.rot,
            x: self.dx,
        }
        .max_orthogonality_error()
    }
}

/// Nonstandard inertias of the discrete Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteInertia {
    /// `J_d0 = tr(J_0)/2 I - J_0`
    pub j_d0: Mat3,
    /// `J'_i = J_i - d_i0^ M_i d_i0^` for bodies 1 and 2.
    pub j_prime: [Mat3; 2],
    /// `J'_di = tr(J'_i)/2 I - J'_i`
    pub j_d_prime: [Mat3; 2],
}

impl DiscreteInertia {
    pub fn new(params: &SystemParams) -> Self {
        let nonstandard = |j: &Mat3| Mat3::identity() * (0.5 * j.trace()) - j;
        let j_prime = [1, 2].map(|i| {
            let d = hat(params.di(i));
            params.inertia[i] - d * params.mass[i] * d
        });
        Self {
            j_d0: nonstandard(&params.inertia[0]),
            j_prime,
            j_d_prime: j_prime.map(|j| nonstandard(&j)),
        }
    }
}

/// `B_i = dx + R0 (F0 - I) d_0i` and `A_i = R_i M_i (R_i^T B_i - (F_i - I) d_i0)`.
#[inline]
fn joint_terms(params: &SystemParams, g: &Configuration, f: &DiscreteStep, i: usize) -> (Vec3, Vec3) {
    let b = f.dx + g.rot[0] * (f.rot[0] * params.d0(i) - params.d0(i));
    let ri = &g.rot[i];
    let a = ri * (params.mass[i] * (ri.transpose() * b - (f.rot[i] * params.di(i) - params.di(i))));
    (a, b)
}

/// Discrete Lagrangian `L_d(g_k, f_k)`, an approximation of the action over one step.
pub fn discrete_lagrangian(params: &SystemParams, g: &Configuration, f: &DiscreteStep, h: f64) -> f64 {
    let inertia = DiscreteInertia::new(params);
    let eye = Mat3::identity();
    let dx = &f.dx;
    let r0 = g.rot[0].matrix();
    let f0m = f.rot[0].matrix() - eye;
    let mut l = dx.dot(&(r0 * params.mass[0] * r0.transpose() * dx)) / (2.0 * h)
        + ((eye - f.rot[0].matrix()) * inertia.j_d0).trace() / h;
    for i in 1..3 {
        let ri = g.rot[i].matrix();
        let mi = &params.mass[i];
        let fim = f.rot[i].matrix() - eye;
        let d0 = params.d0(i);
        let di = params.di(i);
        let w = r0 * (f0m * d0); // R0 (F0 - I) d_0i
        let rmr = ri * mi * ri.transpose();
        l += dx.dot(&(rmr * dx)) / (2.0 * h)
            + ((eye - f.rot[i].matrix()) * inertia.j_d_prime[i - 1]).trace() / h
            + w.dot(&(rmr * w)) / (2.0 * h)
            + dx.dot(&(rmr * w)) / h
            - dx.dot(&(ri * (mi * (fim * di)))) / h
            - w.dot(&(ri * (mi * (fim * di)))) / h;
    }
    l
}

/// Trapezoidal discrete forces `(U-_k, U+_k) = (h/2 U(g_k, u_k), h/2 U(g_{k+1}, u_{k+1}))`.
pub fn discrete_forces(
    g_k: &Configuration,
    u_k: &ControlMoment,
    g_next: &Configuration,
    u_next: &ControlMoment,
    h: f64,
) -> (Vec12, Vec12) {
    (
        control_covector(g_k, u_k) * (h / 2.0),
        control_covector(g_next, u_next) * (h / 2.0),
    )
}

/// Pre-computed step map for one parameter set and step size.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: SystemParams,
    inertia: DiscreteInertia,
    h: f64,
    newton: NewtonOptions,
}

impl Integrator {
    pub fn new(params: SystemParams, h: f64, newton: NewtonOptions) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::validation("integrator.h", "must be positive"));
        }
        params.validate()?;
        let inertia = DiscreteInertia::new(&params);
        Ok(Self {
            params,
            inertia,
            h,
            newton,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn discrete_inertia(&self) -> &DiscreteInertia {
        &self.inertia
    }

    /// `h mu_plus(g, f)`: left-trivialized derivative of `h L_d` in `f`.
    pub fn scaled_momentum_after(&self, g: &Configuration, f: &DiscreteStep) -> Vec12 {
        let p = &self.params;
        let r0_next = g.rot[0] * f.rot[0];
        let mut p0 = skew_vee(&(self.inertia.j_d0 * f.rot[0].matrix()));
        let mut px = g.rot[0] * (p.mass[0] * (g.rot[0].transpose() * f.dx));
        let mut out = Vec12::zeros();
        for i in 1..3 {
            let (a, b) = joint_terms(p, g, f, i);
            p0 += hat(p.d0(i)) * (r0_next.transpose() * a);
            px += a;
            let fi = &f.rot[i];
            let pi = skew_vee(&(self.inertia.j_d_prime[i - 1] * fi.matrix()))
                - hat(p.di(i)) * (fi.transpose() * (p.mass[i] * (g.rot[i].transpose() * b)));
            out.fixed_rows_mut::<3>(rot_block(i)).copy_from(&pi);
        }
        out.fixed_rows_mut::<3>(0).copy_from(&p0);
        out.fixed_rows_mut::<3>(TRANS_BLOCK).copy_from(&px);
        out
    }

    /// `h mu_minus(g, f)`: `Ad*_{f^-1} D_f(h L_d) - D_g(h L_d)`.
    pub fn scaled_momentum_before(&self, g: &Configuration, f: &DiscreteStep) -> Vec12 {
        self.momentum_before_impl(g, f, None).0
    }

    /// `h mu_minus(g, f)` with its jacobian along `f exp(delta)`.
    pub fn scaled_momentum_before_with_jacobian(
        &self,
        g: &Configuration,
        f: &DiscreteStep,
    ) -> (Vec12, Mat12) {
        let (value, jac) = self.momentum_before_impl(g, f, Some(()));
        (value, jac.unwrap_or_else(Mat12::zeros))
    }

    fn momentum_before_impl(
        &self,
        g: &Configuration,
        f: &DiscreteStep,
        want_jacobian: Option<()>,
    ) -> (Vec12, Option<Mat12>) {
        let p = &self.params;
        let r0 = &g.rot[0];
        let m0 = &p.mass[0];
        let v = r0.transpose() * f.dx;
        let m0v = m0 * v;

        let mut base = Vec12::zeros();
        let mut p0 = skew_vee(&(f.rot[0].matrix() * self.inertia.j_d0)) - m0v.cross(&v);
        let mut px = r0 * m0v;
        let mut ab = [(Vec3::zeros(), Vec3::zeros()); 2];
        for i in 1..3 {
            let (a, b) = joint_terms(p, g, f, i);
            ab[i - 1] = (a, b);
            p0 += hat(p.d0(i)) * (r0.transpose() * a);
            px += a;
            let ri = &g.rot[i];
            let fi = &f.rot[i];
            let pi = skew_vee(&(fi.matrix() * self.inertia.j_d_prime[i - 1]))
                - (fi * p.di(i)).cross(&(p.mass[i] * (ri.transpose() * b)))
                - ri.transpose() * a.cross(&b);
            base.fixed_rows_mut::<3>(rot_block(i)).copy_from(&pi);
        }
        base.fixed_rows_mut::<3>(0).copy_from(&p0);
        base.fixed_rows_mut::<3>(TRANS_BLOCK).copy_from(&px);

        if want_jacobian.is_none() {
            return (base, None);
        }

        // Forward-mode tangents along each unit direction of f exp(delta).
        let mut jac = Mat12::zeros();
        for col in 0..12 {
            let block = col / 3;
            let e = Vec3::ith(col % 3, 1.0);
            let (phi0, delta, phi) = match block {
                0 => (e, Vec3::zeros(), [Vec3::zeros(); 2]),
                1 => (Vec3::zeros(), e, [Vec3::zeros(); 2]),
                2 => (Vec3::zeros(), Vec3::zeros(), [e, Vec3::zeros()]),
                _ => (Vec3::zeros(), Vec3::zeros(), [Vec3::zeros(), e]),
            };
            let df0 = f.rot[0].matrix() * hat(&phi0);
            let dv = r0.transpose() * delta;
            let mut dp0 = skew_vee(&(df0 * self.inertia.j_d0)) - (m0 * dv).cross(&v) - m0v.cross(&dv);
            let mut dpx = r0 * (m0 * dv);
            let mut out = Vec12::zeros();
            for i in 1..3 {
                let (a, b) = ab[i - 1];
                let ri = &g.rot[i];
                let fi = &f.rot[i];
                let mi = &p.mass[i];
                let dfi = fi.matrix() * hat(&phi[i - 1]);
                let db = delta + r0 * (df0 * p.d0(i));
                let da = ri * (mi * (ri.transpose() * db - dfi * p.di(i)));
                dp0 += hat(p.d0(i)) * (r0.transpose() * da);
                dpx += da;
                let dpi = skew_vee(&(dfi * self.inertia.j_d_prime[i - 1]))
                    - (dfi * p.di(i)).cross(&(mi * (ri.transpose() * b)))
                    - (fi * p.di(i)).cross(&(mi * (ri.transpose() * db)))
                    - ri.transpose() * (da.cross(&b) + a.cross(&db));
                out.fixed_rows_mut::<3>(rot_block(i)).copy_from(&dpi);
            }
            out.fixed_rows_mut::<3>(0).copy_from(&dp0);
            out.fixed_rows_mut::<3>(TRANS_BLOCK).copy_from(&dpx);
            jac.set_column(col_index(block, col % 3), &out);
        }
        (base, Some(jac))
    }

    /// Residual of the discrete Euler-Lagrange equations, scaled by `h`:
    /// `h mu_plus(g_k, f_k) - h mu_minus(g_{k+1}, f_{k+1}) + h^2 U(g_{k+1}, u_{k+1})`.
    pub fn del_residual(
        &self,
        g_k: &Configuration,
        f_k: &DiscreteStep,
        f_next: &DiscreteStep,
        u_next: &ControlMoment,
    ) -> Vec12 {
        let g_next = f_k.apply(g_k);
        self.scaled_momentum_after(g_k, f_k) - self.scaled_momentum_before(&g_next, f_next)
            + control_covector(&g_next, u_next) * (self.h * self.h)
    }

    /// Solves `h mu_minus(g, f) = target` for `f`.
    pub fn solve_step(&self, g: &Configuration, target: &Vec12, guess: &DiscreteStep) -> Result<DiscreteStep> {
        let h = self.h;
        let scale = self.newton.tol * (target.norm() / h).max(1.0);
        // rebuilt from its logarithm so that round-off in the guess does not
        // compound from one step to the next
        let mut f = DiscreteStep {
            rot: guess.rot.map(|r| exp_so3(&log_so3(&r))),
            dx: guess.dx,
        };
        let mut last = f64::INFINITY;
        for _ in 0..self.newton.max_iter {
            let (value, jac) = self.scaled_momentum_before_with_jacobian(g, &f);
            let r = value - target;
            last = r.norm() / h;
            if !last.is_finite() {
                break;
            }
            let lu = jac.lu();
            let delta = lu.solve(&(-r)).ok_or(Error::SingularJacobian)?;
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularJacobian);
            }
            f = f.perturbed(&delta);
            if last <= scale {
                // the final update drives the residual to round-off
                return Ok(f);
            }
        }
        Err(Error::NewtonDiverged {
            iterations: self.newton.max_iter,
            residual: last,
        })
    }

    /// One step of the flow map `(g_k, f_k) -> (g_{k+1}, f_{k+1})`.
    pub fn del_step(
        &self,
        g_k: &Configuration,
        f_k: &DiscreteStep,
        u_next: &ControlMoment,
    ) -> Result<(Configuration, DiscreteStep)> {
        let g_next = f_k.apply(g_k);
        let target = self.scaled_momentum_after(g_k, f_k)
            + control_covector(&g_next, u_next) * (self.h * self.h);
        let f_next = self.solve_step(&g_next, &target, f_k)?;
        Ok((g_next, f_next))
    }

    /// First relative update from a continuous initial velocity: the discrete
    /// momentum at `t_0` including the `h/2 U_0` force half matches `I(g_0) xi_0`.
    pub fn init_first_step(
        &self,
        g0: &Configuration,
        xi0: &BodyVelocity,
        u0: &ControlMoment,
    ) -> Result<DiscreteStep> {
        let h = self.h;
        let mu0 = momentum(&self.params, g0, xi0).0;
        let target = (mu0 + control_covector(g0, u0) * (h / 2.0)) * h;
        self.solve_step(g0, &target, &DiscreteStep::from_velocity(xi0, h))
    }

    /// Discrete momentum at `t_k`: `mu_minus(g_k, f_k) - h/2 U(g_k, u_k)`.
    pub fn discrete_momentum(&self, g: &Configuration, f: &DiscreteStep, u: &ControlMoment) -> Momentum {
        Momentum(self.scaled_momentum_before(g, f) / self.h - control_covector(g, u) * (self.h / 2.0))
    }

    /// Velocity at `t_k` through the inverse Legendre transform of the discrete momentum.
    pub fn velocity_at(&self, g: &Configuration, mu: &Momentum) -> Result<BodyVelocity> {
        let chol = Cholesky::new(assemble_inertia(&self.params, g)).ok_or(Error::IllConditionedInertia)?;
        Ok(BodyVelocity::from_vector(&chol.solve(&mu.0)))
    }

    pub fn sample(&self, k: usize, g: &Configuration, f: &DiscreteStep, u: &ControlMoment) -> Result<StepSample> {
        let mu = self.discrete_momentum(g, f, u);
        let xi = self.velocity_at(g, &mu)?;
        let (px, pw) = momentum_map(g, &mu);
        Ok(StepSample {
            k,
            t: k as f64 * self.h,
            config: *g,
            step: *f,
            momentum: mu,
            velocity: xi,
            linear_momentum: px,
            angular_momentum: pw,
            energy: kinetic_energy(&self.params, g, &xi),
            control: *u,
        })
    }

    /// Integrates `steps` steps from `(g0, xi0)`, with `control(k)` the joint
    /// moments at `t_k`, calling `observe` on every sample `k = 0..=steps`.
    pub fn simulate<C, O>(
        &self,
        g0: &Configuration,
        xi0: &BodyVelocity,
        steps: usize,
        control: C,
        mut observe: O,
    ) -> Result<(Configuration, DiscreteStep)>
    where
        C: Fn(usize) -> ControlMoment,
        O: FnMut(&StepSample),
    {
        let mut u = control(0);
        let mut f = self.init_first_step(g0, xi0, &u).map_err(|e| e.at_step(0))?;
        let mut g = *g0;
        for k in 0..steps {
            observe(&self.sample(k, &g, &f, &u).map_err(|e| e.at_step(k))?);
            let u_next = control(k + 1);
            let (g_next, f_next) = self.del_step(&g, &f, &u_next).map_err(|e| e.at_step(k + 1))?;
            g = g_next;
            f = f_next;
            u = u_next;
        }
        observe(&self.sample(steps, &g, &f, &u).map_err(|e| e.at_step(steps))?);
        Ok((g, f))
    }
}

/// Column of the stacked jacobian for tangent block `block` (F0, dx, F1, F2).
#[inline]
fn col_index(block: usize, axis: usize) -> usize {
    let start = match block {
        0 => rot_block(0),
        1 => TRANS_BLOCK,
        2 => rot_block(1),
        _ => rot_block(2),
    };
    start + axis
}

/// Everything reported for one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub k: usize,
    pub t: f64,
    pub config: Configuration,
    pub step: DiscreteStep,
    pub momentum: Momentum,
    /// Inverse Legendre transform of the discrete momentum.
    pub velocity: BodyVelocity,
    pub linear_momentum: Vec3,
    pub angular_momentum: Vec3,
    pub energy: f64,
    pub control: ControlMoment,
}
