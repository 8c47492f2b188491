//! Direct optimal control of rest-to-rest maneuvers.
//!
//! Joint moments are natural cubic splines through uniformly spaced knots.
//! A rollout of the variational integrator maps the knots to the effort cost
//! and the terminal residual, and an augmented Lagrangian method drives the
//! residual to zero. Constraint jacobians come from central differences over
//! rollouts; the cost is an exact quadratic form in the knots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::body::{BodyVelocity, Configuration, ControlMoment};
use crate::control::{cost, spline_basis, ControlSchedule};
use crate::error::{Error, Result};
use crate::integrator::{DiscreteStep, Integrator, StepSample};
use crate::so3::{exp_so3, log_so3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    ForwardTranslation,
    RotationE1,
    Custom,
}

/// Terminal targets of a rest-to-rest maneuver over `T = steps * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    /// Prescribed components of `x_N - x_0`; `None` leaves the component free.
    pub displacement: [Option<f64>; 3],
    /// Every body must end at `exp(rotation^) R_i0`.
    pub rotation: Vec3,
    /// Components of `u1`, `u2` the optimizer may use.
    pub control_axes: [bool; 3],
    pub steps: usize,
    pub h: f64,
}

impl ManeuverSpec {
    /// Move `distance` along e1 with the attitudes restored, moments about e3 only.
    pub fn forward_translation(distance: f64, steps: usize, h: f64) -> Self {
        Self {
            kind: ManeuverKind::ForwardTranslation,
            displacement: [Some(distance), None, None],
            rotation: Vec3::zeros(),
            control_axes: [false, false, true],
            steps,
            h,
        }
    }

    /// Rotate every body by pi about e1, position free.
    pub fn rotation_e1(steps: usize, h: f64) -> Self {
        Self {
            kind: ManeuverKind::RotationE1,
            displacement: [None; 3],
            rotation: Vec3::x() * std::f64::consts::PI,
            control_axes: [true; 3],
            steps,
            h,
        }
    }

    /// Return to the initial attitudes and position, at rest.
    pub fn hold(steps: usize, h: f64) -> Self {
        Self {
            kind: ManeuverKind::Custom,
            displacement: [Some(0.0); 3],
            rotation: Vec3::zeros(),
            control_axes: [true; 3],
            steps,
            h,
        }
    }

    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.h
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::validation("maneuver.h", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::validation("maneuver.steps", "must be positive"));
        }
        if !self.rotation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("maneuver.rotation", "non-finite entry"));
        }
        if self.displacement.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("maneuver.displacement", "non-finite entry"));
        }
        if !self.control_axes.iter().any(|&a| a) {
            return Err(Error::validation("maneuver.control_axes", "no control axis enabled"));
        }
        Ok(())
    }

    pub fn residual_len(&self) -> usize {
        self.displacement.iter().flatten().count() + 9 + 12
    }

    /// Human-readable label of each residual entry.
    pub fn residual_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..3)
            .filter(|&j| self.displacement[j].is_some())
            .map(|j| format!("x[{j}]"))
            .collect();
        for i in 0..3 {
            out.extend((0..3).map(|j| format!("attitude{i}[{j}]")));
        }
        out.extend((0..3).map(|j| format!("Omega0[{j}]")));
        out.extend((0..3).map(|j| format!("xdot[{j}]")));
        out.extend((0..3).map(|j| format!("Omega1[{j}]")));
        out.extend((0..3).map(|j| format!("Omega2[{j}]")));
        out
    }
}

/// Terminal residual: prescribed position components, attitude errors
/// `log((exp(rotation^) R_i0)^T R_iN)` for each body, and the velocity proxy.
pub fn terminal_residual(
    spec: &ManeuverSpec,
    initial: &Configuration,
    terminal: &Configuration,
    proxy: &BodyVelocity,
) -> DVector<f64> {
    let mut out = Vec::with_capacity(spec.residual_len());
    for j in 0..3 {
        if let Some(d) = spec.displacement[j] {
            out.push(terminal.x[j] - initial.x[j] - d);
        }
    }
    let turn = exp_so3(&spec.rotation);
    for i in 0..3 {
        let target = turn * initial.rot[i];
        out.extend(log_so3(&(target.inverse() * terminal.rot[i])).iter());
    }
    out.extend(proxy.to_vector().iter());
    DVector::from_vec(out)
}

/// Outcome of one deterministic forward simulation under a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub terminal: Configuration,
    pub terminal_step: DiscreteStep,
    pub residual: DVector<f64>,
    pub cost: f64,
    pub controls: Vec<ControlMoment>,
}

/// A maneuver posed for a given system and initial state.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub integrator: Integrator,
    pub initial: Configuration,
    pub initial_velocity: BodyVelocity,
    pub maneuver: ManeuverSpec,
}

impl ControlProblem {
    pub fn new(
        integrator: Integrator,
        initial: Configuration,
        initial_velocity: BodyVelocity,
        maneuver: ManeuverSpec,
    ) -> Result<Self> {
        maneuver.validate()?;
        initial.validate("initial")?;
        if integrator.step_size() != maneuver.h {
            return Err(Error::validation("maneuver.h", "differs from the integrator step"));
        }
        Ok(Self {
            integrator,
            initial,
            initial_velocity,
            maneuver,
        })
    }

    pub fn rollout(&self, schedule: &ControlSchedule) -> Result<Rollout> {
        self.trajectory(schedule, |_| {})
    }

    /// Rollout that also reports every step.
    pub fn trajectory<O: FnMut(&StepSample)>(&self, schedule: &ControlSchedule, observe: O) -> Result<Rollout> {
        let spec = &self.maneuver;
        let controls = schedule.sample(spec.h, spec.steps)?;
        let (terminal, terminal_step) = self.integrator.simulate(
            &self.initial,
            &self.initial_velocity,
            spec.steps,
            |k| controls[k],
            observe,
        )?;
        let proxy = terminal_step.velocity_proxy(spec.h);
        Ok(Rollout {
            residual: terminal_residual(spec, &self.initial, &terminal, &proxy),
            cost: cost(&controls, spec.h),
            terminal,
            terminal_step,
            controls,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// knots per control channel
    pub knots: usize,
    /// `|c|_inf` target in residual units (m, rad, rad/s, m/s)
    pub constraint_tol: f64,
    /// `|grad cost - C^T lambda|_inf` target, relative to `max(1, |grad cost|_inf)`
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    /// knots are optimized as `u / control_scale` (N m)
    pub control_scale: f64,
    /// Levenberg-Marquardt steps allowed to reach the constraints
    pub restoration_steps: usize,
    /// simplified Newton steps that pull a trial point back onto the constraints
    pub corrections: usize,
    /// central-difference step on scaled knots
    pub fd_step: f64,
    /// amplitude of the symmetry-breaking seed, scaled units
    pub seed_amplitude: f64,
    /// initial bound on `|step|_inf`, scaled units
    pub initial_radius: f64,
}

const MIN_RADIUS: f64 = 1e-6;
const MAX_RADIUS: f64 = 100.0;

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            knots: 11,
            constraint_tol: 1e-4,
            stationarity_tol: 1e-6,
            max_iterations: 300,
            control_scale: 1000.0,
            restoration_steps: 2000,
            corrections: 8,
            fd_step: 1e-6,
            seed_amplitude: 0.5,
            initial_radius: 0.5,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("optimizer.{name}"), "must be positive"))
            }
        };
        if self.knots < 4 {
            return Err(Error::validation("optimizer.knots", "need at least 4 knots"));
        }
        positive("constraint_tol", self.constraint_tol)?;
        positive("stationarity_tol", self.stationarity_tol)?;
        positive("control_scale", self.control_scale)?;
        positive("fd_step", self.fd_step)?;
        positive("initial_radius", self.initial_radius)?;
        if !(self.seed_amplitude >= 0.0) {
            return Err(Error::validation("optimizer.seed_amplitude", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// N^2 m^2 s, before and after the accepted step
    pub previous_cost: f64,
    pub cost: f64,
    pub residual_inf: f64,
    pub stationarity: f64,
    /// fraction of the quadratic-model step that was taken
    pub step_length: f64,
    /// projection steps needed to return to the constraints
    pub corrections: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub schedule: ControlSchedule,
    /// N^2 m^2 s, evaluated from the returned schedule
    pub cost: f64,
    pub residual: DVector<f64>,
    pub residual_inf: f64,
    pub stationarity: f64,
    pub converged: bool,
    pub message: String,
    pub multipliers: DVector<f64>,
    pub iterations: Vec<IterationRecord>,
    /// Levenberg-Marquardt steps spent reaching the constraints
    pub restoration_steps: usize,
    pub rollouts: usize,
    pub seeded: bool,
}

pub const CHECKPOINT_FORMAT: &str = "fluid-lgvi-optimizer-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Resumable optimizer state, written as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// completed iterations
    pub iteration: usize,
    /// bound on `|step|_inf`, scaled units
    pub radius: f64,
    pub multipliers: Vec<f64>,
    pub schedule: ControlSchedule,
    /// quasi-Newton Hessian, row-major; restarted from the cost Hessian if absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_toml(text: &str, path: &std::path::Path) -> Result<Self> {
        let cp: Checkpoint = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::validation("checkpoint.format", format!("expected `{CHECKPOINT_FORMAT}`")));
        }
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::validation(
                "checkpoint.version",
                format!("unsupported version {}", cp.version),
            ));
        }
        cp.schedule.validate()?;
        Ok(cp)
    }
}

/// Map between the optimizer's scaled parameter vector and a schedule.
#[derive(Debug, Clone)]
struct Parameterization {
    channels: Vec<usize>,
    knots: usize,
    duration: f64,
    scale: f64,
}

impl Parameterization {
    fn new(spec: &ManeuverSpec, knots: usize, scale: f64) -> Self {
        let channels = (0..6).filter(|c| spec.control_axes[c % 3]).collect();
        Self {
            channels,
            knots,
            duration: spec.duration(),
            scale,
        }
    }

    fn len(&self) -> usize {
        self.channels.len() * self.knots
    }

    fn schedule(&self, p: &DVector<f64>) -> ControlSchedule {
        let mut s = ControlSchedule::zero(self.duration, self.knots);
        for (n, &c) in self.channels.iter().enumerate() {
            let vals: Vec<f64> = (0..self.knots).map(|j| p[n * self.knots + j] * self.scale).collect();
            s.set_channel(c, &vals);
        }
        s
    }

    fn params(&self, s: &ControlSchedule) -> DVector<f64> {
        let mut p = DVector::zeros(self.len());
        for (n, &c) in self.channels.iter().enumerate() {
            for (j, v) in s.channel(c).iter().enumerate() {
                p[n * self.knots + j] = v / self.scale;
            }
        }
        p
    }
}

/// Feasible sequential quadratic programming. A Levenberg-Marquardt phase
/// first reaches the constraints; every later step solves a quadratic model
/// with a damped BFGS Hessian of the Lagrangian, is projected back onto the
/// constraints and is accepted only if it lowers the cost.
pub struct Optimizer<'a> {
    problem: &'a ControlProblem,
    options: OptimizerOptions,
    param: Parameterization,
    /// Hessian of the scaled cost `cost / scale^2`
    hessian: DMatrix<f64>,
    /// residual of the current iterate; attitude errors are kept on the log
    /// branch nearest to it so that crossing angle pi stays smooth
    branch: Option<DVector<f64>>,
    rollouts: usize,
}

/// Everything known at one accepted parameter point.
#[derive(Debug, Clone)]
struct Iterate {
    p: DVector<f64>,
    cost: f64,
    c: DVector<f64>,
    jac: DMatrix<f64>,
}

/// Replaces each attitude error `r` by whichever of `r` and `r -+ 2 pi r/|r|`
/// (the same rotation) lies nearest the matching block of `reference`.
fn align_branch(c: &mut DVector<f64>, reference: &DVector<f64>, offset: usize) {
    use std::f64::consts::TAU;
    for i in 0..3 {
        let o = offset + 3 * i;
        let r: Vec3 = c.fixed_rows::<3>(o).into_owned();
        let target: Vec3 = reference.fixed_rows::<3>(o).into_owned();
        let angle = r.norm();
        if angle == 0.0 {
            continue;
        }
        let unit = r / angle;
        let best = [r, r - unit * TAU, r + unit * TAU]
            .into_iter()
            .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
            .unwrap_or(r);
        c.fixed_rows_mut::<3>(o).copy_from(&best);
    }
}

/// Minimum-norm solution of `A x = b` for symmetric positive semi-definite `A`.
fn psd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eps = 1e-12 * a.diagonal().amax().max(f64::MIN_POSITIVE);
    a.svd(true, true).solve(b, eps).expect("svd solve with both factors")
}

impl<'a> Optimizer<'a> {
    pub fn new(problem: &'a ControlProblem, options: OptimizerOptions) -> Result<Self> {
        options.validate()?;
        let spec = &problem.maneuver;
        let param = Parameterization::new(spec, options.knots, options.control_scale);
        let basis = spline_basis(spec.duration(), options.knots, spec.h, spec.steps)?;
        let block = basis.transpose() * &basis * spec.h;
        let n = param.len();
        let mut hessian = DMatrix::zeros(n, n);
        for b in 0..param.channels.len() {
            let o = b * options.knots;
            hessian.view_mut((o, o), (options.knots, options.knots)).copy_from(&block);
        }
        Ok(Self {
            problem,
            options,
            param,
            hessian,
            branch: None,
            rollouts: 0,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.param.len()
    }

    pub fn schedule(&self, p: &DVector<f64>) -> ControlSchedule {
        self.param.schedule(p)
    }

    pub fn parameters(&self, s: &ControlSchedule) -> DVector<f64> {
        self.param.params(s)
    }

    /// Scaled cost `cost / scale^2` as a quadratic form.
    pub fn scaled_cost(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&(&self.hessian * p))
    }

    fn residual(&mut self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let reference = self.branch.clone();
        self.residual_near(p, reference.as_ref())
    }

    fn residual_near(&mut self, p: &DVector<f64>, reference: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        self.rollouts += 1;
        let mut c = self.problem.rollout(&self.param.schedule(p))?.residual;
        if let Some(r) = reference {
            align_branch(&mut c, r, self.problem.maneuver.displacement.iter().flatten().count());
        }
        Ok(c)
    }

    /// Terminal residual and its central-difference jacobian.
    pub fn constraint_jacobian(&mut self, p: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.residual(p)?;
        let step = self.options.fd_step;
        let mut jac = DMatrix::zeros(c.len(), p.len());
        for j in 0..p.len() {
            let mut q = p.clone();
            q[j] += step;
            let plus = self.residual_near(&q, Some(&c))?;
            q[j] = p[j] - step;
            let minus = self.residual_near(&q, Some(&c))?;
            jac.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        Ok((c, jac))
    }

    /// Value and gradient of `cost/scale^2 + penalty |c|^2`.
    pub fn penalty_objective(&mut self, p: &DVector<f64>, penalty: f64) -> Result<(f64, DVector<f64>)> {
        let (c, jac) = self.constraint_jacobian(p)?;
        let value = self.scaled_cost(p) + penalty * c.norm_squared();
        let grad = &self.hessian * p + jac.transpose() * &c * (2.0 * penalty);
        Ok((value, grad))
    }

    /// Largest gap between `penalty_objective`'s gradient and central
    /// differences of its value, relative to the largest gradient entry.
    pub fn penalty_gradient_gap(&mut self, p: &DVector<f64>, penalty: f64) -> Result<f64> {
        let (_, grad) = self.penalty_objective(p, penalty)?;
        let step = self.options.fd_step;
        let mut worst: f64 = 0.0;
        for j in 0..p.len() {
            let mut value = |q: &DVector<f64>| -> Result<f64> {
                let c = self.residual_near(q, None)?;
                Ok(self.scaled_cost(q) + penalty * c.norm_squared())
            };
            let mut q = p.clone();
            q[j] += step;
            let plus = value(&q)?;
            q[j] -= 2.0 * step;
            let minus = value(&q)?;
            worst = worst.max(((plus - minus) / (2.0 * step) - grad[j]).abs());
        }
        Ok(worst / grad.amax().max(f64::MIN_POSITIVE))
    }

    fn iterate(&mut self, p: DVector<f64>) -> Result<Iterate> {
        let (c, jac) = self.constraint_jacobian(&p)?;
        self.branch = Some(c.clone());
        Ok(Iterate {
            cost: self.scaled_cost(&p),
            p,
            c,
            jac,
        })
    }

    /// Least-squares multipliers and the relative stationarity they leave.
    fn stationarity(&self, it: &Iterate) -> (DVector<f64>, f64) {
        let gf = &self.hessian * &it.p;
        let lambda = psd_solve(&it.jac * it.jac.transpose(), &(&it.jac * &gf));
        let stat = (&gf - it.jac.transpose() * &lambda).amax() / gf.amax().max(1.0);
        (lambda, stat)
    }

    /// True when some unmet constraint has no first-order sensitivity.
    fn linearly_stuck(&self, it: &Iterate) -> bool {
        let scale = it.jac.norm().max(1.0);
        (0..it.c.len())
            .any(|i| it.c[i].abs() > self.options.constraint_tol && it.jac.row(i).norm() <= 1e-8 * scale)
    }

    /// Phase-shifted sinusoids on the third components of `u1` and `u2`.
    fn seed(&self) -> DVector<f64> {
        let n = self.options.knots;
        let mut p = DVector::zeros(self.param.len());
        for (b, &c) in self.param.channels.iter().enumerate() {
            if c % 3 != 2 {
                continue;
            }
            let phase = if c < 3 { 0.0 } else { std::f64::consts::FRAC_PI_2 };
            for j in 0..n {
                let s = 2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64;
                p[b * n + j] = self.options.seed_amplitude * (s + phase).sin();
            }
        }
        p
    }

    /// Levenberg-Marquardt on `|c|^2`, regularized in the cost metric, until
    /// the residual is below `target` or stops decreasing.
    fn restore(&mut self, mut it: Iterate, target: f64, max_steps: usize) -> Result<(Iterate, usize)> {
        let mut nu = 1e-3;
        let mut steps = 0;
        while it.c.amax() > target && steps < max_steps {
            let jtj = it.jac.transpose() * &it.jac;
            let jtc = it.jac.transpose() * &it.c;
            let mut improved = false;
            for _ in 0..20 {
                let a = &jtj + &self.hessian * nu;
                let Some(ch) = a.cholesky() else {
                    nu *= 10.0;
                    continue;
                };
                let d = -ch.solve(&jtc);
                let trial = &it.p + &d;
                if let Ok(c) = self.residual(&trial) {
                    if c.norm() < it.c.norm() {
                        it = self.iterate(trial)?;
                        nu = (nu / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                }
                nu *= 4.0;
            }
            steps += 1;
            if !improved {
                break;
            }
        }
        Ok((it, steps))
    }

    fn checkpoint(&self, iteration: usize, radius: f64, lambda: &DVector<f64>, it: &Iterate, h: &DMatrix<f64>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            iteration,
            radius,
            multipliers: lambda.iter().copied().collect(),
            schedule: self.param.schedule(&it.p),
            hessian: Some(h.row_iter().map(|r| r.iter().copied().collect()).collect()),
        }
    }

    /// Runs from zero controls (or a checkpoint), calling `on_iteration`
    /// after every accepted step.
    pub fn run<F>(&mut self, resume: Option<&Checkpoint>, mut on_iteration: F) -> Result<OptimizationResult>
    where
        F: FnMut(&Checkpoint, &IterationRecord),
    {
        let opts = self.options.clone();
        let m = self.problem.maneuver.residual_len();
        let n = self.param.len();
        let mut seeded = false;
        let (mut it, mut lambda, mut radius, mut h, mut iteration) = match resume {
            Some(cp) => {
                if cp.schedule.knot_count() != opts.knots || cp.multipliers.len() != m {
                    return Err(Error::validation("checkpoint", "does not match the problem dimensions"));
                }
                let h = match &cp.hessian {
                    Some(rows) if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                        DMatrix::from_fn(n, n, |i, j| rows[i][j])
                    }
                    Some(_) => return Err(Error::validation("checkpoint.hessian", "wrong dimensions")),
                    None => self.hessian.clone(),
                };
                (
                    self.iterate(self.param.params(&cp.schedule))?,
                    DVector::from_vec(cp.multipliers.clone()),
                    cp.radius.clamp(MIN_RADIUS, MAX_RADIUS),
                    h,
                    cp.iteration,
                )
            }
            None => {
                let mut it = self.iterate(DVector::zeros(n))?;
                if opts.seed_amplitude > 0.0 && self.linearly_stuck(&it) {
                    it = self.iterate(self.seed())?;
                    seeded = true;
                }
                (it, DVector::zeros(m), opts.initial_radius, self.hessian.clone(), 0)
            }
        };

        // trial points must stay inside this tube around the constraints
        let tube = 1e-3 * opts.constraint_tol;
        let (restored, restoration_steps) = self.restore(it, tube, opts.restoration_steps)?;
        it = restored;
        let mut log = Vec::new();
        let mut message = String::from("iteration limit reached");
        let mut converged = false;
        loop {
            let (ls_lambda, stat) = self.stationarity(&it);
            if it.c.amax() <= opts.constraint_tol && stat <= opts.stationarity_tol {
                converged = true;
                message = String::from("converged");
                lambda = ls_lambda;
                break;
            }
            if it.c.amax() > tube {
                message = String::from("could not reach the terminal constraints");
                break;
            }
            if iteration >= opts.max_iterations {
                break;
            }

            // QP: min 1/2 d^T H d + gf^T d  s.t.  C d = -c
            let gf = &self.hessian * &it.p;
            let chol = match h.clone().cholesky() {
                Some(ch) => ch,
                None => {
                    h = self.hessian.clone();
                    h.clone().cholesky().expect("cost Hessian is positive definite")
                }
            };
            let hinv_gf = chol.solve(&gf);
            let hinv_ct = chol.solve(&it.jac.transpose());
            let schur = (&it.jac * &hinv_ct).svd(true, true);
            let eps = 1e-12 * schur.singular_values.amax().max(f64::MIN_POSITIVE);
            let schur_solve = |b: &DVector<f64>| schur.solve(b, eps).expect("svd solve with both factors");
            let mu = schur_solve(&(&it.jac * &hinv_gf - &it.c));
            let mut d = &hinv_ct * &mu - hinv_gf;
            let full = d.amax();
            if full > radius {
                d *= radius / full;
            }
            let slope = gf.dot(&d);

            // backtrack along d, projecting each trial onto the constraints
            // with the Jacobian held fixed
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha * d.amax() >= MIN_RADIUS {
                let mut trial = &it.p + &d * alpha;
                let mut used = 0;
                let mut feasible = None;
                let mut last = f64::INFINITY;
                while let Ok(c) = self.residual(&trial) {
                    let size = c.amax();
                    if size <= tube {
                        feasible = Some(c);
                        break;
                    }
                    if used == opts.corrections || !(size < last) {
                        break;
                    }
                    last = size;
                    trial -= &hinv_ct * schur_solve(&c);
                    used += 1;
                }
                if let Some(c) = feasible {
                    // compare Lagrangians so that the residual left inside the
                    // tube does not masquerade as a change in cost
                    let value = self.scaled_cost(&trial) - mu.dot(&c);
                    if value <= it.cost - mu.dot(&it.c) + 1e-4 * alpha * slope.min(0.0) {
                        accepted = Some((trial, used));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((p_new, used)) = accepted else {
                if h != self.hessian {
                    // the quasi-Newton model may be stale; retry from the cost Hessian
                    h = self.hessian.clone();
                    radius = radius.max(opts.initial_radius);
                    continue;
                }
                message = String::from("line search failed");
                break;
            };
            let taken = alpha * d.amax();
            radius = if alpha == 1.0 && full > radius {
                2.0 * radius
            } else if alpha < 1.0 {
                taken.max(MIN_RADIUS)
            } else {
                radius
            }
            .min(MAX_RADIUS);
            let next = self.iterate(p_new)?;

            // damped BFGS on the Lagrangian Hessian
            let s = &next.p - &it.p;
            let y = (&self.hessian * &s) - (&next.jac - &it.jac).transpose() * &mu;
            let hs = &h * &s;
            let shs = s.dot(&hs);
            let sy = s.dot(&y);
            if shs > 0.0 {
                let y = if sy < 0.2 * shs {
                    let theta = 0.8 * shs / (shs - sy);
                    &y * theta + &hs * (1.0 - theta)
                } else {
                    y
                };
                h += &y * y.transpose() / s.dot(&y) - &hs * hs.transpose() / shs;
                h = (&h + h.transpose()) * 0.5;
            }

            iteration += 1;
            let unit = opts.control_scale * opts.control_scale;
            let record = IterationRecord {
                iteration,
                previous_cost: it.cost * unit,
                cost: next.cost * unit,
                residual_inf: next.c.amax(),
                stationarity: 0.0,
                step_length: alpha,
                corrections: used,
                radius,
            };
            it = next;
            let (ls_lambda, stat) = self.stationarity(&it);
            lambda = ls_lambda;
            let record = IterationRecord {
                stationarity: stat,
                ..record
            };
            on_iteration(&self.checkpoint(iteration, radius, &lambda, &it, &h), &record);
            log.push(record);
        }

        let schedule = self.param.schedule(&it.p);
        let final_rollout = self.problem.rollout(&schedule)?;
        let (_, stat) = self.stationarity(&it);
        Ok(OptimizationResult {
            cost: final_rollout.cost,
            residual_inf: final_rollout.residual.amax(),
            residual: final_rollout.residual,
            stationarity: stat,
            converged,
            message,
            multipliers: lambda,
            iterations: log,
            restoration_steps,
            rollouts: self.rollouts,
            seeded,
            schedule,
        })
    }
}

/// Optimizes from zero controls with no checkpointing.
pub fn optimize(problem: &ControlProblem, options: OptimizerOptions) -> Result<OptimizationResult> {
    Optimizer::new(problem, options)?.run(None, |_, _| {})
}
