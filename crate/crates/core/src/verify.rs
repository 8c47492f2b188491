//! Runtime invariant suite behind `fluid-lgvi verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::body::{BodyVelocity, Configuration, ControlMoment, SystemParams, Vec12};
use crate::config::RunConfig;
use crate::dynamics::{rk4_integrate, ContinuousState};
use crate::error::Result;
use crate::integrator::{DiscreteStep, Integrator};
use crate::optimal::Optimizer;
use crate::so3::{exp_so3, log_so3, NewtonOptions, Vec3};
use crate::trajectory::{energy_band, ConservationMonitor};

/// Length of the unforced run behind the conservation checks.
pub const CONSERVATION_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// pass condition, human readable
    pub requirement: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            requirement: format!("<= {limit:e}"),
            passed: measured <= limit,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:<28} {:>12.4e}  ({})", self.name, self.measured, self.requirement)
    }
}

/// Random body velocity with every component uniform in `[-scale, scale]`.
pub fn random_velocity<R: Rng>(rng: &mut R, scale: f64) -> BodyVelocity {
    BodyVelocity::from_vector(&Vec12::from_fn(|_, _| rng.random_range(-scale..=scale)))
}

/// Terminal configuration distance `sum_i |log(R_i^T R_i')| + |x - x'|`.
pub fn configuration_error(a: &Configuration, b: &Configuration) -> f64 {
    let rot: f64 = (0..3).map(|i| log_so3(&(a.rot[i].inverse() * b.rot[i])).norm()).sum();
    rot + (a.x - b.x).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    /// least-squares slope of `log error` against `log h`
    pub slope: f64,
}

/// Unforced runs over `horizon` at each step size, compared with RK4 at a
/// tenth of the smallest step.
pub fn convergence_order(
    params: &SystemParams,
    g0: &Configuration,
    xi0: &BodyVelocity,
    step_sizes: &[f64],
    horizon: f64,
) -> Result<OrderFit> {
    let h_ref = step_sizes.iter().copied().fold(f64::INFINITY, f64::min) / 10.0;
    let ref_steps = (horizon / h_ref).round() as usize;
    let start = ContinuousState { config: *g0, xi: *xi0 };
    let reference = rk4_integrate(params, &start, |_| ControlMoment::zero(), 0.0, h_ref, ref_steps)?;
    let mut errors = Vec::new();
    for &h in step_sizes {
        let steps = (horizon / h).round() as usize;
        let integ = Integrator::new(params.clone(), h, NewtonOptions::default())?;
        let (g, _) = integ.simulate(g0, xi0, steps, |_| ControlMoment::zero(), |_| {})?;
        errors.push(configuration_error(&reference.config, &g));
    }
    let xs: Vec<f64> = step_sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(OrderFit {
        step_sizes: step_sizes.to_vec(),
        errors,
        slope: sxy / sxx,
    })
}

/// Relative gap between the analytic Newton jacobian and central differences
/// at a random step.
pub fn newton_jacobian_gap<R: Rng>(integ: &Integrator, g: &Configuration, rng: &mut R) -> f64 {
    let h = integ.step_size();
    let xi = random_velocity(rng, 1.0);
    let f = DiscreteStep::from_velocity(&xi, h);
    let (_, jac) = integ.scaled_momentum_before_with_jacobian(g, &f);
    let step = 1e-7;
    let mut worst: f64 = 0.0;
    for j in 0..12 {
        let mut d = Vec12::zeros();
        d[j] = step;
        let fd = (integ.scaled_momentum_before(g, &f.perturbed(&d)) - integ.scaled_momentum_before(g, &f.perturbed(&-d)))
            / (2.0 * step);
        worst = worst.max((jac.column(j) - fd).norm());
    }
    worst / jac.norm().max(f64::MIN_POSITIVE)
}

/// Runs every invariant on the system in `cfg`; `seed` drives the random
/// initial velocities and schedules.
pub fn run_suite(cfg: &RunConfig, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = cfg.system_params()?;
    let integ = cfg.integrator()?;
    let g0 = cfg.initial_configuration()?;
    let mut xi0 = cfg.initial_velocity()?;
    if xi0.to_vector().norm() == 0.0 {
        xi0 = random_velocity(&mut rng, 0.5);
    }
    let mut checks = Vec::new();

    let mut monitor = ConservationMonitor::new();
    integ.simulate(&g0, &xi0, CONSERVATION_STEPS, |_| ControlMoment::zero(), |s| monitor.observe(s))?;
    let sum = monitor.summary();
    checks.push(Check::at_most("orthogonality |R^T R - I|_F", sum.max_orthogonality_error, 1e-12));
    checks.push(Check::at_most("linear momentum drift", sum.max_linear_drift, 1e-10));
    checks.push(Check::at_most("angular momentum drift", sum.max_angular_drift, 1e-9));
    let early = energy_band(monitor.energy(), 0.0, 0.1).max(1e-15);
    let late = energy_band(monitor.energy(), 0.9, 1.0);
    checks.push(Check {
        name: "energy band growth".into(),
        measured: late / early,
        requirement: "last/first 10% <= 2".into(),
        passed: late <= 2.0 * early,
    });

    // controlled: internal moments leave both momenta untouched
    let u = ControlMoment {
        u1: Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0)),
        u2: Vec3::from_fn(|_, _| rng.random_range(-1.0..=1.0)),
    };
    let h = integ.step_size();
    let mut controlled = ConservationMonitor::new();
    let wave = |k: usize| {
        let s = (k as f64 * h * 5.0).sin();
        ControlMoment { u1: u.u1 * s, u2: u.u2 * s }
    };
    integ.simulate(&g0, &xi0, cfg.steps()?, wave, |s| controlled.observe(s))?;
    let sum = controlled.summary();
    checks.push(Check::at_most("controlled linear drift", sum.max_linear_drift, 1e-10));
    checks.push(Check::at_most("controlled angular drift", sum.max_angular_drift, 1e-9));

    let order = convergence_order(&params, &g0, &xi0, &[4e-3, 2e-3, 1e-3], 0.2)?;
    checks.push(Check {
        name: "convergence order".into(),
        measured: order.slope,
        requirement: "2.0 +- 0.2".into(),
        passed: (order.slope - 2.0).abs() <= 0.2,
    });

    let g = Configuration {
        rot: [0, 1, 2].map(|_| exp_so3(&Vec3::from_fn(|_, _| rng.random_range(-2.0..=2.0)))),
        x: g0.x,
    };
    checks.push(Check::at_most("Newton jacobian vs FD", newton_jacobian_gap(&integ, &g, &mut rng), 1e-6));

    if cfg.maneuver.is_some() {
        let problem = cfg.control_problem()?;
        let mut opt = Optimizer::new(&problem, cfg.optimizer.clone())?;
        let p = nalgebra::DVector::from_fn(opt.parameter_count(), |_, _| rng.random_range(-0.05..=0.05));
        checks.push(Check::at_most("optimizer gradient vs FD", opt.penalty_gradient_gap(&p, 1.0)?, 1e-5));
    }
    Ok(checks)
}
