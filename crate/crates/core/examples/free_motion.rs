//! Unforced motion from the free-spin fixture: momenta, energy and the
//! rotation matrices over a long run, with RK4 alongside for contrast.
//!
//! `cargo run --release --example free_motion [config] [steps]`

use std::path::PathBuf;

use fluid_lgvi::body::{kinetic_energy, momentum, momentum_map, ControlMoment};
use fluid_lgvi::config::RunConfig;
use fluid_lgvi::dynamics::{rk4_integrate, ContinuousState};
use fluid_lgvi::trajectory::{energy_band, ConservationMonitor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/free_spin.toml")));
    let cfg = RunConfig::load(&path)?;
    let steps = match args.next() {
        Some(s) => s.parse()?,
        None => cfg.steps()?,
    };
    let integ = cfg.integrator()?;
    let params = cfg.system_params()?;
    let (g0, xi0) = (cfg.initial_configuration()?, cfg.initial_velocity()?);
    let h = integ.step_size();

    let mut monitor = ConservationMonitor::new();
    let clock = std::time::Instant::now();
    integ.simulate(&g0, &xi0, steps, |_| ControlMoment::zero(), |s| monitor.observe(s))?;
    let elapsed = clock.elapsed().as_secs_f64();
    let s = monitor.summary();
    println!("{steps} steps of h = {h} in {elapsed:.2} s");
    println!("  max |R^T R - I|_F     {:.2e}", s.max_orthogonality_error);
    println!("  linear momentum drift {:.2e}", s.max_linear_drift);
    println!("  angular momentum drift {:.2e}", s.max_angular_drift);
    println!(
        "  energy error in [{:.3e}, {:.3e}], band first/last tenth {:.3e} / {:.3e}",
        s.energy_error_min,
        s.energy_error_max,
        energy_band(monitor.energy(), 0.0, 0.1),
        energy_band(monitor.energy(), 0.9, 1.0)
    );

    let start = ContinuousState { config: g0, xi: xi0 };
    let end = rk4_integrate(&params, &start, |_| ControlMoment::zero(), 0.0, h, steps)?;
    let p0 = momentum_map(&g0, &momentum(&params, &g0, &xi0));
    let p1 = momentum_map(&end.config, &momentum(&params, &end.config, &end.xi));
    let rot_err = end.config.rot.iter().map(|r| (r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity()).norm()).fold(0.0, f64::max);
    println!("RK4 over the same run:");
    println!("  terminal |R^T R - I|_F {rot_err:.2e}");
    println!("  linear momentum drift {:.2e}", (p1.0 - p0.0).norm());
    println!("  angular momentum drift {:.2e}", (p1.1 - p0.1).norm());
    println!(
        "  terminal energy error {:.3e}",
        kinetic_energy(&params, &end.config, &end.xi) - kinetic_energy(&params, &g0, &xi0)
    );
    Ok(())
}
