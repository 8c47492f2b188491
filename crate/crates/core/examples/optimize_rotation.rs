//! Rest-to-rest half turn of every body about e1, and how the angular
//! momentum about e1 splits between the bodies and the fluid.
//!
//! `cargo run --release --example optimize_rotation [config] [schedule.toml]`
//!
//! With a schedule (as written by `fluid-lgvi optimize`) the optimizer is
//! skipped and the schedule is only replayed.

use std::path::PathBuf;

use fluid_lgvi::config::RunConfig;
use fluid_lgvi::control::ControlSchedule;
use fluid_lgvi::optimal::Optimizer;
use fluid_lgvi::so3::log_so3;
use fluid_lgvi::trajectory::rigid_momenta;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/case_ii_desk.toml")));
    let cfg = RunConfig::load(&path)?;
    let problem = cfg.control_problem()?;
    let schedule = match args.next() {
        Some(file) => toml::from_str::<ControlSchedule>(&std::fs::read_to_string(file)?)?,
        None => {
            let mut opt = Optimizer::new(&problem, cfg.optimizer.clone())?;
            let result = opt.run(None, |_, rec| {
                if rec.iteration % 10 == 0 {
                    println!("iter {:>3}  cost {:>11.4e}  |c| {:>9.2e}  stationarity {:>9.2e}", rec.iteration, rec.cost, rec.residual_inf, rec.stationarity);
                }
            })?;
            println!("{}: cost {:.6e}, |residual|_inf {:.2e}", result.message, result.cost, result.residual_inf);
            result.schedule
        }
    };

    let rigid = cfg.system_params()?.rigid_only().ok_or("config has no [params.rigid] section")?;
    let mut turned = [0.0f64; 3];
    let mut previous = None;
    let (mut total, mut bodies, mut n) = (Vec::new(), 0.0, 0usize);
    problem.trajectory(&schedule, |s| {
        if let Some(prev) = &previous {
            let prev: &fluid_lgvi::body::Configuration = prev;
            for (i, a) in turned.iter_mut().enumerate() {
                // spatial increment R_{k+1} R_k^T
                *a += log_so3(&(s.config.rot[i] * prev.rot[i].inverse())).x;
            }
        }
        previous = Some(s.config);
        let (_, w) = rigid_momenta(&rigid, s);
        total.push(s.angular_momentum.x);
        bodies += w.x;
        n += 1;
    })?;
    let bodies = bodies / n as f64;
    let total_max = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("turned about e1 (rad): {:.4} {:.4} {:.4}", turned[0], turned[1], turned[2]);
    println!("angular momentum about e1: total max |.| {total_max:.2e}, mean bodies {bodies:.5}, mean fluid {:.5}", -bodies);
    let direction = turned[0].signum();
    println!("mean body share along the direction of turning: {:.5}", direction * bodies);
    Ok(())
}
