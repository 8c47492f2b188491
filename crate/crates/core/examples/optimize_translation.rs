//! Rest-to-rest forward translation by 2 m along e1 using joint moments about e3.
//!
//! `cargo run --release --example optimize_translation [config]`

use std::path::PathBuf;

use fluid_lgvi::config::RunConfig;
use fluid_lgvi::optimal::Optimizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/case_i_desk.toml")));
    let cfg = RunConfig::load(&path)?;
    let problem = cfg.control_problem()?;
    let mut opt = Optimizer::new(&problem, cfg.optimizer.clone())?;
    let start = std::time::Instant::now();
    let result = opt.run(None, |_, rec| {
        println!(
            "iter {:>3}  cost {:>12.5e}  |c| {:>9.3e}  stationarity {:>9.3e}  step {:.3}  corrections {}",
            rec.iteration, rec.cost, rec.residual_inf, rec.stationarity, rec.step_length, rec.corrections
        );
    })?;
    println!("{} after {:.1} s, {} restoration steps, {} rollouts", result.message, start.elapsed().as_secs_f64(), result.restoration_steps, result.rollouts);
    println!("cost {:.6e} N^2 m^2 s, |residual|_inf {:.3e}, stationarity {:.3e}", result.cost, result.residual_inf, result.stationarity);
    let rollout = problem.rollout(&result.schedule)?;
    println!("terminal x = {:.6?}", rollout.terminal.x.as_slice());
    for (j, (u1, u2)) in result.schedule.u1.iter().zip(&result.schedule.u2).enumerate() {
        println!("knot {j:>2}: u1 = {:>10.3} u2 = {:>10.3}", u1[2], u2[2]);
    }
    Ok(())
}
