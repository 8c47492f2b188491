//! Terminal configuration error against a fine RK4 reference for a few step
//! sizes, and the fitted order.
//!
//! `cargo run --release --example convergence_order [horizon]`

use fluid_lgvi::config::RunConfig;
use fluid_lgvi::verify::convergence_order;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let horizon: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let cfg = RunConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/free_spin.toml")))?;
    let params = cfg.system_params()?;
    let g0 = cfg.initial_configuration()?;
    let xi0 = cfg.initial_velocity()?;
    let steps = [8e-3, 4e-3, 2e-3, 1e-3, 5e-4];

    let fit = convergence_order(&params, &g0, &xi0, &steps, horizon)?;
    println!("horizon {horizon} s");
    for (h, e) in fit.step_sizes.iter().zip(&fit.errors) {
        println!("  h = {h:.1e}  error {e:.4e}");
    }
    println!("  slope {:.3}", fit.slope);

    Ok(())
}
