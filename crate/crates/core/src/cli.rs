//! `fluid-lgvi simulate | optimize | verify`.
//!
//! Exit codes: 0 success, 2 unreadable or malformed config, 3 invalid
//! value, 4 integrator failure, 5 optimizer missed the residual tolerance,
//! 6 an invariant failed, 1 anything else (I/O).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::body::ControlMoment;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::optimal::{Checkpoint, IterationRecord, OptimizationResult, Optimizer};
use crate::trajectory::{energy_band, ConservationMonitor, ConservationSummary, TrajectoryWriter};
use crate::verify::{run_suite, Check};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_INTEGRATOR: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } => EXIT_PARSE,
        Error::Validation { .. } | Error::NotSkew { .. } => EXIT_VALIDATION,
        Error::NewtonDiverged { .. } | Error::SingularJacobian | Error::IllConditionedInertia | Error::Step { .. } => {
            EXIT_INTEGRATOR
        }
        Error::Io(_) => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fluid-lgvi", version, about = "Ball-jointed rigid bodies in a perfect fluid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured system and write its trajectory.
    Simulate(RunArgs),
    /// Optimize joint moments for the configured maneuver.
    Optimize(RunArgs),
    /// Run the invariant suite on the configured system.
    Verify(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// output directory; overrides `output.dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// seed for the randomized checks of `verify`
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn out_dir(cfg: &RunConfig, args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub steps: usize,
    pub h: f64,
    pub rows: usize,
    #[serde(flatten)]
    pub conservation: ConservationSummary,
    /// largest `|E - E(0)|` over the first and last tenth of the run
    pub energy_band_first: f64,
    pub energy_band_last: f64,
}

/// Writes `trajectory.csv` and `summary.toml` under `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateReport> {
    let integ = cfg.integrator()?;
    let g0 = cfg.initial_configuration()?;
    let xi0 = cfg.initial_velocity()?;
    let (h, steps) = (cfg.step_size()?, cfg.steps()?);
    let controls = match &cfg.controls {
        Some(s) => s.sample(h, steps)?,
        None => vec![ControlMoment::zero(); steps + 1],
    };
    fs::create_dir_all(out)?;
    let mut writer = TrajectoryWriter::new(BufWriter::new(File::create(out.join("trajectory.csv"))?), h)?;
    let mut monitor = ConservationMonitor::new();
    let mut write_err = None;
    integ.simulate(&g0, &xi0, steps, |k| controls[k], |s| {
        monitor.observe(s);
        if write_err.is_none() {
            write_err = writer.write(s).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let rows = writer.rows();
    writer.finish()?;
    let report = SimulateReport {
        steps,
        h,
        rows,
        conservation: monitor.summary().clone(),
        energy_band_first: energy_band(monitor.energy(), 0.0, 0.1),
        energy_band_last: energy_band(monitor.energy(), 0.9, 1.0),
    };
    write_toml(&out.join("summary.toml"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub converged: bool,
    pub message: String,
    /// N^2 m^2 s
    pub cost: f64,
    pub residual_inf: f64,
    pub stationarity: f64,
    pub residual: BTreeMap<String, f64>,
    pub terminal_x: [f64; 3],
    pub restoration_steps: usize,
    pub rollouts: usize,
    pub seeded: bool,
    pub iterations: Vec<IterationRecord>,
}

impl OptimizeReport {
    fn new(result: &OptimizationResult, labels: &[String], terminal_x: [f64; 3]) -> Self {
        Self {
            converged: result.converged,
            message: result.message.clone(),
            cost: result.cost,
            residual_inf: result.residual_inf,
            stationarity: result.stationarity,
            residual: labels.iter().cloned().zip(result.residual.iter().copied()).collect(),
            terminal_x,
            restoration_steps: result.restoration_steps,
            rollouts: result.rollouts,
            seeded: result.seeded,
            iterations: result.iterations.clone(),
        }
    }
}

/// Optimizes, checkpointing every iteration, then writes `result.toml`,
/// `schedule.toml` and `trajectory.csv` under `out`. Resumes from
/// `output.checkpoint` when that file exists.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeReport> {
    let problem = cfg.control_problem()?;
    fs::create_dir_all(out)?;
    let checkpoint_path = cfg.output.checkpoint.clone();
    let resume = match &checkpoint_path {
        Some(p) if p.exists() => Some(Checkpoint::from_toml(&fs::read_to_string(p)?, p)?),
        _ => None,
    };
    let save_to = checkpoint_path.unwrap_or_else(|| out.join("checkpoint.toml"));
    let mut opt = Optimizer::new(&problem, cfg.optimizer.clone())?;
    let mut save_err = None;
    let result = opt.run(resume.as_ref(), |cp, rec| {
        eprintln!(
            "iter {:>4}  cost {:.6e}  |c| {:.3e}  stationarity {:.3e}  step {:.3}",
            rec.iteration, rec.cost, rec.residual_inf, rec.stationarity, rec.step_length
        );
        if let Err(e) = fs::write(&save_to, cp.to_toml()) {
            save_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = save_err {
        return Err(e.into());
    }

    let h = problem.maneuver.h;
    let mut writer = TrajectoryWriter::new(BufWriter::new(File::create(out.join("trajectory.csv"))?), h)?;
    let mut write_err = None;
    let rollout = problem.trajectory(&result.schedule, |s| {
        if write_err.is_none() {
            write_err = writer.write(s).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    writer.finish()?;
    write_toml(&out.join("schedule.toml"), &result.schedule)?;
    let report = OptimizeReport::new(&result, &problem.maneuver.residual_labels(), rollout.terminal.x.into());
    write_toml(&out.join("result.toml"), &report)?;
    Ok(report)
}

pub fn cmd_verify(cfg: &RunConfig, seed: u64) -> Result<Vec<Check>> {
    run_suite(cfg, seed)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let (Command::Simulate(args) | Command::Optimize(args) | Command::Verify(args)) = &cli.command;
    let cfg = RunConfig::load(&args.config)?;
    let out = out_dir(&cfg, args);
    match &cli.command {
        Command::Simulate(_) => {
            let r = cmd_simulate(&cfg, &out)?;
            let c = &r.conservation;
            println!("wrote {} rows to {}", r.rows, out.join("trajectory.csv").display());
            println!("max |p_x - p_x(0)|         {:.3e}", c.max_linear_drift);
            println!("max |p_Omega - p_Omega(0)| {:.3e}", c.max_angular_drift);
            println!("energy error band          [{:.3e}, {:.3e}]", c.energy_error_min, c.energy_error_max);
            println!("max |R^T R - I|_F          {:.3e}", c.max_orthogonality_error);
            Ok(EXIT_OK)
        }
        Command::Optimize(_) => {
            let r = cmd_optimize(&cfg, &out)?;
            println!("{}: cost {:.6e} N^2 m^2 s, |residual|_inf {:.3e}, stationarity {:.3e}", r.message, r.cost, r.residual_inf, r.stationarity);
            println!("terminal x = [{:.6}, {:.6}, {:.6}]", r.terminal_x[0], r.terminal_x[1], r.terminal_x[2]);
            if r.residual_inf <= cfg.optimizer.constraint_tol {
                Ok(EXIT_OK)
            } else {
                for (label, v) in &r.residual {
                    println!("  {label:>12} {v:+.3e}");
                }
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Verify(args) => {
            let checks = cmd_verify(&cfg, args.seed)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
