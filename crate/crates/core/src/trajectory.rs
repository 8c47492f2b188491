//! Trajectory CSV output and conservation diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::body::{momentum, momentum_map, SystemParams};
use crate::error::{Error, Result};
use crate::integrator::StepSample;
use crate::so3::Vec3;

/// Column names, in row order.
pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=3).map(|j| format!("x{j}")));
    for i in 0..3 {
        for r in 1..=3 {
            cols.extend((1..=3).map(|c| format!("R{i}_{r}{c}")));
        }
    }
    for block in ["Omega0", "xdot", "Omega1", "Omega2"] {
        cols.extend((1..=3).map(|j| format!("{block}_{j}")));
    }
    cols.extend((1..=3).map(|j| format!("p_x_{j}")));
    cols.extend((1..=3).map(|j| format!("p_Omega_{j}")));
    cols.push("energy".into());
    cols.extend((1..=3).map(|j| format!("u1_{j}")));
    cols.extend((1..=3).map(|j| format!("u2_{j}")));
    cols
}

/// One CSV row. The velocity columns hold the discrete proxy
/// `(log F_i / h, dx / h)` of the step leaving `t_k`.
pub fn csv_values(sample: &StepSample, h: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(56);
    row.push(sample.t);
    row.extend(sample.config.x.iter());
    for r in &sample.config.rot {
        let m = r.matrix();
        for i in 0..3 {
            row.extend((0..3).map(|j| m[(i, j)]));
        }
    }
    row.extend(sample.step.velocity_proxy(h).to_vector().iter());
    row.extend(sample.linear_momentum.iter());
    row.extend(sample.angular_momentum.iter());
    row.push(sample.energy);
    row.extend(sample.control.u1.iter());
    row.extend(sample.control.u2.iter());
    row
}

/// Streams samples to CSV with 17 significant digits.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
    h: f64,
    rows: usize,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W, h: f64) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(csv_header()).map_err(csv_error)?;
        Ok(Self { inner, h, rows: 0 })
    }

    pub fn write(&mut self, sample: &StepSample) -> Result<()> {
        let row = csv_values(sample, self.h);
        self.inner
            .write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(csv_error)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Running extremes of the conserved quantities along a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub samples: usize,
    pub initial_linear_momentum: [f64; 3],
    pub initial_angular_momentum: [f64; 3],
    pub initial_energy: f64,
    /// `max_k |p_x(t_k) - p_x(0)|`
    pub max_linear_drift: f64,
    /// `max_k |p_Omega(t_k) - p_Omega(0)|`
    pub max_angular_drift: f64,
    /// extremes of `E(t_k) - E(0)`
    pub energy_error_min: f64,
    pub energy_error_max: f64,
    pub max_orthogonality_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConservationMonitor {
    summary: ConservationSummary,
    energy: Vec<f64>,
}

impl ConservationMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, s: &StepSample) {
        let sum = &mut self.summary;
        if sum.samples == 0 {
            sum.initial_linear_momentum = s.linear_momentum.into();
            sum.initial_angular_momentum = s.angular_momentum.into();
            sum.initial_energy = s.energy;
        }
        sum.samples += 1;
        let px0 = Vec3::from(sum.initial_linear_momentum);
        let pw0 = Vec3::from(sum.initial_angular_momentum);
        sum.max_linear_drift = sum.max_linear_drift.max((s.linear_momentum - px0).norm());
        sum.max_angular_drift = sum.max_angular_drift.max((s.angular_momentum - pw0).norm());
        let de = s.energy - sum.initial_energy;
        sum.energy_error_min = sum.energy_error_min.min(de);
        sum.energy_error_max = sum.energy_error_max.max(de);
        sum.max_orthogonality_error = sum.max_orthogonality_error.max(s.config.max_orthogonality_error());
        self.energy.push(s.energy);
    }

    pub fn summary(&self) -> &ConservationSummary {
        &self.summary
    }

    /// Energy history, one entry per sample.
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }
}

/// Largest `|E - E(0)|` over the samples whose index falls in `[from, to)`
/// as fractions of the run.
pub fn energy_band(energy: &[f64], from: f64, to: f64) -> f64 {
    let n = energy.len();
    let (a, b) = ((from * n as f64) as usize, ((to * n as f64) as usize).min(n));
    let e0 = energy.first().copied().unwrap_or(0.0);
    energy[a..b].iter().fold(0.0, |m, e| m.max((e - e0).abs()))
}

/// Momenta carried by the bodies alone, `(p_x, p_Omega)` of `I_rigid xi`.
pub fn rigid_momenta(rigid: &SystemParams, sample: &StepSample) -> (Vec3, Vec3) {
    momentum_map(&sample.config, &momentum(rigid, &sample.config, &sample.velocity))
}
