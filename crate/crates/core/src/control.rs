//! Spline-parameterized joint moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::body::ControlMoment;
use crate::error::{Error, Result};
use crate::so3::Vec3;

/// Natural cubic spline through `values` at uniformly spaced knots on `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    spacing: f64,
    values: Vec<f64>,
    /// second derivatives at the knots
    curvature: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(duration: f64, values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::validation("controls.knots", "need at least 2 knots"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::validation("controls.duration", "must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("controls.knots", "values must be finite"));
        }
        let spacing = duration / (n - 1) as f64;
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations, uniform spacing
            let m = n - 2;
            let mut diag = vec![4.0; m];
            let mut rhs: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (spacing * spacing))
                .collect();
            for i in 1..m {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                curvature[i + 1] = (rhs[i] - curvature[i + 2]) / diag[i];
            }
        }
        Ok(Self {
            spacing,
            values: values.to_vec(),
            curvature,
        })
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let n = self.values.len();
        let s = (t / self.spacing).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let a = (i + 1) as f64 - s;
        let b = s - i as f64;
        let h2 = self.spacing * self.spacing / 6.0;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[i + 1]) * h2
    }
}

/// Joint moments `u1, u2` (N m) given at uniformly spaced knots over `[0, duration]`,
/// interpolated per component by natural cubic splines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub duration: f64,
    pub u1: Vec<[f64; 3]>,
    pub u2: Vec<[f64; 3]>,
}

impl ControlSchedule {
    pub fn zero(duration: f64, knots: usize) -> Self {
        Self {
            duration,
            u1: vec![[0.0; 3]; knots],
            u2: vec![[0.0; 3]; knots],
        }
    }

    pub fn knot_count(&self) -> usize {
        self.u1.len()
    }

    pub fn knot_times(&self) -> Vec<f64> {
        let n = self.knot_count();
        (0..n).map(|j| self.duration * j as f64 / (n - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u1.len() != self.u2.len() {
            return Err(Error::validation("controls.u2", "must have as many knots as u1"));
        }
        if self.u1.len() < 2 {
            return Err(Error::validation("controls.u1", "need at least 2 knots"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation("controls.duration", "must be positive"));
        }
        for (name, knots) in [("controls.u1", &self.u1), ("controls.u2", &self.u2)] {
            if knots.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::validation(name, "values must be finite"));
            }
        }
        Ok(())
    }

    /// Knot values of channel `c` (0..6 for u1x, u1y, u1z, u2x, u2y, u2z).
    pub fn channel(&self, c: usize) -> Vec<f64> {
        let knots = if c < 3 { &self.u1 } else { &self.u2 };
        knots.iter().map(|k| k[c % 3]).collect()
    }

    pub fn set_channel(&mut self, c: usize, values: &[f64]) {
        let knots = if c < 3 { &mut self.u1 } else { &mut self.u2 };
        for (k, v) in knots.iter_mut().zip(values) {
            k[c % 3] = *v;
        }
    }

    pub fn interpolant(&self) -> Result<Interpolant> {
        self.validate()?;
        let splines = (0..6)
            .map(|c| NaturalSpline::new(self.duration, &self.channel(c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Interpolant { splines })
    }

    /// Moments at `t_k = k h`, `k = 0..=steps`.
    pub fn sample(&self, h: f64, steps: usize) -> Result<Vec<ControlMoment>> {
        let interp = self.interpolant()?;
        Ok((0..=steps).map(|k| interp.evaluate(k as f64 * h)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.u1.iter().chain(&self.u2).flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct Interpolant {
    splines: Vec<NaturalSpline>,
}

impl Interpolant {
    pub fn evaluate(&self, t: f64) -> ControlMoment {
        let v: Vec<f64> = self.splines.iter().map(|s| s.evaluate(t)).collect();
        ControlMoment {
            u1: Vec3::new(v[0], v[1], v[2]),
            u2: Vec3::new(v[3], v[4], v[5]),
        }
    }
}

/// Linear map from knot values to samples at `t_k = k h`: row `k`, column `j`
/// is the spline through the `j`-th unit vector evaluated at `t_k`.
pub fn spline_basis(duration: f64, knots: usize, h: f64, steps: usize) -> Result<DMatrix<f64>> {
    let mut basis = DMatrix::zeros(steps + 1, knots);
    for j in 0..knots {
        let mut unit = vec![0.0; knots];
        unit[j] = 1.0;
        let s = NaturalSpline::new(duration, &unit)?;
        for k in 0..=steps {
            basis[(k, j)] = s.evaluate(k as f64 * h);
        }
    }
    Ok(basis)
}

/// Effort cost `sum_{k=0}^{N} h/2 (|u1_k|^2 + |u2_k|^2)`.
pub fn cost(samples: &[ControlMoment], h: f64) -> f64 {
    samples.iter().map(|u| 0.5 * h * u.norm_squared()).sum()
}

/// Cost of one channel through the basis: `h/2 |B v|^2`.
pub fn channel_cost(basis: &DMatrix<f64>, values: &DVector<f64>, h: f64) -> f64 {
    0.5 * h * (basis * values).norm_squared()
}
