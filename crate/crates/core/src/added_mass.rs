//! Rigid and added inertia of solid ellipsoids in a perfect fluid.
//!
//! Lamb's coefficients are expressed through Carlson's symmetric integral
//! `R_D`. Masses are returned in units of `rho * reference_volume`, which is
//! how the bundled fixture is normalized.

use crate::so3::{Mat3, Vec3};

/// Carlson's elliptic integral of the second kind,
/// `R_D(x, y, z) = 3/2 int_0^inf dt / ((t + z) sqrt((t + x)(t + y)(t + z)))`.
pub fn carlson_rd(x: f64, y: f64, z: f64) -> f64 {
    const C1: f64 = 3.0 / 14.0;
    const C2: f64 = 1.0 / 6.0;
    const C3: f64 = 9.0 / 22.0;
    const C4: f64 = 3.0 / 26.0;
    const C5: f64 = 0.25 * C3;
    const C6: f64 = 1.5 * C4;
    let (mut x, mut y, mut z) = (x, y, z);
    let mut sum = 0.0;
    let mut fac = 1.0;
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (z + lambda));
        fac *= 0.25;
        x = 0.25 * (x + lambda);
        y = 0.25 * (y + lambda);
        z = 0.25 * (z + lambda);
        let ave = 0.2 * (x + y + 3.0 * z);
        let (dx, dy, dz) = ((ave - x) / ave, (ave - y) / ave, (ave - z) / ave);
        if dx.abs().max(dy.abs()).max(dz.abs()) < 1e-4 {
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - 6.0 * eb;
            let ee = ed + ec + ec;
            let series = 1.0
                + ed * (-C1 + C5 * ed - C6 * dz * ee)
                + dz * (C2 * ee + dz * (-C3 * ec + dz * C4 * ea));
            return 3.0 * sum + fac * series / (ave * ave.sqrt());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    /// semi-axes along the body axes (m)
    pub semi_axes: Vec3,
}

impl Ellipsoid {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self {
            semi_axes: Vec3::new(a, b, c),
        }
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.product()
    }

    /// Lamb's `(alpha_0, beta_0, gamma_0)`; they sum to 2.
    pub fn lamb_coefficients(&self) -> Vec3 {
        let [a, b, c] = [self.semi_axes.x, self.semi_axes.y, self.semi_axes.z];
        let k = 2.0 / 3.0 * a * b * c;
        let (a2, b2, c2) = (a * a, b * b, c * c);
        Vec3::new(
            k * carlson_rd(b2, c2, a2),
            k * carlson_rd(c2, a2, b2),
            k * carlson_rd(a2, b2, c2),
        )
    }

    /// Translational and rotational added inertia, per unit fluid density.
    pub fn added_inertia(&self) -> (Mat3, Mat3) {
        let v = self.volume();
        let l = self.lamb_coefficients();
        let ax = self.semi_axes;
        let mass = Vec3::from_fn(|j, _| l[j] / (2.0 - l[j]) * v);
        let rot = Vec3::from_fn(|j, _| {
            let (p, q) = ((j + 1) % 3, (j + 2) % 3);
            let (bp, bq) = (ax[p] * ax[p], ax[q] * ax[q]);
            let diff = bp - bq;
            if diff.abs() < 1e-12 * (bp + bq) {
                // axisymmetric about j: no added inertia
                return 0.0;
            }
            diff * diff * (l[q] - l[p]) / (2.0 * diff + (bp + bq) * (l[p] - l[q])) / 5.0 * v
        });
        (Mat3::from_diagonal(&mass), Mat3::from_diagonal(&rot))
    }

    /// Rigid-body mass and inertia about the center, per unit body density.
    pub fn rigid_inertia(&self) -> (Mat3, Mat3) {
        let v = self.volume();
        let ax = self.semi_axes;
        let rot = Vec3::from_fn(|j, _| {
            let (p, q) = ((j + 1) % 3, (j + 2) % 3);
            v / 5.0 * (ax[p] * ax[p] + ax[q] * ax[q])
        });
        (Mat3::identity() * v, Mat3::from_diagonal(&rot))
    }
}

/// Body plus fluid inertia of a body of density `body_density` in a fluid of
/// density `fluid_density`, divided by `fluid_density * reference_volume`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedInertia {
    pub rigid_mass: Mat3,
    pub rigid_inertia: Mat3,
    pub mass: Mat3,
    pub inertia: Mat3,
}

pub fn normalized_inertia(
    body: &Ellipsoid,
    body_density: f64,
    fluid_density: f64,
    reference_volume: f64,
) -> NormalizedInertia {
    let unit = fluid_density * reference_volume;
    let (mb, jb) = body.rigid_inertia();
    let (mf, jf) = body.added_inertia();
    let rigid_mass = mb * (body_density / unit);
    let rigid_inertia = jb * (body_density / unit);
    NormalizedInertia {
        rigid_mass,
        rigid_inertia,
        mass: rigid_mass + mf * (fluid_density / unit),
        inertia: rigid_inertia + jf * (fluid_density / unit),
    }
}
