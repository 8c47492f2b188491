//! TOML run configuration.
//!
//! Matrices are nested row-major arrays. Units: m, kg, kg m^2, s, N m.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::body::{BodyVelocity, Configuration, RigidShare, SystemParams};
use crate::control::ControlSchedule;
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::optimal::{ControlProblem, ManeuverKind, ManeuverSpec, OptimizerOptions};
use crate::so3::{orthogonality_error, Mat3, NewtonOptions, Rotation, Vec3};

pub type Matrix = [[f64; 3]; 3];
pub type Vector = [f64; 3];

const IDENTITY: Matrix = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "M0")]
    pub m0: Matrix,
    #[serde(rename = "M1")]
    pub m1: Matrix,
    #[serde(rename = "M2")]
    pub m2: Matrix,
    #[serde(rename = "J0")]
    pub j0: Matrix,
    #[serde(rename = "J1")]
    pub j1: Matrix,
    #[serde(rename = "J2")]
    pub j2: Matrix,
    pub d01: Vector,
    pub d02: Vector,
    pub d10: Vector,
    pub d20: Vector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid: Option<RigidSection>,
}

/// Vacuum (rigid-body) share of the inertias, used for momentum bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidSection {
    pub mass: [f64; 3],
    #[serde(rename = "J0")]
    pub j0: Matrix,
    #[serde(rename = "J1")]
    pub j1: Matrix,
    #[serde(rename = "J2")]
    pub j2: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(rename = "R0", default = "identity")]
    pub r0: Matrix,
    #[serde(rename = "R1", default = "identity")]
    pub r1: Matrix,
    #[serde(rename = "R2", default = "identity")]
    pub r2: Matrix,
    #[serde(default)]
    pub x: Vector,
    #[serde(rename = "Omega0", default)]
    pub omega0: Vector,
    #[serde(rename = "Omega1", default)]
    pub omega1: Vector,
    #[serde(rename = "Omega2", default)]
    pub omega2: Vector,
    #[serde(default)]
    pub xdot: Vector,
}

fn identity() -> Matrix {
    IDENTITY
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            r0: IDENTITY,
            r1: IDENTITY,
            r2: IDENTITY,
            x: [0.0; 3],
            omega0: [0.0; 3],
            omega1: [0.0; 3],
            omega2: [0.0; 3],
            xdot: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_newton_tol() -> f64 {
    NewtonOptions::default().tol
}

fn default_newton_max_iter() -> usize {
    NewtonOptions::default().max_iter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverSection {
    pub kind: ManeuverKind,
    /// forward_translation: distance along e1 (m)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    /// custom: prescribed components of `x_N - x_0`, one entry per axis, free if absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<DisplacementSection>,
    /// custom: rotation vector applied to every body's initial attitude
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vector>,
    /// 1-based axes of u1, u2 the optimizer may use
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_axes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DisplacementSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver: Option<ManeuverSection>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    /// Fixed schedule for `simulate`; for `optimize` it is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlSchedule>,
    #[serde(default)]
    pub output: OutputSection,
}

fn mat(m: &Matrix) -> Mat3 {
    Mat3::from_fn(|r, c| m[r][c])
}

fn to_matrix(m: &Mat3) -> Matrix {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

fn vec3(v: &Vector) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn rotation(m: &Matrix, field: &str) -> Result<Rotation> {
    let r = mat(m);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::validation(field, "non-finite entry"));
    }
    let err = orthogonality_error(&r);
    if err > 1e-9 {
        return Err(Error::validation(field, format!("not a rotation (|R^T R - I| = {err:.2e})")));
    }
    if r.determinant() < 0.0 {
        return Err(Error::validation(field, "determinant is negative"));
    }
    Ok(Rotation::from_matrix_unchecked(r))
}

fn finite(v: &Vector, field: &str) -> Result<Vec3> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(vec3(v))
    } else {
        Err(Error::validation(field, "non-finite entry"))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let cfg = Self::parse(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system_params()?;
        self.initial_configuration()?;
        self.initial_velocity()?;
        self.step_size()?;
        self.steps()?;
        if !(self.integrator.newton_tol > 0.0) {
            return Err(Error::validation("integrator.newton_tol", "must be positive"));
        }
        if self.integrator.newton_max_iter == 0 {
            return Err(Error::validation("integrator.newton_max_iter", "must be positive"));
        }
        if self.maneuver.is_some() {
            self.maneuver_spec()?.validate()?;
        }
        self.optimizer.validate()?;
        if let Some(s) = &self.controls {
            s.validate()?;
            let t = self.step_size()? * self.steps()? as f64;
            if (s.duration - t).abs() > 1e-9 * t {
                return Err(Error::validation("controls.duration", format!("must equal h * steps = {t}")));
            }
        }
        Ok(())
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let p = &self.params;
        let rigid = p
            .rigid
            .as_ref()
            .map(|r| RigidShare {
                mass: r.mass,
                inertia: [mat(&r.j0), mat(&r.j1), mat(&r.j2)],
            });
        let params = SystemParams {
            mass: [mat(&p.m0), mat(&p.m1), mat(&p.m2)],
            inertia: [mat(&p.j0), mat(&p.j1), mat(&p.j2)],
            joint_on_center: [vec3(&p.d01), vec3(&p.d02)],
            joint_on_limb: [vec3(&p.d10), vec3(&p.d20)],
            rigid,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn initial_configuration(&self) -> Result<Configuration> {
        let i = &self.initial;
        Ok(Configuration {
            rot: [
                rotation(&i.r0, "initial.R0")?,
                rotation(&i.r1, "initial.R1")?,
                rotation(&i.r2, "initial.R2")?,
            ],
            x: finite(&i.x, "initial.x")?,
        })
    }

    pub fn initial_velocity(&self) -> Result<BodyVelocity> {
        let i = &self.initial;
        Ok(BodyVelocity {
            omega: [
                finite(&i.omega0, "initial.Omega0")?,
                finite(&i.omega1, "initial.Omega1")?,
                finite(&i.omega2, "initial.Omega2")?,
            ],
            xdot: finite(&i.xdot, "initial.xdot")?,
        })
    }

    pub fn step_size(&self) -> Result<f64> {
        match self.integrator.h {
            None => Err(Error::validation("integrator.h", "missing")),
            Some(h) if h > 0.0 && h.is_finite() => Ok(h),
            Some(_) => Err(Error::validation("integrator.h", "must be positive")),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        match self.integrator.steps {
            None => Err(Error::validation("integrator.steps", "missing")),
            Some(0) => Err(Error::validation("integrator.steps", "must be positive")),
            Some(n) => Ok(n),
        }
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.integrator.newton_tol,
            max_iter: self.integrator.newton_max_iter,
        }
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Integrator::new(self.system_params()?, self.step_size()?, self.newton())
    }

    pub fn maneuver_spec(&self) -> Result<ManeuverSpec> {
        let m = self
            .maneuver
            .as_ref()
            .ok_or_else(|| Error::validation("maneuver", "missing"))?;
        let (h, steps) = (self.step_size()?, self.steps()?);
        let mut spec = match m.kind {
            ManeuverKind::ForwardTranslation => {
                let d = m.distance.ok_or_else(|| Error::validation("maneuver.distance", "missing"))?;
                ManeuverSpec::forward_translation(d, steps, h)
            }
            ManeuverKind::RotationE1 => ManeuverSpec::rotation_e1(steps, h),
            ManeuverKind::Custom => {
                let d = m.displacement.clone().unwrap_or_default();
                ManeuverSpec {
                    kind: ManeuverKind::Custom,
                    displacement: [d.e1, d.e2, d.e3],
                    rotation: vec3(&m.rotation.unwrap_or([0.0; 3])),
                    control_axes: [true; 3],
                    steps,
                    h,
                }
            }
        };
        if let Some(axes) = &m.control_axes {
            let mut mask = [false; 3];
            for &a in axes {
                if !(1..=3).contains(&a) {
                    return Err(Error::validation("maneuver.control_axes", "axes are 1, 2 or 3"));
                }
                mask[a - 1] = true;
            }
            spec.control_axes = mask;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn control_problem(&self) -> Result<ControlProblem> {
        ControlProblem::new(
            self.integrator()?,
            self.initial_configuration()?,
            self.initial_velocity()?,
            self.maneuver_spec()?,
        )
    }

    /// Replaces the model inertias, e.g. after computing them from ellipsoids.
    pub fn set_inertias(&mut self, mass: [Mat3; 3], inertia: [Mat3; 3]) {
        self.params.m0 = to_matrix(&mass[0]);
        self.params.m1 = to_matrix(&mass[1]);
        self.params.m2 = to_matrix(&mass[2]);
        self.params.j0 = to_matrix(&inertia[0]);
        self.params.j1 = to_matrix(&inertia[1]);
        self.params.j2 = to_matrix(&inertia[2]);
    }

    pub fn set_initial_rotation(&mut self, i: usize, r: &Rotation) {
        let m = to_matrix(r.matrix());
        match i {
            0 => self.initial.r0 = m,
            1 => self.initial.r1 = m,
            _ => self.initial.r2 = m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
M0 = [[1, 0, 0], [0, 2, 0], [0, 0, 3]]
M1 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
M2 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
J0 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
J1 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
J2 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
d01 = [1, 0, 0]
d02 = [-1, 0, 0]
d10 = [0.5, 0, 0]
d20 = [-0.5, 0, 0]

[integrator]
h = 0.01
steps = 10
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        let cfg = RunConfig::parse(text, Path::new("test.toml"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.initial, InitialSection::default());
        assert_eq!(cfg.optimizer, OptimizerOptions::default());
        assert_eq!(cfg.newton(), NewtonOptions::default());
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.initial.omega1 = [0.1, 1.0 / 3.0, -2e-17];
        cfg.maneuver = Some(ManeuverSection {
            kind: ManeuverKind::Custom,
            distance: None,
            displacement: Some(DisplacementSection {
                e1: Some(1.5),
                ..Default::default()
            }),
            rotation: Some([0.0, 0.0, 0.3]),
            control_axes: Some(vec![3]),
        });
        cfg.controls = Some(ControlSchedule::zero(0.1, 4));
        let again = parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn non_spd_mass_names_the_field() {
        let text = MINIMAL.replace("M0 = [[1, 0, 0], [0, 2, 0], [0, 0, 3]]", "M0 = [[1, 0, 0], [0, -2, 0], [0, 0, 3]]");
        match parse(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "params.M0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_inertia_is_rejected_at_load() {
        let text = MINIMAL.replace("J0 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]", "J0 = [[1, 0.2, 0], [0, 1, 0], [0, 0, 1]]");
        match parse(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "params.J0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_step_is_a_validation_error() {
        let text = MINIMAL.replace("h = 0.01\n", "");
        match parse(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "integrator.h"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        assert!(matches!(parse("[params\nM0 = 1"), Err(Error::Parse { .. })));
        let typo = MINIMAL.replace("d01", "d0l");
        assert!(matches!(parse(&typo), Err(Error::Parse { .. })));
    }

    #[test]
    fn maneuver_kinds() {
        let mut text = String::from(MINIMAL);
        text.push_str("\n[maneuver]\nkind = \"forward_translation\"\ndistance = 2.0\n");
        let spec = parse(&text).unwrap().maneuver_spec().unwrap();
        assert_eq!(spec.displacement, [Some(2.0), None, None]);
        assert_eq!(spec.control_axes, [false, false, true]);
        assert_eq!(spec.steps, 10);
        let text = text.replace("kind = \"forward_translation\"\ndistance = 2.0", "kind = \"rotation_e1\"");
        let spec = parse(&text).unwrap().maneuver_spec().unwrap();
        assert_eq!(spec.residual_len(), 21);
        let bad = text.replace("kind = \"rotation_e1\"", "kind = \"forward_translation\"");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn control_duration_must_match_horizon() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.controls = Some(ControlSchedule::zero(0.5, 4));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_rotation_initial_attitude() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.initial.r1 = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        match cfg.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "initial.R1"),
            other => panic!("{other:?}"),
        }
    }
}
