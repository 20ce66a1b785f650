use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::constitutive::{Material, Plasticity};
use crate::solvers::SolverConfig;

/// A scene as written in its JSON file. Vectors are plain arrays whose
/// length must equal `dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub dim: usize,
    pub dx: f64,
    pub fps: f64,
    pub frames: usize,
    #[serde(default)]
    pub gravity: Option<Vec<f64>>,
    pub domain: DomainBox,
    /// Samples per cell along each axis.
    #[serde(default = "default_particles_per_cell")]
    pub particles_per_cell: usize,
    /// Random offset of each sample as a fraction of the sample spacing.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    pub materials: BTreeMap<String, MaterialSpec>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub colliders: Vec<ColliderSpec>,
}

fn default_particles_per_cell() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub density: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    #[serde(default)]
    pub plasticity: Plasticity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box {
        min: Vec<f64>,
        max: Vec<f64>,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    /// Solid cylinder around `axis` (0, 1 or 2). Three dimensions only.
    Cylinder {
        center: Vec<f64>,
        radius: f64,
        axis: usize,
        half_length: f64,
    },
    /// Everything on the side opposite to `normal`.
    HalfSpace {
        point: Vec<f64>,
        normal: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub material: String,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
    /// Give each particle a diagonal deformation gradient with entries drawn
    /// uniformly from `[lo, hi]`.
    #[serde(default)]
    pub random_stretch: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    Linear {
        velocity: Vec<f64>,
    },
    /// Rigid rotation about `center`. In 2D `axis` is omitted; in 3D it is
    /// normalized before use.
    Rotation {
        center: Vec<f64>,
        #[serde(default)]
        axis: Option<Vec<f64>>,
        angular_velocity: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColliderSpec {
    pub shape: Shape,
    #[serde(default = "default_motion")]
    pub motion: Motion,
    /// The collider stops constraining nodes at this time.
    #[serde(default)]
    pub release_time: Option<f64>,
}

fn default_motion() -> Motion {
    Motion::Static
}

/// Parse and validate a scene document.
pub fn parse_scene(text: &str) -> Result<SceneConfig, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: SceneConfig =
        serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    config.validate()?;
    Ok(config)
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl SceneConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    fn check_vector(&self, path: &str, v: &[f64]) -> Result<(), HarnessError> {
        if v.len() != self.dim {
            return Err(invalid(
                path,
                format!("expected {} components, got {}", self.dim, v.len()),
            ));
        }
        if !finite(v) {
            return Err(invalid(path, "components must be finite"));
        }
        Ok(())
    }

    fn check_shape(&self, path: &str, shape: &Shape) -> Result<(), HarnessError> {
        match shape {
            Shape::Box { min, max } => {
                self.check_vector(&format!("{path}.min"), min)?;
                self.check_vector(&format!("{path}.max"), max)?;
                if min.iter().zip(max).any(|(a, b)| a >= b) {
                    return Err(invalid(path, "box min must be below max on every axis"));
                }
            }
            Shape::Sphere { center, radius } => {
                self.check_vector(&format!("{path}.center"), center)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid(format!("{path}.radius"), "radius must be positive"));
                }
            }
            Shape::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => {
                if self.dim != 3 {
                    return Err(invalid(path, "cylinders need dim 3"));
                }
                self.check_vector(&format!("{path}.center"), center)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid(format!("{path}.radius"), "radius must be positive"));
                }
                if !(half_length.is_finite() && *half_length > 0.0) {
                    return Err(invalid(
                        format!("{path}.half_length"),
                        "half length must be positive",
                    ));
                }
                if *axis >= 3 {
                    return Err(invalid(format!("{path}.axis"), "axis must be 0, 1 or 2"));
                }
            }
            Shape::HalfSpace { point, normal } => {
                self.check_vector(&format!("{path}.point"), point)?;
                self.check_vector(&format!("{path}.normal"), normal)?;
                if normal.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                    return Err(invalid(format!("{path}.normal"), "normal must be nonzero"));
                }
            }
        }
        Ok(())
    }

    /// Check every invariant that parsing alone does not enforce.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(invalid("dim", "dim must be 2 or 3"));
        }
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(invalid("dx", "dx must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(invalid("fps", "fps must be positive"));
        }
        if self.particles_per_cell == 0 || self.particles_per_cell > 8 {
            return Err(invalid("particles_per_cell", "must be between 1 and 8"));
        }
        if !(self.jitter.is_finite() && (0.0..=0.5).contains(&self.jitter)) {
            return Err(invalid("jitter", "must lie in [0, 0.5]"));
        }
        if let Some(g) = &self.gravity {
            self.check_vector("gravity", g)?;
        }
        self.check_vector("domain.min", &self.domain.min)?;
        self.check_vector("domain.max", &self.domain.max)?;
        if self
            .domain
            .min
            .iter()
            .zip(&self.domain.max)
            .any(|(a, b)| a >= b)
        {
            return Err(invalid(
                "domain",
                "domain min must be below max on every axis",
            ));
        }
        self.solver
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;

        if self.materials.is_empty() {
            return Err(invalid("materials", "at least one material is required"));
        }
        for (name, m) in &self.materials {
            Material::new(m.density, m.youngs_modulus, m.poisson_ratio, m.plasticity)
                .map_err(|e| invalid(format!("materials.{name}"), e.to_string()))?;
        }

        if self.objects.is_empty() {
            return Err(invalid("objects", "at least one object is required"));
        }
        for (k, object) in self.objects.iter().enumerate() {
            let path = format!("objects[{k}]");
            if !self.materials.contains_key(&object.material) {
                return Err(invalid(
                    format!("{path}.material"),
                    format!("unknown material `{}`", object.material),
                ));
            }
            self.check_shape(&format!("{path}.shape"), &object.shape)?;
            let (lo, hi) = self.shape_bounds(&object.shape).ok_or_else(|| {
                invalid(format!("{path}.shape"), "objects must be bounded shapes")
            })?;
            let inside =
                (0..self.dim).all(|a| lo[a] >= self.domain.min[a] && hi[a] <= self.domain.max[a]);
            if !inside {
                return Err(invalid(
                    format!("{path}.shape"),
                    "shape leaves the domain box",
                ));
            }
            if let Some(v) = &object.velocity {
                self.check_vector(&format!("{path}.velocity"), v)?;
            }
            if let Some([lo, hi]) = object.random_stretch {
                if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
                    return Err(invalid(
                        format!("{path}.random_stretch"),
                        "need 0 < lo <= hi",
                    ));
                }
            }
        }

        for (k, collider) in self.colliders.iter().enumerate() {
            let path = format!("colliders[{k}]");
            self.check_shape(&format!("{path}.shape"), &collider.shape)?;
            match &collider.motion {
                Motion::Static => {}
                Motion::Linear { velocity } => {
                    self.check_vector(&format!("{path}.motion.velocity"), velocity)?
                }
                Motion::Rotation {
                    center,
                    axis,
                    angular_velocity,
                } => {
                    self.check_vector(&format!("{path}.motion.center"), center)?;
                    if !angular_velocity.is_finite() {
                        return Err(invalid(
                            format!("{path}.motion.angular_velocity"),
                            "must be finite",
                        ));
                    }
                    match (self.dim, axis) {
                        (2, None) => {}
                        (2, Some(_)) => {
                            return Err(invalid(
                                format!("{path}.motion.axis"),
                                "2D rotations have no axis",
                            ))
                        }
                        (_, None) => {
                            return Err(invalid(
                                format!("{path}.motion.axis"),
                                "3D rotations need an axis",
                            ))
                        }
                        (_, Some(a)) => {
                            self.check_vector(&format!("{path}.motion.axis"), a)?;
                            if a.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                                return Err(invalid(
                                    format!("{path}.motion.axis"),
                                    "axis must be nonzero",
                                ));
                            }
                        }
                    }
                }
            }
            if let Some(t) = collider.release_time {
                if !t.is_finite() {
                    return Err(invalid(format!("{path}.release_time"), "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds of a bounded shape.
    pub(crate) fn shape_bounds(&self, shape: &Shape) -> Option<(Vec<f64>, Vec<f64>)> {
        match shape {
            Shape::Box { min, max } => Some((min.clone(), max.clone())),
            Shape::Sphere { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Shape::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => {
                let reach = |a: usize| if a == *axis { *half_length } else { *radius };
                Some((
                    center
                        .iter()
                        .enumerate()
                        .map(|(a, c)| c - reach(a))
                        .collect(),
                    center
                        .iter()
                        .enumerate()
                        .map(|(a, c)| c + reach(a))
                        .collect(),
                ))
            }
            Shape::HalfSpace { .. } => None,
        }
    }

    /// Materials in table order; objects refer to them by this index.
    pub fn material_table(&self) -> Vec<(String, Material)> {
        self.materials
            .iter()
            .map(|(name, m)| {
                let material =
                    Material::new(m.density, m.youngs_modulus, m.poisson_ratio, m.plasticity)
                        .expect("validated material");
                (name.clone(), material)
            })
            .collect()
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.materials.keys().position(|k| k == name)
    }
}
