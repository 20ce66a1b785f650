use super::scene::{ColliderSpec, Motion, Shape};
use crate::grid::SparseGrid;
use crate::linalg::{angular_velocity_cross, rotation_matrix, Matrix, Vector};

fn vector<const D: usize>(v: &[f64]) -> Vector<D> {
    Vector::<D>::from_column_slice(v)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry<const D: usize> {
    Box {
        min: Vector<D>,
        max: Vector<D>,
    },
    Sphere {
        center: Vector<D>,
        radius: f64,
    },
    Cylinder {
        center: Vector<D>,
        radius: f64,
        axis: usize,
        half_length: f64,
    },
    HalfSpace {
        point: Vector<D>,
        normal: Vector<D>,
    },
}

impl<const D: usize> Geometry<D> {
    pub fn from_shape(shape: &Shape) -> Self {
        match shape {
            Shape::Box { min, max } => Geometry::Box {
                min: vector(min),
                max: vector(max),
            },
            Shape::Sphere { center, radius } => Geometry::Sphere {
                center: vector(center),
                radius: *radius,
            },
            Shape::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => Geometry::Cylinder {
                center: vector(center),
                radius: *radius,
                axis: *axis,
                half_length: *half_length,
            },
            Shape::HalfSpace { point, normal } => Geometry::HalfSpace {
                point: vector(point),
                normal: vector::<D>(normal).normalize(),
            },
        }
    }

    /// Closed membership test.
    pub fn contains(&self, x: &Vector<D>) -> bool {
        match self {
            Geometry::Box { min, max } => (0..D).all(|a| x[a] >= min[a] && x[a] <= max[a]),
            Geometry::Sphere { center, radius } => (x - center).norm_squared() <= radius * radius,
            Geometry::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => {
                let r = x - center;
                let along = r[*axis];
                let radial = r.norm_squared() - along * along;
                along.abs() <= *half_length && radial <= radius * radius
            }
            Geometry::HalfSpace { point, normal } => (x - point).dot(normal) <= 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RigidMotion<const D: usize> {
    Static,
    Linear(Vector<D>),
    /// Angular velocity vector (one component in 2D) about `center`.
    Rotation {
        center: Vector<D>,
        omega: Vec<f64>,
    },
}

impl<const D: usize> RigidMotion<D> {
    pub fn from_motion(motion: &Motion) -> Self {
        match motion {
            Motion::Static => RigidMotion::Static,
            Motion::Linear { velocity } => RigidMotion::Linear(vector(velocity)),
            Motion::Rotation {
                center,
                axis,
                angular_velocity,
            } => {
                let omega = match axis {
                    None => vec![*angular_velocity],
                    Some(a) => {
                        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                        a.iter().map(|v| v / n * angular_velocity).collect()
                    }
                };
                RigidMotion::Rotation {
                    center: vector(center),
                    omega,
                }
            }
        }
    }

    /// Map a point at time `t` back to where it sat at time zero.
    pub fn to_initial(&self, x: &Vector<D>, t: f64) -> Vector<D> {
        match self {
            RigidMotion::Static => *x,
            RigidMotion::Linear(v) => x - v * t,
            RigidMotion::Rotation { center, omega } => {
                let back: Vec<f64> = omega.iter().map(|w| -w * t).collect();
                let r: Matrix<D> = rotation_matrix::<D>(&back);
                center + r * (x - center)
            }
        }
    }

    /// Rigid velocity of the material point at `x` at any time.
    pub fn velocity_at(&self, x: &Vector<D>) -> Vector<D> {
        match self {
            RigidMotion::Static => Vector::<D>::zeros(),
            RigidMotion::Linear(v) => *v,
            RigidMotion::Rotation { center, omega } => {
                angular_velocity_cross::<D>(omega, &(x - center))
            }
        }
    }
}

/// A scripted sticky boundary: grid nodes inside it take its rigid velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Collider<const D: usize> {
    pub geometry: Geometry<D>,
    pub motion: RigidMotion<D>,
    pub release_time: Option<f64>,
}

impl<const D: usize> Collider<D> {
    pub fn from_spec(spec: &ColliderSpec) -> Self {
        Self {
            geometry: Geometry::from_shape(&spec.shape),
            motion: RigidMotion::from_motion(&spec.motion),
            release_time: spec.release_time,
        }
    }

    pub fn active(&self, t: f64) -> bool {
        self.release_time.is_none_or(|r| t < r)
    }

    pub fn contains(&self, x: &Vector<D>, t: f64) -> bool {
        self.geometry.contains(&self.motion.to_initial(x, t))
    }
}

/// Mark nodes inside active colliders as Dirichlet. When colliders overlap
/// the first one listed wins.
pub fn apply_colliders<const D: usize>(
    grid: &mut SparseGrid<D>,
    colliders: &[Collider<D>],
    t: f64,
) {
    let n = grid.len();
    grid.dirichlet = vec![false; n];
    grid.scripted_velocity = vec![Vector::<D>::zeros(); n];
    let active: Vec<&Collider<D>> = colliders.iter().filter(|c| c.active(t)).collect();
    if active.is_empty() {
        return;
    }
    for i in 0..n {
        let x = grid.position(i);
        if let Some(c) = active.iter().find(|c| c.contains(&x, t)) {
            grid.dirichlet[i] = true;
            grid.scripted_velocity[i] = c.motion.velocity_at(&x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeCoord;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn half_space_keeps_the_side_against_the_normal() {
        let ground = Geometry::<2>::HalfSpace {
            point: Vector::<2>::new(0.0, 0.1),
            normal: Vector::<2>::new(0.0, 2.0).normalize(),
        };
        assert!(ground.contains(&Vector::<2>::new(5.0, 0.05)));
        assert!(ground.contains(&Vector::<2>::new(5.0, 0.1)));
        assert!(!ground.contains(&Vector::<2>::new(5.0, 0.11)));
    }

    #[test]
    fn cylinder_membership() {
        let c = Geometry::<3>::Cylinder {
            center: Vector::<3>::zeros(),
            radius: 1.0,
            axis: 2,
            half_length: 0.5,
        };
        assert!(c.contains(&Vector::<3>::new(0.6, 0.6, 0.4)));
        assert!(!c.contains(&Vector::<3>::new(0.8, 0.8, 0.0)));
        assert!(!c.contains(&Vector::<3>::new(0.0, 0.0, 0.6)));
    }

    #[test]
    fn rotation_moves_the_shape_and_gives_rigid_velocity() {
        let motion = RigidMotion::<2>::Rotation {
            center: Vector::<2>::zeros(),
            omega: vec![FRAC_PI_2],
        };
        // after one second a quarter turn has taken (1, 0) to (0, 1)
        let back = motion.to_initial(&Vector::<2>::new(0.0, 1.0), 1.0);
        assert!((back - Vector::<2>::new(1.0, 0.0)).norm() < 1e-14);
        let v = motion.velocity_at(&Vector::<2>::new(2.0, 0.0));
        assert!((v - Vector::<2>::new(0.0, 2.0 * FRAC_PI_2)).norm() < 1e-14);

        let motion = RigidMotion::<3>::from_motion(&Motion::Rotation {
            center: vec![0.0; 3],
            axis: Some(vec![0.0, 0.0, 3.0]),
            angular_velocity: 2.0,
        });
        let v = motion.velocity_at(&Vector::<3>::new(1.0, 0.0, 0.0));
        assert!((v - Vector::<3>::new(0.0, 2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn linear_motion_translates_membership() {
        let c = Collider::<2> {
            geometry: Geometry::Box {
                min: Vector::<2>::new(0.0, 0.0),
                max: Vector::<2>::new(1.0, 1.0),
            },
            motion: RigidMotion::Linear(Vector::<2>::new(1.0, 0.0)),
            release_time: Some(3.0),
        };
        assert!(!c.contains(&Vector::<2>::new(1.5, 0.5), 0.0));
        assert!(c.contains(&Vector::<2>::new(1.5, 0.5), 1.0));
        assert!(c.active(2.9) && !c.active(3.0));
    }

    #[test]
    fn colliders_mark_nodes_with_rigid_velocity() {
        let coords: Vec<LatticeCoord<2>> = (0..4)
            .flat_map(|i| (0..4).map(move |j| LatticeCoord([i, j])))
            .collect();
        let mut grid = SparseGrid::from_coords(0.1, coords);
        let colliders = vec![
            Collider {
                geometry: Geometry::HalfSpace {
                    point: Vector::<2>::new(0.0, 0.05),
                    normal: Vector::<2>::new(0.0, 1.0),
                },
                motion: RigidMotion::Linear(Vector::<2>::new(0.5, 0.0)),
                release_time: None,
            },
            Collider {
                geometry: Geometry::Box {
                    min: Vector::<2>::new(-1.0, -1.0),
                    max: Vector::<2>::new(0.05, 1.0),
                },
                motion: RigidMotion::Static,
                release_time: Some(0.5),
            },
        ];
        apply_colliders(&mut grid, &colliders, 0.0);
        for i in 0..grid.len() {
            let c = grid.coord(i).0;
            assert_eq!(grid.dirichlet[i], c[1] == 0 || c[0] == 0);
            if c[1] == 0 {
                assert_eq!(grid.scripted_velocity[i], Vector::<2>::new(0.5, 0.0));
            } else if c[0] == 0 {
                assert_eq!(grid.scripted_velocity[i], Vector::<2>::zeros());
            }
        }
        // the wall is released, the ground slides along itself
        apply_colliders(&mut grid, &colliders, 1.0);
        assert_eq!(grid.dirichlet_count(), 4);
    }
}
