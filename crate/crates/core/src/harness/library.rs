//! Built-in desk-scale scenes.

use std::collections::BTreeMap;

use super::scene::{ColliderSpec, DomainBox, MaterialSpec, Motion, ObjectSpec, SceneConfig, Shape};
use crate::constitutive::Plasticity;
use crate::solvers::SolverConfig;

pub const BUILTIN_SCENES: [&str; 5] = [
    "stretched-box",
    "stiffness-bar",
    "twist-bar",
    "soft-blob",
    "smoke-3d",
];

/// Young's moduli of the middle segment in the stiffness sweep.
pub const STIFFNESS_SWEEP: [f64; 3] = [1e5, 1e7, 1e9];

const GRAVITY: f64 = -9.81;

pub fn builtin_scene(name: &str) -> Option<SceneConfig> {
    match name {
        "stretched-box" => Some(stretched_box()),
        "stiffness-bar" => Some(stiffness_bar(1e7)),
        "twist-bar" => Some(twist_bar()),
        "soft-blob" => Some(soft_blob()),
        "smoke-3d" => Some(smoke_3d()),
        _ => None,
    }
}

fn elastic(youngs_modulus: f64, poisson_ratio: f64) -> MaterialSpec {
    MaterialSpec {
        density: 1000.0,
        youngs_modulus,
        poisson_ratio,
        plasticity: Plasticity::None,
    }
}

fn block(min: [f64; 2], max: [f64; 2], material: &str) -> ObjectSpec {
    ObjectSpec {
        shape: Shape::Box {
            min: min.to_vec(),
            max: max.to_vec(),
        },
        material: material.into(),
        velocity: None,
        random_stretch: None,
    }
}

fn clamp(min: [f64; 2], max: [f64; 2], motion: Motion) -> ColliderSpec {
    ColliderSpec {
        shape: Shape::Box {
            min: min.to_vec(),
            max: max.to_vec(),
        },
        motion,
        release_time: None,
    }
}

fn unit_square(dx: f64, frames: usize) -> SceneConfig {
    SceneConfig {
        dim: 2,
        dx,
        fps: 24.0,
        frames,
        gravity: Some(vec![0.0, GRAVITY]),
        domain: DomainBox {
            min: vec![0.0, 0.0],
            max: vec![1.0, 1.0],
        },
        particles_per_cell: 2,
        jitter: 0.0,
        seed: 0,
        solver: SolverConfig::default(),
        materials: BTreeMap::new(),
        objects: Vec::new(),
        colliders: Vec::new(),
    }
}

/// A free soft block, 64 cells wide, whose particles start with random
/// diagonal stretches in `[0.7, 1.3]` and spring back.
pub fn stretched_box() -> SceneConfig {
    let mut scene = unit_square(1.0 / 128.0, 24);
    scene.gravity = None;
    scene.materials.insert("rubber".into(), elastic(5e4, 0.3));
    let mut object = block([0.25, 0.25], [0.75, 0.75], "rubber");
    object.random_stretch = Some([0.7, 1.3]);
    scene.objects.push(object);
    scene
}

/// Clamp boxes over both ends of a bar, spinning in opposite directions.
fn twisted_ends(scene: &mut SceneConfig, angular_velocity: f64) {
    let spin = |x: f64, w: f64| Motion::Rotation {
        center: vec![x, 0.5],
        axis: None,
        angular_velocity: w,
    };
    scene
        .colliders
        .push(clamp([0.0, 0.0], [0.15, 1.0], spin(0.1, angular_velocity)));
    scene
        .colliders
        .push(clamp([0.85, 0.0], [1.0, 1.0], spin(0.9, -angular_velocity)));
}

/// A bar in three equal segments twisted by its ends. The end segments
/// have `E = 1e5`; the middle one takes `middle_youngs`.
pub fn stiffness_bar(middle_youngs: f64) -> SceneConfig {
    let mut scene = unit_square(1.0 / 64.0, 24);
    scene.gravity = None;
    scene.materials.insert("end".into(), elastic(1e5, 0.3));
    scene
        .materials
        .insert("middle".into(), elastic(middle_youngs, 0.3));
    let (y0, y1) = (0.4375, 0.5625);
    scene.objects.push(block([0.125, y0], [0.375, y1], "end"));
    scene
        .objects
        .push(block([0.375, y0], [0.625, y1], "middle"));
    scene.objects.push(block([0.625, y0], [0.875, y1], "end"));
    twisted_ends(&mut scene, 1.0);
    scene
}

/// A two-material bar whose ends are rotated in opposite directions.
pub fn twist_bar() -> SceneConfig {
    let mut scene = unit_square(1.0 / 64.0, 24);
    scene.gravity = None;
    scene.materials.insert("soft".into(), elastic(5e5, 0.4));
    scene.materials.insert("stiff".into(), elastic(5e9, 0.4));
    let (y0, y1) = (0.4375, 0.5625);
    scene.objects.push(block([0.125, y0], [0.5, y1], "soft"));
    scene.objects.push(block([0.5, y0], [0.875, y1], "stiff"));
    twisted_ends(&mut scene, 1.0);
    scene
}

/// A soft disk dropped onto a sticky floor.
pub fn soft_blob() -> SceneConfig {
    let mut scene = unit_square(1.0 / 64.0, 24);
    scene.materials.insert("flesh".into(), elastic(5e4, 0.3));
    scene.objects.push(ObjectSpec {
        shape: Shape::Sphere {
            center: vec![0.5, 0.45],
            radius: 0.15,
        },
        material: "flesh".into(),
        velocity: None,
        random_stretch: None,
    });
    scene.colliders.push(ColliderSpec {
        shape: Shape::HalfSpace {
            point: vec![0.0, 0.1],
            normal: vec![0.0, 1.0],
        },
        motion: Motion::Static,
        release_time: None,
    });
    scene
}

/// A small three-dimensional cube falling onto a floor.
pub fn smoke_3d() -> SceneConfig {
    SceneConfig {
        dim: 3,
        dx: 1.0 / 16.0,
        fps: 24.0,
        frames: 6,
        gravity: Some(vec![0.0, GRAVITY, 0.0]),
        domain: DomainBox {
            min: vec![0.0; 3],
            max: vec![1.0; 3],
        },
        particles_per_cell: 2,
        jitter: 0.0,
        seed: 0,
        solver: SolverConfig::default(),
        materials: BTreeMap::from([("jelly".to_string(), elastic(1e4, 0.3))]),
        objects: vec![ObjectSpec {
            shape: Shape::Box {
                min: vec![0.375, 0.375, 0.375],
                max: vec![0.625, 0.625, 0.625],
            },
            material: "jelly".into(),
            velocity: None,
            random_stretch: None,
        }],
        colliders: vec![ColliderSpec {
            shape: Shape::HalfSpace {
                point: vec![0.0, 0.25, 0.0],
                normal: vec![0.0, 1.0, 0.0],
            },
            motion: Motion::Static,
            release_time: None,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_scene_validates() {
        for name in BUILTIN_SCENES {
            let scene = builtin_scene(name).unwrap();
            scene.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(super::super::parse_scene(&scene.to_json()).unwrap(), scene);
        }
        assert!(builtin_scene("teapot").is_none());
        for e in STIFFNESS_SWEEP {
            stiffness_bar(e).validate().unwrap();
        }
    }

    #[test]
    fn twist_bar_uses_the_two_material_pair() {
        let table = twist_bar().material_table();
        let moduli: Vec<f64> = table.iter().map(|(_, m)| m.youngs_modulus).collect();
        assert_eq!(moduli, vec![5e5, 5e9]);
        assert!(table.iter().all(|(_, m)| m.poisson_ratio == 0.4));
    }
}
