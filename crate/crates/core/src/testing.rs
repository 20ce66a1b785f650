//! Shared fixtures for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constitutive::Material;
use crate::grid::{activate_grid, KernelKind};
use crate::linalg::{Matrix, Vector};
use crate::objective::ObjectiveState;
use crate::transfer::{p2g, InterpolationCache, Particle};

/// A jittered block of `cells^D` cells with two particles per axis per cell,
/// randomly deformed, optionally with the lowest x-column of nodes fixed.
pub(crate) fn block_state<const D: usize>(
    cells: usize,
    seed: u64,
    youngs: f64,
    deform: f64,
    fix_left: bool,
) -> ObjectiveState<D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dx: f64 = 0.05;
    let material = Material::elastic(1000.0, youngs, 0.3).unwrap();
    let per_axis = 2 * cells;
    let total = per_axis.pow(D as u32);
    let volume = dx.powi(D as i32) / 2f64.powi(D as i32);
    let particles: Vec<Particle<D>> = (0..total)
        .map(|k| {
            let mut rem = k;
            let pos = Vector::<D>::from_fn(|_, _| {
                let idx = rem % per_axis;
                rem /= per_axis;
                0.5 + (idx as f64 + 0.25 + 0.5 * rng.random::<f64>()) * dx * 0.5
            });
            let mut p = Particle::at_rest(pos, volume * material.density, volume, 0);
            if deform > 0.0 {
                p.deformation = Matrix::<D>::identity()
                    + Matrix::<D>::from_fn(|_, _| rng.random_range(-deform..deform));
            }
            p
        })
        .collect();
    let positions: Vec<Vector<D>> = particles.iter().map(|p| p.position).collect();
    let mut grid = activate_grid(&positions, dx, KernelKind::QuadraticBSpline);
    let cache = InterpolationCache::build(&grid, &positions, KernelKind::QuadraticBSpline);
    p2g(&particles, &mut grid, &cache);
    if fix_left {
        let min_x = grid.coords().iter().map(|c| c.0[0]).min().unwrap();
        for i in 0..grid.len() {
            if grid.coord(i).0[0] == min_x {
                grid.dirichlet[i] = true;
            }
        }
    }
    ObjectiveState::new(
        &grid,
        &particles,
        &cache,
        &[material],
        1e-2,
        Vector::<D>::zeros(),
    )
    .unwrap()
}
