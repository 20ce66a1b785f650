//! APIC particle/grid transfers, the updated-Lagrangian strain update and
//! particle advection.

use rayon::prelude::*;

use crate::constitutive::{return_map, Material};
use crate::grid::{for_each_stencil_node, KernelKind, SparseGrid};
use crate::linalg::{determinant, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct Particle<const D: usize> {
    pub position: Vector<D>,
    pub velocity: Vector<D>,
    pub mass: f64,
    /// Rest volume (m^D).
    pub volume: f64,
    pub deformation: Matrix<D>,
    /// APIC affine velocity matrix (1/s).
    pub affine: Matrix<D>,
    pub material: usize,
}

impl<const D: usize> Particle<D> {
    pub fn at_rest(position: Vector<D>, mass: f64, volume: f64, material: usize) -> Self {
        Self {
            position,
            velocity: Vector::<D>::zeros(),
            mass,
            volume,
            deformation: Matrix::<D>::identity(),
            affine: Matrix::<D>::zeros(),
            material,
        }
    }
}

/// Weights and weight gradients of every particle against the active grid,
/// evaluated once at the start-of-step positions and reused by every stage
/// of the step.
#[derive(Clone, Debug)]
pub struct InterpolationCache<const D: usize> {
    offsets: Vec<usize>,
    nodes: Vec<usize>,
    weights: Vec<f64>,
    gradients: Vec<Vector<D>>,
}

impl<const D: usize> InterpolationCache<D> {
    /// Panics if a stencil node is missing from `grid`; the grid must have
    /// been activated for these positions with the same kernel.
    pub fn build(grid: &SparseGrid<D>, positions: &[Vector<D>], kind: KernelKind) -> Self {
        let per_particle: Vec<Vec<(usize, f64, Vector<D>)>> = positions
            .par_iter()
            .map(|x| {
                let mut out = Vec::with_capacity(kind.stencil_width().pow(D as u32));
                for_each_stencil_node(kind, x, grid.dx, |e| {
                    let node = grid
                        .index_of(&e.coord)
                        .expect("grid was not activated for this particle");
                    out.push((node, e.weight, e.gradient));
                });
                out
            })
            .collect();
        let mut offsets = Vec::with_capacity(positions.len() + 1);
        offsets.push(0);
        let total: usize = per_particle.iter().map(Vec::len).sum();
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut gradients = Vec::with_capacity(total);
        for list in per_particle {
            for (n, w, g) in list {
                nodes.push(n);
                weights.push(w);
                gradients.push(g);
            }
            offsets.push(nodes.len());
        }
        Self {
            offsets,
            nodes,
            weights,
            gradients,
        }
    }

    pub fn particle_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn nodes(&self, p: usize) -> &[usize] {
        &self.nodes[self.range(p)]
    }

    pub fn weights(&self, p: usize) -> &[f64] {
        &self.weights[self.range(p)]
    }

    pub fn gradients(&self, p: usize) -> &[Vector<D>] {
        &self.gradients[self.range(p)]
    }
}

/// Scatter mass and APIC momentum to the grid and set nodal velocities.
/// The reduction runs in particle order, so the result is independent of
/// the thread count.
pub fn p2g<const D: usize>(
    particles: &[Particle<D>],
    grid: &mut SparseGrid<D>,
    cache: &InterpolationCache<D>,
) {
    assert_eq!(particles.len(), cache.particle_count());
    let n = grid.len();
    grid.mass.clear();
    grid.mass.resize(n, 0.0);
    grid.momentum.clear();
    grid.momentum.resize(n, Vector::<D>::zeros());
    let node_positions: Vec<Vector<D>> = (0..n).map(|i| grid.position(i)).collect();
    for (p, particle) in particles.iter().enumerate() {
        for (&i, &w) in cache.nodes(p).iter().zip(cache.weights(p)) {
            let wm = w * particle.mass;
            grid.mass[i] += wm;
            let v = particle.velocity + particle.affine * (node_positions[i] - particle.position);
            grid.momentum[i] += v * wm;
        }
    }
    grid.velocity = grid
        .mass
        .iter()
        .zip(&grid.momentum)
        .map(|(m, mv)| {
            if *m > 0.0 {
                mv / *m
            } else {
                Vector::<D>::zeros()
            }
        })
        .collect();
}

/// Gather velocities and affine matrices from the grid velocities.
pub fn g2p<const D: usize>(
    grid: &SparseGrid<D>,
    particles: &mut [Particle<D>],
    cache: &InterpolationCache<D>,
) {
    assert_eq!(particles.len(), cache.particle_count());
    let inv_d = 4.0 / (grid.dx * grid.dx);
    particles
        .par_iter_mut()
        .enumerate()
        .for_each(|(p, particle)| {
            let mut v = Vector::<D>::zeros();
            let mut b = Matrix::<D>::zeros();
            for (&i, &w) in cache.nodes(p).iter().zip(cache.weights(p)) {
                let vi = grid.velocity[i];
                v += vi * w;
                b += vi * (grid.position(i) - particle.position).transpose() * w;
            }
            particle.velocity = v;
            particle.affine = b * inv_d;
        });
}

/// `sum_i v_i grad(w_ip)^T` for one particle.
pub fn velocity_gradient<const D: usize>(
    velocities: &[Vector<D>],
    cache: &InterpolationCache<D>,
    p: usize,
) -> Matrix<D> {
    let mut grad = Matrix::<D>::zeros();
    for (&i, g) in cache.nodes(p).iter().zip(cache.gradients(p)) {
        grad += velocities[i] * g.transpose();
    }
    grad
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StrainReport {
    /// Particles whose updated `det(F)` was not positive. They keep the
    /// elastic update and skip plasticity.
    pub inverted: usize,
}

/// `F <- return_map((I + dt grad v) F)` with weights from the start of step.
pub fn update_strain<const D: usize>(
    particles: &mut [Particle<D>],
    velocities: &[Vector<D>],
    cache: &InterpolationCache<D>,
    materials: &[Material],
    dt: f64,
) -> StrainReport {
    let inverted = particles
        .par_iter_mut()
        .enumerate()
        .map(|(p, particle)| {
            let grad = velocity_gradient(velocities, cache, p);
            let f = (Matrix::<D>::identity() + grad * dt) * particle.deformation;
            if determinant(&f) <= 0.0 {
                particle.deformation = f;
                return 1usize;
            }
            particle.deformation = return_map(&f, &materials[particle.material]).unwrap_or(f);
            0
        })
        .sum();
    if inverted > 0 {
        log::warn!("{inverted} particles inverted during the strain update");
    }
    StrainReport { inverted }
}

pub fn advect<const D: usize>(particles: &mut [Particle<D>], dt: f64) {
    particles
        .par_iter_mut()
        .for_each(|p| p.position += p.velocity * dt);
}
