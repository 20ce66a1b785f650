//! The incremental potential of one implicit Euler step in nodal velocity
//! increments: energy, gradient, Hessian (assembled or matrix-free) and the
//! characteristic norm used for termination.
//!
//! Nodal vectors are flat `Vec<f64>` of length `nodes * D`, node-major.

mod norm;
mod sparse;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use norm::{compute_node_cn, scaled_norm, NodeCn, CN_LENGTH_FACTOR};
pub use sparse::{slot_index, slot_offset, BlockSparseMatrix, ABSENT};

use crate::constitutive::{
    fcr_energy_lame, fcr_stress_derivative_lame, fcr_stress_lame, project_spd_unchecked,
    stiffness_scale, Material, StressDerivative,
};
use crate::grid::{NodeLayout, SparseGrid};
use crate::linalg::{Matrix, Vector};
use crate::transfer::{InterpolationCache, Particle};

/// Stencil radius of the level-0 Hessian: quadratic B-spline supports of two
/// nodes overlap when their indices differ by at most 2 per axis.
pub const FINE_STENCIL_RADIUS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("velocity increment has non-finite entries")]
    NonFinite,
    #[error("vector length {got} does not match {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node {0} has zero stiffness scale; check material parameters")]
    ZeroStiffness(usize),
    #[error("particle {particle} references unknown material {material}")]
    UnknownMaterial { particle: usize, material: usize },
}

/// Whether per-particle stress derivatives are clamped to be positive
/// semi-definite before they enter the Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HessianProjection {
    #[default]
    Spd,
    /// The exact second derivative, used for derivative checks.
    None,
}

/// Start-of-step data frozen for the duration of one nonlinear solve.
#[derive(Clone, Debug)]
pub struct ObjectiveState<const D: usize> {
    layout: Arc<NodeLayout<D>>,
    dt: f64,
    gravity: Vector<D>,
    node_mass: Vec<f64>,
    velocity: Vec<f64>,
    dirichlet: Vec<bool>,
    dirichlet_dv: Vec<f64>,
    scripted: Vec<f64>,

    deformation: Vec<Matrix<D>>,
    volume: Vec<f64>,
    particle_mass: Vec<f64>,
    lame: Vec<(f64, f64)>,
    stiffness: Vec<f64>,

    // per (particle, stencil node) entry
    offsets: Vec<usize>,
    entry_node: Vec<usize>,
    entry_particle: Vec<u32>,
    entry_weight: Vec<f64>,
    /// `F_n^T grad(w_ip)`, so that `dF = dt * sum_i v_i c_ip^T`.
    entry_direction: Vec<Vector<D>>,

    // node -> entries, ascending
    node_offsets: Vec<usize>,
    node_entries: Vec<u32>,
}

impl<const D: usize> ObjectiveState<D> {
    /// `grid` must carry nodal masses and velocities from the transfer and
    /// its Dirichlet flags and scripted velocities.
    pub fn new(
        grid: &SparseGrid<D>,
        particles: &[Particle<D>],
        cache: &InterpolationCache<D>,
        materials: &[Material],
        dt: f64,
        gravity: Vector<D>,
    ) -> Result<Self, ObjectiveError> {
        assert_eq!(particles.len(), cache.particle_count());
        let n = grid.len();
        let mut velocity = vec![0.0; n * D];
        let mut dirichlet_dv = vec![0.0; n * D];
        let mut scripted = vec![0.0; n * D];
        for i in 0..n {
            velocity[i * D..i * D + D].copy_from_slice(grid.velocity[i].as_slice());
            if grid.dirichlet[i] {
                scripted[i * D..i * D + D].copy_from_slice(grid.scripted_velocity[i].as_slice());
                let dv = grid.scripted_velocity[i] - grid.velocity[i];
                dirichlet_dv[i * D..i * D + D].copy_from_slice(dv.as_slice());
            }
        }
        let material_stiffness: Vec<f64> = materials.iter().map(stiffness_scale::<D>).collect();
        let mut lame = Vec::with_capacity(particles.len());
        let mut stiffness = Vec::with_capacity(particles.len());
        for (p, particle) in particles.iter().enumerate() {
            let m = materials
                .get(particle.material)
                .ok_or(ObjectiveError::UnknownMaterial {
                    particle: p,
                    material: particle.material,
                })?;
            lame.push((m.mu, m.lambda));
            stiffness.push(material_stiffness[particle.material]);
        }

        let mut offsets = Vec::with_capacity(particles.len() + 1);
        offsets.push(0);
        let mut entry_node = Vec::new();
        let mut entry_particle = Vec::new();
        let mut entry_weight = Vec::new();
        let mut entry_direction = Vec::new();
        for (p, particle) in particles.iter().enumerate() {
            let ft = particle.deformation.transpose();
            for ((&i, &w), g) in cache
                .nodes(p)
                .iter()
                .zip(cache.weights(p))
                .zip(cache.gradients(p))
            {
                entry_node.push(i);
                entry_particle.push(p as u32);
                entry_weight.push(w);
                entry_direction.push(ft * g);
            }
            offsets.push(entry_node.len());
        }

        let mut node_offsets = vec![0usize; n + 1];
        for &i in &entry_node {
            node_offsets[i + 1] += 1;
        }
        for i in 0..n {
            node_offsets[i + 1] += node_offsets[i];
        }
        let mut cursor = node_offsets.clone();
        let mut node_entries = vec![0u32; entry_node.len()];
        for (e, &i) in entry_node.iter().enumerate() {
            node_entries[cursor[i]] = e as u32;
            cursor[i] += 1;
        }

        Ok(Self {
            layout: grid.layout().clone(),
            dt,
            gravity,
            node_mass: grid.mass.clone(),
            velocity,
            dirichlet: grid.dirichlet.clone(),
            dirichlet_dv,
            scripted,
            deformation: particles.iter().map(|p| p.deformation).collect(),
            volume: particles.iter().map(|p| p.volume).collect(),
            particle_mass: particles.iter().map(|p| p.mass).collect(),
            lame,
            stiffness,
            offsets,
            entry_node,
            entry_particle,
            entry_weight,
            entry_direction,
            node_offsets,
            node_entries,
        })
    }

    pub fn layout(&self) -> &Arc<NodeLayout<D>> {
        &self.layout
    }

    pub fn node_count(&self) -> usize {
        self.node_mass.len()
    }

    pub fn dofs(&self) -> usize {
        self.node_mass.len() * D
    }

    pub fn particle_count(&self) -> usize {
        self.volume.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gravity(&self) -> Vector<D> {
        self.gravity
    }

    pub fn node_mass(&self) -> &[f64] {
        &self.node_mass
    }

    /// Start-of-step nodal velocities, flat.
    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Velocity increment that satisfies the Dirichlet conditions and is zero
    /// on free nodes.
    pub fn initial_increment(&self) -> Vec<f64> {
        self.dirichlet_dv.clone()
    }

    /// End-of-step nodal velocities `v_n + dv`, with Dirichlet nodes set to
    /// their scripted velocity exactly.
    pub fn end_velocities(&self, dv: &[f64]) -> Vec<Vector<D>> {
        (0..self.node_count())
            .map(|i| {
                if self.dirichlet[i] {
                    Self::node_vec(&self.scripted, i)
                } else {
                    Self::node_vec(&self.velocity, i) + Self::node_vec(dv, i)
                }
            })
            .collect()
    }

    /// Zero the Dirichlet components of `x`.
    pub fn zero_dirichlet(&self, x: &mut [f64]) {
        for (i, &d) in self.dirichlet.iter().enumerate() {
            if d {
                x[i * D..i * D + D].fill(0.0);
            }
        }
    }

    pub(crate) fn particle_stiffness(&self) -> &[f64] {
        &self.stiffness
    }

    pub(crate) fn particle_mass(&self) -> &[f64] {
        &self.particle_mass
    }

    pub(crate) fn node_entry_range(&self, i: usize) -> &[u32] {
        &self.node_entries[self.node_offsets[i]..self.node_offsets[i + 1]]
    }

    pub(crate) fn entry_particle(&self, e: usize) -> usize {
        self.entry_particle[e] as usize
    }

    pub(crate) fn entry_weight(&self, e: usize) -> f64 {
        self.entry_weight[e]
    }

    fn check(&self, x: &[f64]) -> Result<(), ObjectiveError> {
        if x.len() != self.dofs() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dofs(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite);
        }
        Ok(())
    }

    #[inline]
    fn node_vec(x: &[f64], i: usize) -> Vector<D> {
        Vector::<D>::from_column_slice(&x[i * D..i * D + D])
    }

    /// Deformation gradients at the virtually displaced nodes.
    pub fn deformation_at(&self, dv: &[f64]) -> Result<Vec<Matrix<D>>, ObjectiveError> {
        self.check(dv)?;
        Ok(self.deformations_unchecked(dv))
    }

    fn deformations_unchecked(&self, dv: &[f64]) -> Vec<Matrix<D>> {
        (0..self.particle_count())
            .into_par_iter()
            .map(|p| {
                let mut grad = Matrix::<D>::zeros();
                for e in self.offsets[p]..self.offsets[p + 1] {
                    let i = self.entry_node[e];
                    let v = Self::node_vec(&self.velocity, i) + Self::node_vec(dv, i);
                    grad += v * self.entry_direction[e].transpose();
                }
                self.deformation[p] + grad * self.dt
            })
            .collect()
    }

    pub fn energy(&self, dv: &[f64]) -> Result<f64, ObjectiveError> {
        self.check(dv)?;
        let f = self.deformations_unchecked(dv);
        let densities: Vec<f64> = f
            .par_iter()
            .zip(&self.lame)
            .map(|(f, (mu, lambda))| fcr_energy_lame(f, *mu, *lambda))
            .collect();
        let mut elastic = 0.0;
        for (psi, v) in densities.iter().zip(&self.volume) {
            elastic += v * psi;
        }
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for i in 0..self.node_count() {
            let d = Self::node_vec(dv, i);
            let v = Self::node_vec(&self.velocity, i) + d;
            kinetic += 0.5 * self.node_mass[i] * d.norm_squared();
            potential -= self.dt * self.node_mass[i] * self.gravity.dot(&v);
        }
        let total = kinetic + potential + elastic;
        if total.is_finite() {
            Ok(total)
        } else {
            Err(ObjectiveError::NonFinite)
        }
    }

    /// Gradient with Dirichlet components zeroed.
    pub fn gradient(&self, dv: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check(dv)?;
        let f = self.deformations_unchecked(dv);
        let stress: Vec<Matrix<D>> = f
            .par_iter()
            .zip(&self.lame)
            .zip(&self.volume)
            .map(|((f, (mu, lambda)), v)| fcr_stress_lame(f, *mu, *lambda) * (v * self.dt))
            .collect();
        let mut g = vec![0.0; self.dofs()];
        g.par_chunks_mut(D).enumerate().for_each(|(i, gi)| {
            if self.dirichlet[i] {
                return;
            }
            let m = self.node_mass[i];
            let mut acc = Self::node_vec(dv, i) * m - self.gravity * (self.dt * m);
            for &e in self.node_entry_range(i) {
                let e = e as usize;
                acc += stress[self.entry_particle[e] as usize] * self.entry_direction[e];
            }
            gi.copy_from_slice(acc.as_slice());
        });
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite);
        }
        Ok(g)
    }

    /// Per-particle stress derivatives at `dv`.
    pub fn particle_hessians(
        &self,
        dv: &[f64],
        projection: HessianProjection,
    ) -> Result<ParticleHessians<D>, ObjectiveError> {
        self.check(dv)?;
        let f = self.deformations_unchecked(dv);
        let n2 = D * D;
        let per: Vec<Vec<f64>> = f
            .par_iter()
            .zip(&self.lame)
            .map(|(f, (mu, lambda))| {
                let a = fcr_stress_derivative_lame(f, *mu, *lambda);
                let a = match projection {
                    HessianProjection::Spd => project_spd_unchecked(&a),
                    HessianProjection::None => a,
                };
                a.to_row_major()
            })
            .collect();
        let mut data = Vec::with_capacity(per.len() * n2 * n2);
        for block in per {
            data.extend_from_slice(&block);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite);
        }
        Ok(ParticleHessians { data })
    }

    /// Assemble `M + dt^2 sum_p V_p c^T A_p c` with Dirichlet rows and
    /// columns replaced by identity.
    pub fn assemble_hessian(
        &self,
        dv: &[f64],
        projection: HessianProjection,
    ) -> Result<BlockSparseMatrix<D>, ObjectiveError> {
        let hessians = self.particle_hessians(dv, projection)?;
        Ok(self.assemble_from(&hessians))
    }

    pub fn assemble_from(&self, hessians: &ParticleHessians<D>) -> BlockSparseMatrix<D> {
        let radius = FINE_STENCIL_RADIUS;
        let mut h = BlockSparseMatrix::<D>::with_layout(&self.layout, radius);
        let center = h.center_slot();
        let layout = &self.layout;
        let dt2 = self.dt * self.dt;
        h.par_rows_mut().for_each(|(i, _neighbors, blocks)| {
            let ci = layout.coord(i);
            for &e in self.node_entry_range(i) {
                let e = e as usize;
                let p = self.entry_particle[e] as usize;
                let a = hessians.particle(p);
                let c = &self.entry_direction[e];
                let scale = dt2 * self.volume[p];
                // t[a][b][d] = sum_beta A[a beta, b d] c_beta
                let mut t = [[[0.0; 3]; 3]; 3];
                for (ra, ta) in t.iter_mut().enumerate().take(D) {
                    for (rb, tb) in ta.iter_mut().enumerate().take(D) {
                        for (rd, tv) in tb.iter_mut().enumerate().take(D) {
                            let mut acc = 0.0;
                            for beta in 0..D {
                                acc += a[(ra * D + beta) * D * D + rb * D + rd] * c[beta];
                            }
                            *tv = acc * scale;
                        }
                    }
                }
                for e2 in self.offsets[p]..self.offsets[p + 1] {
                    let j = self.entry_node[e2];
                    let cj = layout.coord(j);
                    let off: [i64; D] = std::array::from_fn(|ax| cj.0[ax] - ci.0[ax]);
                    let slot = slot_index::<D>(radius, &off)
                        .expect("particle stencil exceeds Hessian radius");
                    let d = &self.entry_direction[e2];
                    let block = &mut blocks[slot];
                    for ra in 0..D {
                        for rb in 0..D {
                            let mut acc = 0.0;
                            for rd in 0..D {
                                acc += t[ra][rb][rd] * d[rd];
                            }
                            block[(ra, rb)] += acc;
                        }
                    }
                }
            }
            let m = self.node_mass[i];
            for ax in 0..D {
                blocks[center][(ax, ax)] += m;
            }
        });
        h.apply_dirichlet(&self.dirichlet);
        h
    }

    /// Hessian operator that never forms the global matrix.
    pub fn matrix_free(
        &self,
        dv: &[f64],
        projection: HessianProjection,
    ) -> Result<MatrixFreeHessian<'_, D>, ObjectiveError> {
        Ok(MatrixFreeHessian {
            state: self,
            hessians: self.particle_hessians(dv, projection)?,
        })
    }

    /// `H u` with the SPD-projected Hessian at `dv`.
    pub fn multiply_matrix_free(&self, dv: &[f64], u: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        let op = self.matrix_free(dv, HessianProjection::Spd)?;
        op.check(u)?;
        Ok(op.apply(u))
    }
}

/// Stress derivatives of all particles, row-major `D^2 x D^2` each.
#[derive(Clone, Debug)]
pub struct ParticleHessians<const D: usize> {
    data: Vec<f64>,
}

impl<const D: usize> ParticleHessians<D> {
    #[inline]
    pub fn particle(&self, p: usize) -> &[f64] {
        let n = D * D * D * D;
        &self.data[p * n..(p + 1) * n]
    }

    pub fn stress_derivative(&self, p: usize) -> StressDerivative<D> {
        let a = self.particle(p);
        StressDerivative::from_fn(|r, c| a[r * D * D + c])
    }
}

pub struct MatrixFreeHessian<'a, const D: usize> {
    state: &'a ObjectiveState<D>,
    hessians: ParticleHessians<D>,
}

impl<const D: usize> MatrixFreeHessian<'_, D> {
    pub fn dofs(&self) -> usize {
        self.state.dofs()
    }

    fn check(&self, u: &[f64]) -> Result<(), ObjectiveError> {
        self.state.check(u)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.apply_into(u, &mut y);
        y
    }

    pub fn apply_into(&self, u: &[f64], y: &mut [f64]) {
        let s = self.state;
        assert_eq!(u.len(), s.dofs());
        let masked = |i: usize| {
            if s.dirichlet[i] {
                Vector::<D>::zeros()
            } else {
                ObjectiveState::<D>::node_vec(u, i)
            }
        };
        let d_stress: Vec<Matrix<D>> = (0..s.particle_count())
            .into_par_iter()
            .map(|p| {
                let mut df = Matrix::<D>::zeros();
                for e in s.offsets[p]..s.offsets[p + 1] {
                    df += masked(s.entry_node[e]) * s.entry_direction[e].transpose();
                }
                let a = self.hessians.particle(p);
                let mut dp = Matrix::<D>::zeros();
                for r in 0..D {
                    for c in 0..D {
                        let row = &a[(r * D + c) * D * D..(r * D + c + 1) * D * D];
                        let mut acc = 0.0;
                        for k in 0..D {
                            for l in 0..D {
                                acc += row[k * D + l] * df[(k, l)];
                            }
                        }
                        dp[(r, c)] = acc;
                    }
                }
                dp * (s.dt * s.dt * s.volume[p])
            })
            .collect();
        y.par_chunks_mut(D).enumerate().for_each(|(i, yi)| {
            if s.dirichlet[i] {
                yi.copy_from_slice(&u[i * D..i * D + D]);
                return;
            }
            let mut acc = ObjectiveState::<D>::node_vec(u, i) * s.node_mass[i];
            for &e in s.node_entry_range(i) {
                let e = e as usize;
                acc += d_stress[s.entry_particle[e] as usize] * s.entry_direction[e];
            }
            yi.copy_from_slice(acc.as_slice());
        });
    }

    /// Scalar diagonal of the operator, for Jacobi preconditioning.
    pub fn diagonal(&self) -> Vec<f64> {
        let s = self.state;
        let dt2 = s.dt * s.dt;
        let mut d = vec![0.0; s.dofs()];
        d.par_chunks_mut(D).enumerate().for_each(|(i, di)| {
            if s.dirichlet[i] {
                di.fill(1.0);
                return;
            }
            di.fill(s.node_mass[i]);
            for &e in s.node_entry_range(i) {
                let e = e as usize;
                let p = s.entry_particle[e] as usize;
                let a = self.hessians.particle(p);
                let c = &s.entry_direction[e];
                let scale = dt2 * s.volume[p];
                for (ax, v) in di.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for beta in 0..D {
                        for delta in 0..D {
                            acc += a[(ax * D + beta) * D * D + ax * D + delta] * c[beta] * c[delta];
                        }
                    }
                    *v += scale * acc;
                }
            }
        });
        d
    }
}
