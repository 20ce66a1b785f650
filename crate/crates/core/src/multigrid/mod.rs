//! Node-embedding Galerkin multigrid: each coarse level embeds the fine nodes
//! with a kernel on a lattice of twice the spacing, coarse operators are
//! `R H R^T`, and a V-cycle with colored symmetric Gauss-Seidel smoothing and
//! a Jacobi-PCG coarse solve serves as preconditioner.

mod galerkin;
mod restriction;
mod smoother;

use std::sync::Arc;

use thiserror::Error;

pub use galerkin::galerkin_coarsen;
pub use restriction::{build_restriction, RestrictionOperator};
pub use smoother::{smooth_sgs, ColoredSmoother};

use crate::grid::{KernelKind, NodeLayout};
use crate::krylov::{jacobi, pcg, PcgError};
use crate::objective::BlockSparseMatrix;

/// Matches the iteration cap used for the single-level baseline.
pub const COARSE_ITERATION_CAP: usize = 10_000;
/// Relative tolerance of the coarse solve when the V-cycle must act as a
/// fixed linear operator.
pub const PINNED_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultigridError {
    #[error("diagonal block of node {0} is singular")]
    SingularDiagonal(usize),
    #[error("coarse stencil exceeds radius {radius}")]
    StencilOverflow { radius: usize },
    #[error("coarse solve failed: {0}")]
    CoarseSolve(#[from] PcgError),
    #[error("hierarchy needs at least one level")]
    NoLevels,
}

/// How far the coarsest-level CG is run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CoarseSolveMode {
    /// Stop at half the initial preconditioned residual norm.
    #[default]
    Adaptive,
    /// Converge to [`PINNED_TOLERANCE`] so the cycle is a linear operator.
    Pinned,
}

impl CoarseSolveMode {
    fn relative_tolerance(self) -> f64 {
        match self {
            CoarseSolveMode::Adaptive => 0.5,
            CoarseSolveMode::Pinned => PINNED_TOLERANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoarseSolveOutcome {
    pub iterations: usize,
    /// The iteration cap was reached; the last iterate is returned.
    pub capped: bool,
}

/// Jacobi-preconditioned CG from a zero initial guess.
pub fn coarse_solve<const D: usize>(
    matrix: &BlockSparseMatrix<D>,
    b: &[f64],
    diagonal: &[f64],
    mode: CoarseSolveMode,
) -> Result<(Vec<f64>, CoarseSolveOutcome), MultigridError> {
    let mut x = vec![0.0; b.len()];
    let out = pcg(
        |v, y| matrix.multiply_into(v, y),
        jacobi(diagonal),
        b,
        &mut x,
        mode.relative_tolerance(),
        COARSE_ITERATION_CAP,
    )?;
    if !out.converged {
        log::warn!("coarse solve hit the {COARSE_ITERATION_CAP} iteration cap");
    }
    Ok((
        x,
        CoarseSolveOutcome {
            iterations: out.iterations,
            capped: !out.converged,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct Level<const D: usize> {
    pub layout: Arc<NodeLayout<D>>,
    pub matrix: Arc<BlockSparseMatrix<D>>,
    pub dirichlet: Vec<bool>,
    pub diagonal: Vec<f64>,
    smoother: Option<ColoredSmoother<D>>,
    /// Map to the next coarser level.
    pub restriction: Option<RestrictionOperator>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VCycleStats {
    pub coarse_iterations: usize,
    pub coarse_capped: bool,
    /// Cost in units of one fine-level matrix-vector product.
    pub work_units: f64,
}

#[derive(Clone, Debug)]
pub struct MultigridHierarchy<const D: usize> {
    levels: Vec<Level<D>>,
    embedding: KernelKind,
}

impl<const D: usize> MultigridHierarchy<D> {
    /// Build up to `levels` levels on top of the level-0 system. Coarsening
    /// stops early, with a warning, once it no longer reduces the node count.
    pub fn build(
        matrix: Arc<BlockSparseMatrix<D>>,
        layout: Arc<NodeLayout<D>>,
        dirichlet: &[bool],
        levels: usize,
        embedding: KernelKind,
    ) -> Result<Self, MultigridError> {
        if levels == 0 {
            return Err(MultigridError::NoLevels);
        }
        assert_eq!(matrix.rows(), layout.len());
        assert_eq!(dirichlet.len(), layout.len());
        let mut out: Vec<Level<D>> = Vec::with_capacity(levels);
        let mut current = Level {
            diagonal: matrix.diagonal(),
            layout,
            matrix,
            dirichlet: dirichlet.to_vec(),
            smoother: None,
            restriction: None,
        };
        let reach = restriction::embedding_reach(embedding);
        while out.len() + 1 < levels {
            let (coarse_layout, r) = build_restriction(&current.layout, embedding);
            assert!(r.max_fine_entries() <= 3usize.pow(D as u32));
            if coarse_layout.is_empty() || coarse_layout.len() >= current.layout.len() {
                log::warn!(
                    "stopping coarsening at {} levels: coarse level would have {} nodes",
                    out.len() + 1,
                    coarse_layout.len()
                );
                break;
            }
            let mut coarse_dirichlet = vec![false; coarse_layout.len()];
            for (i, &d) in current.dirichlet.iter().enumerate() {
                if d {
                    for &(c, w) in r.fine_row(i) {
                        if w > 0.0 {
                            coarse_dirichlet[c as usize] = true;
                        }
                    }
                }
            }
            let radius = galerkin::coarse_radius(current.matrix.radius(), reach);
            let coarse_matrix = galerkin_coarsen(
                &current.matrix,
                &r,
                &coarse_layout,
                radius,
                &coarse_dirichlet,
            )?;
            current.smoother = Some(ColoredSmoother::new(&current.matrix, &current.layout)?);
            current.restriction = Some(r);
            out.push(current);
            current = Level {
                diagonal: coarse_matrix.diagonal(),
                layout: Arc::new(coarse_layout),
                matrix: Arc::new(coarse_matrix),
                dirichlet: coarse_dirichlet,
                smoother: None,
                restriction: None,
            };
        }
        out.push(current);
        Ok(Self {
            levels: out,
            embedding,
        })
    }

    pub fn levels(&self) -> &[Level<D>] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn embedding(&self) -> KernelKind {
        self.embedding
    }

    pub fn fine_matrix(&self) -> &BlockSparseMatrix<D> {
        &self.levels[0].matrix
    }

    fn relative_cost(&self, m: usize) -> f64 {
        let fine = self.levels[0].matrix.structural_blocks().max(1) as f64;
        self.levels[m].matrix.structural_blocks() as f64 / fine
    }

    /// `u = V b`; Dirichlet components of the result are zero.
    pub fn vcycle(
        &self,
        b: &[f64],
        mode: CoarseSolveMode,
    ) -> Result<(Vec<f64>, VCycleStats), MultigridError> {
        let top = self.levels.len() - 1;
        let mut stats = VCycleStats::default();
        let mut rhs: Vec<Vec<f64>> = Vec::with_capacity(self.levels.len());
        let mut sol: Vec<Vec<f64>> = Vec::with_capacity(self.levels.len());
        let mut b0 = b.to_vec();
        mask(&mut b0, &self.levels[0].dirichlet, D);
        rhs.push(b0);

        for m in 0..top {
            let level = &self.levels[m];
            let smoother = level
                .smoother
                .as_ref()
                .expect("non-coarsest level has a smoother");
            let mut u = vec![0.0; rhs[m].len()];
            smoother.sweep(&level.matrix, &mut u, &rhs[m]);
            let mut residual = level.matrix.multiply(&u);
            for (r, bi) in residual.iter_mut().zip(&rhs[m]) {
                *r = bi - *r;
            }
            let next = &self.levels[m + 1];
            let mut coarse_b = vec![0.0; next.layout.len() * D];
            level
                .restriction
                .as_ref()
                .expect("non-coarsest level has a restriction")
                .restrict::<D>(&residual, &mut coarse_b);
            mask(&mut coarse_b, &next.dirichlet, D);
            rhs.push(coarse_b);
            sol.push(u);
            stats.work_units += 3.0 * self.relative_cost(m);
        }

        let coarsest = &self.levels[top];
        let (u_top, outcome) = coarse_solve(&coarsest.matrix, &rhs[top], &coarsest.diagonal, mode)?;
        stats.coarse_iterations = outcome.iterations;
        stats.coarse_capped = outcome.capped;
        stats.work_units += (outcome.iterations as f64 + 1.0) * self.relative_cost(top);
        let mut correction = u_top;

        for m in (0..top).rev() {
            let level = &self.levels[m];
            let mut u = std::mem::take(&mut sol[m]);
            level
                .restriction
                .as_ref()
                .expect("non-coarsest level has a restriction")
                .prolong_add::<D>(&correction, &mut u);
            level
                .smoother
                .as_ref()
                .expect("non-coarsest level has a smoother")
                .sweep(&level.matrix, &mut u, &rhs[m]);
            stats.work_units += 2.0 * self.relative_cost(m);
            correction = u;
        }
        mask(&mut correction, &self.levels[0].dirichlet, D);
        Ok((correction, stats))
    }
}

fn mask(x: &mut [f64], dirichlet: &[bool], d: usize) {
    for (i, &f) in dirichlet.iter().enumerate() {
        if f {
            x[i * d..i * d + d].fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests;
