use rayon::prelude::*;

use crate::grid::NodeLayout;
use crate::linalg::{Matrix, Vector};
use crate::objective::{BlockSparseMatrix, ABSENT};

use super::MultigridError;

/// Colored block Gauss-Seidel. Nodes share a color when their lattice
/// coordinates agree modulo `radius + 1` on every axis, so no two nodes of
/// one color are coupled and a color can be updated in parallel.
#[derive(Clone, Debug)]
pub struct ColoredSmoother<const D: usize> {
    colors: Vec<Vec<usize>>,
    inverse_diagonal: Vec<Matrix<D>>,
}

impl<const D: usize> ColoredSmoother<D> {
    pub fn new(
        matrix: &BlockSparseMatrix<D>,
        layout: &NodeLayout<D>,
    ) -> Result<Self, MultigridError> {
        let modulus = matrix.radius() as i64 + 1;
        let count = (modulus as usize).pow(D as u32);
        let mut colors = vec![Vec::new(); count];
        for i in 0..layout.len() {
            let c = layout.coord(i);
            let mut color = 0usize;
            let mut stride = 1usize;
            for a in 0..D {
                color += c.0[a].rem_euclid(modulus) as usize * stride;
                stride *= modulus as usize;
            }
            colors[color].push(i);
        }
        colors.retain(|c| !c.is_empty());
        let inverse_diagonal = (0..matrix.rows())
            .into_par_iter()
            .map(|i| {
                matrix
                    .diagonal_block(i)
                    .try_inverse()
                    .filter(|m| m.iter().all(|v| v.is_finite()))
                    .ok_or(MultigridError::SingularDiagonal(i))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            colors,
            inverse_diagonal,
        })
    }

    pub fn color_count(&self) -> usize {
        self.colors.len()
    }

    fn update_color(
        &self,
        matrix: &BlockSparseMatrix<D>,
        color: &[usize],
        u: &mut [f64],
        b: &[f64],
    ) {
        let center = matrix.center_slot();
        let updates: Vec<Vector<D>> = color
            .par_iter()
            .map(|&i| {
                let mut r = Vector::<D>::from_column_slice(&b[i * D..i * D + D]);
                for (s, (n, blk)) in matrix
                    .row_neighbors(i)
                    .iter()
                    .zip(matrix.row_blocks(i))
                    .enumerate()
                {
                    if *n == ABSENT || s == center {
                        continue;
                    }
                    let j = *n as usize;
                    r -= blk * Vector::<D>::from_column_slice(&u[j * D..j * D + D]);
                }
                self.inverse_diagonal[i] * r
            })
            .collect();
        for (&i, v) in color.iter().zip(&updates) {
            u[i * D..i * D + D].copy_from_slice(v.as_slice());
        }
    }

    /// One symmetric sweep: colors in order, then in reverse.
    pub fn sweep(&self, matrix: &BlockSparseMatrix<D>, u: &mut [f64], b: &[f64]) {
        for color in &self.colors {
            self.update_color(matrix, color, u, b);
        }
        for color in self.colors.iter().rev() {
            self.update_color(matrix, color, u, b);
        }
    }
}

/// Apply `sweeps` symmetric Gauss-Seidel sweeps to `H u = b`.
pub fn smooth_sgs<const D: usize>(
    matrix: &BlockSparseMatrix<D>,
    layout: &NodeLayout<D>,
    u: &mut [f64],
    b: &[f64],
    sweeps: usize,
) -> Result<(), MultigridError> {
    let smoother = ColoredSmoother::new(matrix, layout)?;
    for _ in 0..sweeps {
        smoother.sweep(matrix, u, b);
    }
    Ok(())
}
