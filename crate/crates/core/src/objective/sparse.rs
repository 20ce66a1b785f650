//! Block-sparse symmetric matrices stored by lattice offset. Every row owns a
//! fixed box of `(2r + 1)^D` slots, one per neighbor offset within radius
//! `r`; absent neighbors are marked and their blocks stay zero.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::grid::NodeLayout;
use crate::linalg::{Matrix, Vector};

pub const ABSENT: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct BlockSparseMatrix<const D: usize> {
    rows: usize,
    radius: usize,
    slots: usize,
    neighbors: Vec<u32>,
    blocks: Vec<Matrix<D>>,
}

/// Per-axis offsets of a slot.
pub fn slot_offset<const D: usize>(radius: usize, slot: usize) -> [i64; D] {
    let width = 2 * radius + 1;
    let mut off = [0i64; D];
    let mut rem = slot;
    for o in off.iter_mut() {
        *o = (rem % width) as i64 - radius as i64;
        rem /= width;
    }
    off
}

/// Slot of a per-axis offset, or `None` outside the box.
pub fn slot_index<const D: usize>(radius: usize, offset: &[i64; D]) -> Option<usize> {
    let width = 2 * radius + 1;
    let mut slot = 0;
    let mut stride = 1;
    for &o in offset {
        let shifted = o + radius as i64;
        if shifted < 0 || shifted >= width as i64 {
            return None;
        }
        slot += shifted as usize * stride;
        stride *= width;
    }
    Some(slot)
}

impl<const D: usize> BlockSparseMatrix<D> {
    /// Zero matrix whose slots cover every active node within `radius`.
    pub fn with_layout(layout: &NodeLayout<D>, radius: usize) -> Self {
        let rows = layout.len();
        let slots = (2 * radius + 1).pow(D as u32);
        let offsets: Vec<[i64; D]> = (0..slots).map(|s| slot_offset::<D>(radius, s)).collect();
        let mut neighbors = vec![ABSENT; rows * slots];
        neighbors
            .par_chunks_mut(slots.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                let c = layout.coord(i);
                for (s, off) in offsets.iter().enumerate() {
                    if let Some(j) = layout.index_of(&c.offset(off)) {
                        row[s] = j as u32;
                    }
                }
            });
        Self {
            rows,
            radius,
            slots,
            neighbors,
            blocks: vec![Matrix::<D>::zeros(); rows * slots],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dofs(&self) -> usize {
        self.rows * D
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn slots_per_row(&self) -> usize {
        self.slots
    }

    /// Slot holding the diagonal block.
    pub fn center_slot(&self) -> usize {
        (self.slots - 1) / 2
    }

    /// Slot of the transposed entry: the offset negated.
    #[inline]
    pub fn mirror_slot(&self, slot: usize) -> usize {
        self.slots - 1 - slot
    }

    #[inline]
    pub fn row_neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.slots..(i + 1) * self.slots]
    }

    #[inline]
    pub fn row_blocks(&self, i: usize) -> &[Matrix<D>] {
        &self.blocks[i * self.slots..(i + 1) * self.slots]
    }

    #[inline]
    pub fn row_blocks_mut(&mut self, i: usize) -> &mut [Matrix<D>] {
        &mut self.blocks[i * self.slots..(i + 1) * self.slots]
    }

    /// Mutable rows in parallel together with their neighbor tables.
    pub fn par_rows_mut(
        &mut self,
    ) -> impl IndexedParallelIterator<Item = (usize, &[u32], &mut [Matrix<D>])> {
        let slots = self.slots.max(1);
        self.neighbors
            .par_chunks(slots)
            .zip(self.blocks.par_chunks_mut(slots))
            .enumerate()
            .map(|(i, (n, b))| (i, n, b))
    }

    #[inline]
    pub fn diagonal_block(&self, i: usize) -> &Matrix<D> {
        &self.blocks[i * self.slots + self.center_slot()]
    }

    /// Block `(i, j)` when `j` is inside row `i`'s box.
    pub fn block(&self, i: usize, j: usize) -> Option<&Matrix<D>> {
        let s = self
            .row_neighbors(i)
            .iter()
            .position(|&n| n as usize == j)?;
        Some(&self.row_blocks(i)[s])
    }

    /// Number of structurally present blocks.
    pub fn structural_blocks(&self) -> usize {
        self.neighbors.iter().filter(|&&n| n != ABSENT).count()
    }

    pub fn max_blocks_per_row(&self) -> usize {
        (0..self.rows)
            .map(|i| {
                self.row_neighbors(i)
                    .iter()
                    .filter(|&&n| n != ABSENT)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn mean_blocks_per_row(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.structural_blocks() as f64 / self.rows as f64
        }
    }

    /// `y = A x` on flat vectors of length `rows * D`.
    pub fn multiply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dofs());
        assert_eq!(y.len(), self.dofs());
        y.par_chunks_mut(D).enumerate().for_each(|(i, yi)| {
            let mut acc = Vector::<D>::zeros();
            for (n, b) in self.row_neighbors(i).iter().zip(self.row_blocks(i)) {
                if *n != ABSENT {
                    let j = *n as usize;
                    acc += b * Vector::<D>::from_column_slice(&x[j * D..j * D + D]);
                }
            }
            yi.copy_from_slice(acc.as_slice());
        });
    }

    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dofs()];
        self.multiply_into(x, &mut y);
        y
    }

    /// Scalar diagonal entries.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.dofs());
        for i in 0..self.rows {
            let b = self.diagonal_block(i);
            for a in 0..D {
                d.push(b[(a, a)]);
            }
        }
        d
    }

    /// Replace rows and columns of masked nodes with identity.
    pub fn apply_dirichlet(&mut self, mask: &[bool]) {
        assert_eq!(mask.len(), self.rows);
        let center = self.center_slot();
        self.par_rows_mut().for_each(|(i, neighbors, blocks)| {
            for (s, (n, b)) in neighbors.iter().zip(blocks.iter_mut()).enumerate() {
                if *n == ABSENT {
                    continue;
                }
                if mask[i] || mask[*n as usize] {
                    *b = if s == center && mask[i] {
                        Matrix::<D>::identity()
                    } else {
                        Matrix::<D>::zeros()
                    };
                }
            }
        });
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry of `A - A^T`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for (s, (n, b)) in self
                .row_neighbors(i)
                .iter()
                .zip(self.row_blocks(i))
                .enumerate()
            {
                if *n == ABSENT {
                    continue;
                }
                let j = *n as usize;
                let t = &self.row_blocks(j)[self.mirror_slot(s)];
                worst = worst.max((b - t.transpose()).amax());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dofs();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..self.rows {
            for (nb, b) in self.row_neighbors(i).iter().zip(self.row_blocks(i)) {
                if *nb == ABSENT {
                    continue;
                }
                let j = *nb as usize;
                for a in 0..D {
                    for c in 0..D {
                        m[(i * D + a, j * D + c)] = b[(a, c)];
                    }
                }
            }
        }
        m
    }
}
