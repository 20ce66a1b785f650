use rayon::prelude::*;

use crate::grid::{for_each_stencil_node, KernelKind, NodeLayout};
use crate::linalg::Vector;

/// Embedding of fine nodes into a coarse lattice of twice the spacing.
/// Prolongation interpolates coarse values to fine nodes with the embedding
/// kernel; restriction is its transpose.
#[derive(Clone, Debug)]
pub struct RestrictionOperator {
    fine_offsets: Vec<usize>,
    fine_entries: Vec<(u32, f64)>,
    coarse_offsets: Vec<usize>,
    coarse_entries: Vec<(u32, f64)>,
}

impl RestrictionOperator {
    pub fn fine_len(&self) -> usize {
        self.fine_offsets.len() - 1
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse_offsets.len() - 1
    }

    /// `(coarse node, weight)` pairs of fine node `i`.
    pub fn fine_row(&self, i: usize) -> &[(u32, f64)] {
        &self.fine_entries[self.fine_offsets[i]..self.fine_offsets[i + 1]]
    }

    /// `(fine node, weight)` pairs of coarse node `c`, ascending.
    pub fn coarse_row(&self, c: usize) -> &[(u32, f64)] {
        &self.coarse_entries[self.coarse_offsets[c]..self.coarse_offsets[c + 1]]
    }

    pub fn max_fine_entries(&self) -> usize {
        (0..self.fine_len())
            .map(|i| self.fine_row(i).len())
            .max()
            .unwrap_or(0)
    }

    /// `coarse = R fine` on flat nodal vectors.
    pub fn restrict<const D: usize>(&self, fine: &[f64], coarse: &mut [f64]) {
        assert_eq!(fine.len(), self.fine_len() * D);
        assert_eq!(coarse.len(), self.coarse_len() * D);
        coarse.par_chunks_mut(D).enumerate().for_each(|(c, out)| {
            let mut acc = Vector::<D>::zeros();
            for &(i, w) in self.coarse_row(c) {
                let i = i as usize;
                acc += Vector::<D>::from_column_slice(&fine[i * D..i * D + D]) * w;
            }
            out.copy_from_slice(acc.as_slice());
        });
    }

    /// `fine += R^T coarse`
    pub fn prolong_add<const D: usize>(&self, coarse: &[f64], fine: &mut [f64]) {
        assert_eq!(fine.len(), self.fine_len() * D);
        assert_eq!(coarse.len(), self.coarse_len() * D);
        fine.par_chunks_mut(D).enumerate().for_each(|(i, out)| {
            for &(c, w) in self.fine_row(i) {
                let c = c as usize;
                for a in 0..D {
                    out[a] += w * coarse[c * D + a];
                }
            }
        });
    }
}

/// Half-width, in fine cells, of the set of fine nodes that embed into one
/// coarse node.
pub(crate) fn embedding_reach(kind: KernelKind) -> usize {
    match kind {
        KernelKind::Linear => 1,
        KernelKind::QuadraticBSpline => 2,
    }
}

/// Coarse nodes are exactly those receiving a positive embedding weight from
/// at least one fine node.
pub fn build_restriction<const D: usize>(
    fine: &NodeLayout<D>,
    kind: KernelKind,
) -> (NodeLayout<D>, RestrictionOperator) {
    let coarse_dx = 2.0 * fine.dx;
    let per_fine: Vec<Vec<(crate::grid::LatticeCoord<D>, f64)>> = fine
        .coords()
        .par_iter()
        .map(|c| {
            // positions in units of fine cells keep the arithmetic exact
            let x = Vector::<D>::from_fn(|a, _| c.0[a] as f64);
            let mut out = Vec::with_capacity(kind.stencil_width().pow(D as u32));
            for_each_stencil_node(kind, &x, 2.0, |e| out.push((e.coord, e.weight)));
            out
        })
        .collect();
    let coarse = NodeLayout::from_coords(
        coarse_dx,
        per_fine.iter().flatten().map(|(c, _)| *c).collect(),
    );

    let mut fine_offsets = Vec::with_capacity(fine.len() + 1);
    fine_offsets.push(0);
    let mut fine_entries = Vec::new();
    for list in &per_fine {
        for (c, w) in list {
            let idx = coarse.index_of(c).expect("coarse node was just inserted");
            fine_entries.push((idx as u32, *w));
        }
        fine_offsets.push(fine_entries.len());
    }

    let mut coarse_offsets = vec![0usize; coarse.len() + 1];
    for &(c, _) in &fine_entries {
        coarse_offsets[c as usize + 1] += 1;
    }
    for c in 0..coarse.len() {
        coarse_offsets[c + 1] += coarse_offsets[c];
    }
    let mut cursor = coarse_offsets.clone();
    let mut coarse_entries = vec![(0u32, 0.0); fine_entries.len()];
    for i in 0..fine.len() {
        for &(c, w) in &fine_entries[fine_offsets[i]..fine_offsets[i + 1]] {
            coarse_entries[cursor[c as usize]] = (i as u32, w);
            cursor[c as usize] += 1;
        }
    }

    (
        coarse,
        RestrictionOperator {
            fine_offsets,
            fine_entries,
            coarse_offsets,
            coarse_entries,
        },
    )
}
