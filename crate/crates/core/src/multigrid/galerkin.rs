use crate::grid::NodeLayout;
use crate::linalg::Matrix;
use crate::objective::{slot_index, BlockSparseMatrix, ABSENT};

use super::restriction::RestrictionOperator;
use super::MultigridError;

/// Radius of the coarse stencil produced by embedding a fine stencil of
/// radius `fine_radius` with the given embedding reach.
pub(crate) fn coarse_radius(fine_radius: usize, reach: usize) -> usize {
    (fine_radius + 2 * reach) / 2
}

/// `H_c = R H R^T` where the rows of `R` belonging to masked coarse nodes
/// are dropped; those rows and columns are set to identity instead.
pub fn galerkin_coarsen<const D: usize>(
    fine: &BlockSparseMatrix<D>,
    restriction: &RestrictionOperator,
    coarse_layout: &NodeLayout<D>,
    coarse_radius: usize,
    coarse_dirichlet: &[bool],
) -> Result<BlockSparseMatrix<D>, MultigridError> {
    assert_eq!(fine.rows(), restriction.fine_len());
    assert_eq!(coarse_layout.len(), restriction.coarse_len());
    let mut coarse = BlockSparseMatrix::<D>::with_layout(coarse_layout, coarse_radius);
    let center = coarse.center_slot();
    let overflow = std::sync::atomic::AtomicBool::new(false);
    use rayon::prelude::*;
    coarse.par_rows_mut().for_each(|(ci, _neighbors, blocks)| {
        if coarse_dirichlet[ci] {
            blocks[center] = Matrix::<D>::identity();
            return;
        }
        let cc = coarse_layout.coord(ci);
        for &(i, wi) in restriction.coarse_row(ci) {
            let i = i as usize;
            for (n, b) in fine.row_neighbors(i).iter().zip(fine.row_blocks(i)) {
                if *n == ABSENT {
                    continue;
                }
                let j = *n as usize;
                for &(cj, wj) in restriction.fine_row(j) {
                    let cj = cj as usize;
                    if coarse_dirichlet[cj] {
                        continue;
                    }
                    let cjc = coarse_layout.coord(cj);
                    let off: [i64; D] = std::array::from_fn(|a| cjc.0[a] - cc.0[a]);
                    match slot_index::<D>(coarse_radius, &off) {
                        Some(s) => blocks[s] += b * (wi * wj),
                        None => overflow.store(true, std::sync::atomic::Ordering::Relaxed),
                    }
                }
            }
        }
    });
    if overflow.into_inner() {
        return Err(MultigridError::StencilOverflow {
            radius: coarse_radius,
        });
    }
    Ok(coarse)
}
