use super::*;
use crate::grid::LatticeCoord;
use crate::linalg::Matrix;
use crate::objective::{HessianProjection, ObjectiveState};
use crate::testing::block_state;
use nalgebra::{DMatrix, DVector};

fn dense_restriction<const D: usize>(
    r: &RestrictionOperator,
    coarse_dirichlet: &[bool],
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(r.coarse_len() * D, r.fine_len() * D);
    for i in 0..r.fine_len() {
        for &(c, w) in r.fine_row(i) {
            let c = c as usize;
            if coarse_dirichlet[c] {
                continue;
            }
            for a in 0..D {
                m[(c * D + a, i * D + a)] = w;
            }
        }
    }
    m
}

fn fine_system<const D: usize>(state: &ObjectiveState<D>) -> Arc<BlockSparseMatrix<D>> {
    let dv = state.initial_increment();
    Arc::new(state.assemble_hessian(&dv, HessianProjection::Spd).unwrap())
}

fn hierarchy_for<const D: usize>(
    state: &ObjectiveState<D>,
    levels: usize,
    embedding: KernelKind,
) -> MultigridHierarchy<D> {
    MultigridHierarchy::build(
        fine_system(state),
        state.layout().clone(),
        state.dirichlet(),
        levels,
        embedding,
    )
    .unwrap()
}

fn line_layout(n: i64) -> NodeLayout<2> {
    NodeLayout::from_coords(0.1, (0..n).map(|i| LatticeCoord([i, 0])).collect())
}

#[test]
fn identity_coarsens_to_r_rt() {
    let fine = line_layout(8);
    let mut h = BlockSparseMatrix::<2>::with_layout(&fine, 2);
    for i in 0..h.rows() {
        let c = h.center_slot();
        h.row_blocks_mut(i)[c] = Matrix::<2>::identity();
    }
    let (coarse, r) = build_restriction(&fine, KernelKind::Linear);
    let none = vec![false; coarse.len()];
    let hc = galerkin_coarsen(&h, &r, &coarse, 2, &none).unwrap();
    let rd = dense_restriction::<2>(&r, &none);
    let expected = &rd * rd.transpose();
    assert!((hc.to_dense() - expected).norm() < 1e-14);
}

#[test]
fn chain_laplacian_matches_dense_triple_product() {
    let fine = line_layout(8);
    let mut h = BlockSparseMatrix::<2>::with_layout(&fine, 2);
    let center = h.center_slot();
    for i in 0..8 {
        let neighbors = h.row_neighbors(i).to_vec();
        for (s, n) in neighbors.iter().enumerate() {
            if *n == crate::objective::ABSENT {
                continue;
            }
            let j = *n as usize;
            let v = if s == center {
                2.5
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            };
            h.row_blocks_mut(i)[s] = Matrix::<2>::new(v, 0.0, 0.0, v);
        }
    }
    for embedding in [KernelKind::Linear, KernelKind::QuadraticBSpline] {
        let (coarse, r) = build_restriction(&fine, embedding);
        let none = vec![false; coarse.len()];
        let radius = galerkin::coarse_radius(2, restriction::embedding_reach(embedding));
        let hc = galerkin_coarsen(&h, &r, &coarse, radius, &none).unwrap();
        let rd = dense_restriction::<2>(&r, &none);
        let expected = &rd * h.to_dense() * rd.transpose();
        assert!((hc.to_dense() - &expected).norm() <= 1e-12 * expected.norm());
        let eig = hc.to_dense().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * expected.norm());
    }
}

#[test]
fn galerkin_identity_on_objective_hessian_with_dirichlet() {
    let state = block_state::<2>(4, 3, 1e5, 0.2, true);
    assert!(state.dofs() <= 500);
    let hierarchy = hierarchy_for(&state, 3, KernelKind::Linear);
    assert_eq!(hierarchy.level_count(), 3);
    for m in 0..2 {
        let fine = &hierarchy.levels()[m];
        let coarse = &hierarchy.levels()[m + 1];
        let r = dense_restriction::<2>(fine.restriction.as_ref().unwrap(), &coarse.dirichlet);
        let mut expected = &r * fine.matrix.to_dense() * r.transpose();
        for (c, &d) in coarse.dirichlet.iter().enumerate() {
            if d {
                for a in 0..2 {
                    expected[(c * 2 + a, c * 2 + a)] = 1.0;
                }
            }
        }
        let got = coarse.matrix.to_dense();
        assert!((got - &expected).norm() <= 1e-12 * expected.norm());
        assert!(coarse.matrix.max_asymmetry() <= 1e-12 * coarse.matrix.frobenius_norm());
    }
}

#[test]
fn hierarchy_shrinks_and_linear_sparsity_does_not_grow() {
    let state = block_state::<2>(8, 1, 1e5, 0.1, true);
    let h = hierarchy_for(&state, 3, KernelKind::Linear);
    let counts: Vec<usize> = h.levels().iter().map(|l| l.layout.len()).collect();
    assert!(counts.windows(2).all(|w| w[1] < w[0]), "{counts:?}");
    assert!(h.fine_matrix().max_blocks_per_row() <= 25);
    let means: Vec<f64> = h
        .levels()
        .iter()
        .map(|l| l.matrix.mean_blocks_per_row())
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");

    let q = hierarchy_for(&state, 3, KernelKind::QuadraticBSpline);
    assert!(q.levels()[1].matrix.radius() > h.levels()[1].matrix.radius());
}

#[test]
fn single_level_hierarchy_is_the_coarse_solve() {
    let state = block_state::<2>(3, 2, 1e5, 0.1, true);
    let h = hierarchy_for(&state, 1, KernelKind::Linear);
    assert_eq!(h.level_count(), 1);
    let mut b: Vec<f64> = (0..state.dofs()).map(|k| (k as f64 * 0.3).sin()).collect();
    state.zero_dirichlet(&mut b);
    let (u, _) = h.vcycle(&b, CoarseSolveMode::Adaptive).unwrap();
    let (v, _) = coarse_solve(
        h.fine_matrix(),
        &b,
        &h.levels()[0].diagonal,
        CoarseSolveMode::Adaptive,
    )
    .unwrap();
    assert_eq!(u, v);
}

#[test]
fn smoother_examples() {
    let state = block_state::<2>(3, 4, 1e5, 0.2, true);
    let h = fine_system(&state);
    let layout = state.layout().clone();
    let exact: Vec<f64> = (0..state.dofs()).map(|k| (k as f64 * 0.11).cos()).collect();
    let b = h.multiply(&exact);
    let mut u = exact.clone();
    smooth_sgs(&h, &layout, &mut u, &b, 1).unwrap();
    let diff: f64 = u
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12);

    // block diagonal matrix: one sweep solves exactly
    let mut diag = BlockSparseMatrix::<2>::with_layout(&layout, 2);
    let c = diag.center_slot();
    for i in 0..diag.rows() {
        diag.row_blocks_mut(i)[c] = Matrix::<2>::new(2.0 + i as f64, 0.5, 0.5, 3.0);
    }
    let rhs: Vec<f64> = (0..state.dofs()).map(|k| k as f64).collect();
    let mut u = vec![0.0; rhs.len()];
    smooth_sgs(&diag, &layout, &mut u, &rhs, 1).unwrap();
    let res: Vec<f64> = diag
        .multiply(&u)
        .iter()
        .zip(&rhs)
        .map(|(a, b)| a - b)
        .collect();
    assert!(res.iter().all(|r| r.abs() < 1e-12));

    // error energy norm decreases every sweep
    let dense = h.to_dense();
    let mut u = vec![0.0; exact.len()];
    let energy = |u: &[f64]| {
        let e = DVector::from_iterator(u.len(), u.iter().zip(&exact).map(|(a, b)| a - b));
        (e.transpose() * &dense * &e)[(0, 0)]
    };
    let mut last = energy(&u);
    let smoother = ColoredSmoother::new(&h, &layout).unwrap();
    assert_eq!(smoother.color_count(), 9);
    for _ in 0..10 {
        smoother.sweep(&h, &mut u, &b);
        let now = energy(&u);
        assert!(now < last);
        last = now;
    }
}

#[test]
fn singular_diagonal_block_is_rejected() {
    let layout = line_layout(3);
    let h = BlockSparseMatrix::<2>::with_layout(&layout, 2);
    assert!(matches!(
        ColoredSmoother::new(&h, &layout),
        Err(MultigridError::SingularDiagonal(0))
    ));
}

#[test]
fn coarse_solve_examples() {
    let state = block_state::<2>(3, 5, 1e5, 0.2, false);
    let h = fine_system(&state);
    let d = h.diagonal();
    let zero = vec![0.0; state.dofs()];
    let (u, out) = coarse_solve(&h, &zero, &d, CoarseSolveMode::Adaptive).unwrap();
    assert!(u.iter().all(|v| *v == 0.0));
    assert_eq!(out.iterations, 0);

    let b: Vec<f64> = (0..state.dofs()).map(|k| (k as f64 * 0.5).sin()).collect();
    let (u1, o1) = coarse_solve(&h, &b, &d, CoarseSolveMode::Adaptive).unwrap();
    let b10: Vec<f64> = b.iter().map(|v| 10.0 * v).collect();
    let (u10, o10) = coarse_solve(&h, &b10, &d, CoarseSolveMode::Adaptive).unwrap();
    assert_eq!(o1.iterations, o10.iterations);
    for (a, c) in u1.iter().zip(&u10) {
        assert!((10.0 * a - c).abs() <= 1e-12 * c.abs().max(1e-12));
    }

    let layout = state.layout();
    let mut diag = BlockSparseMatrix::<2>::with_layout(layout, 2);
    let c = diag.center_slot();
    for i in 0..diag.rows() {
        diag.row_blocks_mut(i)[c] = Matrix::<2>::new(1.0 + i as f64, 0.0, 0.0, 2.0);
    }
    let (_, o) = coarse_solve(&diag, &b, &diag.diagonal(), CoarseSolveMode::Adaptive).unwrap();
    assert_eq!(o.iterations, 1);
}

#[test]
fn vcycle_reduces_error_and_zeroes_dirichlet() {
    let state = block_state::<2>(6, 6, 1e6, 0.2, true);
    let h = hierarchy_for(&state, 3, KernelKind::Linear);
    let zero = vec![0.0; state.dofs()];
    let (u, _) = h.vcycle(&zero, CoarseSolveMode::Adaptive).unwrap();
    assert!(u.iter().all(|v| *v == 0.0));

    let mut b: Vec<f64> = (0..state.dofs()).map(|k| (k as f64 * 0.37).sin()).collect();
    state.zero_dirichlet(&mut b);
    let dense = h.fine_matrix().to_dense();
    let exact = dense
        .clone()
        .cholesky()
        .unwrap()
        .solve(&DVector::from_vec(b.clone()));
    let (u, stats) = h.vcycle(&b, CoarseSolveMode::Adaptive).unwrap();
    assert!(stats.work_units > 0.0);
    let err = DVector::from_vec(u.clone()) - &exact;
    let e_cycle = (err.transpose() * &dense * &err)[(0, 0)];
    let e_zero = (exact.transpose() * &dense * &exact)[(0, 0)];
    assert!(e_cycle < e_zero);
    for (i, &d) in state.dirichlet().iter().enumerate() {
        if d {
            assert_eq!(&u[i * 2..i * 2 + 2], &[0.0, 0.0]);
        }
    }
}

#[test]
fn pinned_vcycle_is_symmetric_positive_definite() {
    let state = block_state::<2>(3, 7, 1e6, 0.3, true);
    assert!(state.dofs() <= 300);
    let h = hierarchy_for(&state, 3, KernelKind::Linear);
    let n = state.dofs();
    let free: Vec<usize> = (0..n).filter(|k| !state.dirichlet()[k / 2]).collect();
    let mut v = DMatrix::zeros(free.len(), free.len());
    for (col, &k) in free.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let (u, _) = h.vcycle(&e, CoarseSolveMode::Pinned).unwrap();
        for (row, &r) in free.iter().enumerate() {
            v[(row, col)] = u[r];
        }
    }
    let asym = (&v - v.transpose()).norm() / v.norm();
    assert!(asym < 1e-8, "asymmetry {asym}");
    let sym = (&v + v.transpose()) * 0.5;
    assert!(sym.symmetric_eigenvalues().min() > 0.0);
}
