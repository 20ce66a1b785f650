//! Implicit material point method time stepping with a multigrid-accelerated
//! quasi-Newton solver.

// `!(x > 0.0)` is used where NaN must take the failure branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constitutive;
pub mod grid;
pub mod harness;
pub mod krylov;
pub mod linalg;
pub mod multigrid;
pub mod objective;
pub mod solvers;
pub mod transfer;

#[cfg(test)]
pub(crate) mod testing;
