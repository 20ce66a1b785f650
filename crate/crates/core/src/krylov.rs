//! Preconditioned conjugate gradients on flat vectors.

use thiserror::Error;

use crate::linalg::{axpy, dot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcgError {
    #[error("non-positive curvature {curvature:e} at CG iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("preconditioner is not positive (r^T z = {0:e})")]
    IndefinitePreconditioner(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// `sqrt(r^T z)` at exit.
    pub residual: f64,
    /// `sqrt(r0^T z0)`.
    pub initial_residual: f64,
}

/// Solve `A x = b` from `x = 0`, stopping once
/// `sqrt(r^T z) <= relative * sqrt(r0^T z0)` or after `max_iterations`.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precondition: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    relative: f64,
    max_iterations: usize,
) -> Result<PcgOutcome, PcgError> {
    let n = b.len();
    assert_eq!(x.len(), n);
    x.fill(0.0);
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut rz = dot(&r, &z);
    if rz < 0.0 {
        return Err(PcgError::IndefinitePreconditioner(rz));
    }
    let initial = rz.sqrt();
    let threshold = relative * initial;
    if initial == 0.0 {
        return Ok(PcgOutcome {
            iterations: 0,
            converged: true,
            residual: 0.0,
            initial_residual: 0.0,
        });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while iterations < max_iterations {
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(PcgError::Indefinite {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(PcgError::IndefinitePreconditioner(rz_new));
        }
        if rz_new.sqrt() <= threshold {
            return Ok(PcgOutcome {
                iterations,
                converged: true,
                residual: rz_new.sqrt(),
                initial_residual: initial,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(PcgOutcome {
        iterations,
        converged: false,
        residual: rz.sqrt(),
        initial_residual: initial,
    })
}

/// Jacobi preconditioner from a scalar diagonal.
pub fn jacobi(diagonal: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(diagonal) {
            *zi = ri / di;
        }
    }
}
