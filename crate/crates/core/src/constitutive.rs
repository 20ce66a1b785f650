//! Fixed-corotated elasticity, its first and second derivatives, the
//! eigenvalue-clamping SPD fix, plasticity return maps and the per-particle
//! stiffness scale used by the characteristic norm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cofactor, cofactor_differential, determinant, Matrix, SignedSvd, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("deformation gradient has non-finite entries")]
    NonFinite,
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("stress derivative is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("return map requires det(F) > 0, got {0:e}")]
    Inverted(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Plasticity {
    #[default]
    None,
    /// Yield limit on the deviatoric principal Kirchhoff stress of a Hencky
    /// model sharing the elastic shear modulus.
    VonMises { yield_stress: f64 },
    /// Singular values of `F` clamped into `[lo, hi]`.
    SnowClamp { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub density: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mu: f64,
    pub lambda: f64,
    pub plasticity: Plasticity,
}

impl Material {
    pub fn new(
        density: f64,
        youngs_modulus: f64,
        poisson_ratio: f64,
        plasticity: Plasticity,
    ) -> Result<Self, ConstitutiveError> {
        let bad = |m: &str| Err(ConstitutiveError::InvalidMaterial(m.to_string()));
        if !(density.is_finite() && density > 0.0) {
            return bad("density must be positive");
        }
        if !(youngs_modulus.is_finite() && youngs_modulus > 0.0) {
            return bad("Young's modulus must be positive");
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return bad("Poisson ratio must lie in [0, 0.5)");
        }
        match plasticity {
            Plasticity::None => {}
            Plasticity::VonMises { yield_stress } => {
                if !(yield_stress.is_finite() && yield_stress > 0.0) {
                    return bad("yield stress must be positive");
                }
            }
            Plasticity::SnowClamp { lo, hi } => {
                if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
                    return bad("snow clamp bounds must satisfy 0 < lo <= 1 <= hi");
                }
            }
        }
        let (mu, lambda) = lame_parameters(youngs_modulus, poisson_ratio);
        Ok(Self {
            density,
            youngs_modulus,
            poisson_ratio,
            mu,
            lambda,
            plasticity,
        })
    }

    pub fn elastic(
        density: f64,
        youngs_modulus: f64,
        poisson_ratio: f64,
    ) -> Result<Self, ConstitutiveError> {
        Self::new(density, youngs_modulus, poisson_ratio, Plasticity::None)
    }

    /// Material with explicit Lamé parameters; used by tests that need
    /// `lambda = 0`.
    pub fn from_lame(density: f64, mu: f64, lambda: f64) -> Self {
        Self {
            density,
            youngs_modulus: mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu),
            poisson_ratio: lambda / (2.0 * (lambda + mu)),
            mu,
            lambda,
            plasticity: Plasticity::None,
        }
    }
}

pub fn lame_parameters(youngs_modulus: f64, poisson_ratio: f64) -> (f64, f64) {
    let e = youngs_modulus;
    let nu = poisson_ratio;
    (
        e / (2.0 * (1.0 + nu)),
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
    )
}

fn check_finite<const D: usize>(f: &Matrix<D>) -> Result<(), ConstitutiveError> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ConstitutiveError::NonFinite)
    }
}

/// `mu * sum (sigma_k - 1)^2 + lambda/2 * (J - 1)^2`
pub fn fcr_energy_density<const D: usize>(
    f: &Matrix<D>,
    material: &Material,
) -> Result<f64, ConstitutiveError> {
    check_finite(f)?;
    Ok(fcr_energy_lame(f, material.mu, material.lambda))
}

pub(crate) fn fcr_energy_lame<const D: usize>(f: &Matrix<D>, mu: f64, lambda: f64) -> f64 {
    let svd = SignedSvd::new(f);
    let j = determinant(f);
    let shear: f64 = svd.sigma.iter().map(|s| (s - 1.0) * (s - 1.0)).sum();
    mu * shear + 0.5 * lambda * (j - 1.0) * (j - 1.0)
}

/// First Piola-Kirchhoff stress `2 mu (F - R) + lambda (J - 1) J F^{-T}`.
pub fn fcr_stress<const D: usize>(
    f: &Matrix<D>,
    material: &Material,
) -> Result<Matrix<D>, ConstitutiveError> {
    check_finite(f)?;
    Ok(fcr_stress_lame(f, material.mu, material.lambda))
}

pub(crate) fn fcr_stress_lame<const D: usize>(f: &Matrix<D>, mu: f64, lambda: f64) -> Matrix<D> {
    let r = SignedSvd::new(f).rotation();
    let j = determinant(f);
    (f - r) * (2.0 * mu) + cofactor(f) * (lambda * (j - 1.0))
}

/// `dP/dF` as a `D^2 x D^2` matrix. Rows and columns index the entries of
/// `P` and `F` flattened row-major, `(i, j) -> i * D + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct StressDerivative<const D: usize> {
    matrix: DMatrix<f64>,
}

impl<const D: usize> StressDerivative<D> {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), D * D);
        assert_eq!(matrix.ncols(), D * D);
        Self { matrix }
    }

    pub fn from_fn(f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_matrix(DMatrix::from_fn(D * D, D * D, f))
    }

    pub fn identity() -> Self {
        Self::from_matrix(DMatrix::identity(D * D, D * D))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Row-major flat storage.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = D * D;
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                out.push(self.matrix[(r, c)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// `dP = A : dF`
    pub fn contract(&self, df: &Matrix<D>) -> Matrix<D> {
        let mut dp = Matrix::<D>::zeros();
        for i in 0..D {
            for j in 0..D {
                let row = i * D + j;
                let mut acc = 0.0;
                for k in 0..D {
                    for l in 0..D {
                        acc += self.matrix[(row, k * D + l)] * df[(k, l)];
                    }
                }
                dp[(i, j)] = acc;
            }
        }
        dp
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = D * D;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                worst = worst.max((self.matrix[(r, c)] - self.matrix[(c, r)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigenvalues().min()
    }
}

fn clamp_away_from_zero(x: f64) -> f64 {
    const FLOOR: f64 = 1e-12;
    if x.abs() >= FLOOR {
        x
    } else if x < 0.0 {
        -FLOOR
    } else {
        FLOOR
    }
}

fn skew<const D: usize>(w: &[f64]) -> Matrix<D> {
    let mut m = Matrix::<D>::zeros();
    match D {
        2 => {
            m[(0, 1)] = -w[0];
            m[(1, 0)] = w[0];
        }
        3 => {
            m[(0, 1)] = -w[2];
            m[(0, 2)] = w[1];
            m[(1, 0)] = w[2];
            m[(1, 2)] = -w[0];
            m[(2, 0)] = -w[1];
            m[(2, 1)] = w[0];
        }
        _ => unreachable!(),
    }
    m
}

/// Exact (unprojected) `dP/dF` of the fixed-corotated model.
pub fn fcr_stress_derivative<const D: usize>(
    f: &Matrix<D>,
    material: &Material,
) -> Result<StressDerivative<D>, ConstitutiveError> {
    check_finite(f)?;
    Ok(fcr_stress_derivative_lame(f, material.mu, material.lambda))
}

pub(crate) fn fcr_stress_derivative_lame<const D: usize>(
    f: &Matrix<D>,
    mu: f64,
    lambda: f64,
) -> StressDerivative<D> {
    let svd = SignedSvd::new(f);
    let r = svd.rotation();
    let j = determinant(f);
    let cof = cofactor(f);
    let n = D * D;
    let mut a = DMatrix::<f64>::zeros(n, n);

    // R^T dR = W with axial(W S + S W) = (tr S - S) w; solved in the
    // eigenbasis of S = V diag(sigma) V^T.
    let sigma = svd.sigma;
    let v = svd.v;
    let mut inv_pair = Vector::<D>::zeros();
    if D == 3 {
        for k in 0..3 {
            inv_pair[k] = 1.0 / clamp_away_from_zero(sigma[(k + 1) % 3] + sigma[(k + 2) % 3]);
        }
    }
    let trace_inv = 1.0 / clamp_away_from_zero(sigma.sum());

    for k in 0..D {
        for l in 0..D {
            let mut df = Matrix::<D>::zeros();
            df[(k, l)] = 1.0;
            let m = r.transpose() * df;
            let w = match D {
                2 => skew::<D>(&[(m[(1, 0)] - m[(0, 1)]) * trace_inv]),
                3 => {
                    let kk = m - m.transpose();
                    let axial = Vector::<D>::from_fn(|i, _| match i {
                        0 => kk[(2, 1)],
                        1 => kk[(0, 2)],
                        _ => kk[(1, 0)],
                    });
                    let local = v.transpose() * axial;
                    let scaled = Vector::<D>::from_fn(|i, _| local[i] * inv_pair[i]);
                    let omega = v * scaled;
                    skew::<D>(omega.as_slice())
                }
                _ => unreachable!(),
            };
            let dr = r * w;
            let cof_dot = cof.component_mul(&df).sum();
            let dp = (df - dr) * (2.0 * mu)
                + cof * (lambda * cof_dot)
                + cofactor_differential(f, &df) * (lambda * (j - 1.0));
            let col = k * D + l;
            for p in 0..D {
                for q in 0..D {
                    a[(p * D + q, col)] = dp[(p, q)];
                }
            }
        }
    }
    let sym = (&a + a.transpose()) * 0.5;
    StressDerivative::from_matrix(sym)
}

/// Clamp negative eigenvalues to zero. Inputs that are already positive
/// semi-definite are returned unchanged.
pub fn project_spd<const D: usize>(
    a: &StressDerivative<D>,
) -> Result<StressDerivative<D>, ConstitutiveError> {
    let scale = a.matrix.amax().max(f64::MIN_POSITIVE);
    let asym = a.max_asymmetry();
    if asym > 1e-10 * scale {
        return Err(ConstitutiveError::Asymmetric(asym));
    }
    Ok(project_spd_unchecked(a))
}

pub(crate) fn project_spd_unchecked<const D: usize>(
    a: &StressDerivative<D>,
) -> StressDerivative<D> {
    let eig = a.matrix.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|l| *l >= 0.0) {
        return a.clone();
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    let sym = (&rebuilt + rebuilt.transpose()) * 0.5;
    StressDerivative::from_matrix(sym)
}

/// Plastic projection of a trial deformation gradient.
pub fn return_map<const D: usize>(
    f_trial: &Matrix<D>,
    material: &Material,
) -> Result<Matrix<D>, ConstitutiveError> {
    check_finite(f_trial)?;
    match material.plasticity {
        Plasticity::None => Ok(*f_trial),
        Plasticity::SnowClamp { lo, hi } => {
            let svd = SignedSvd::new(f_trial);
            let clamped = svd.sigma.map(|s| s.clamp(lo, hi));
            if clamped == svd.sigma {
                return Ok(*f_trial);
            }
            Ok(svd.recompose(&clamped))
        }
        Plasticity::VonMises { yield_stress } => {
            let svd = SignedSvd::new(f_trial);
            let j = determinant(f_trial);
            if j <= 0.0 || svd.sigma.iter().any(|s| *s <= 0.0) {
                return Err(ConstitutiveError::Inverted(j));
            }
            let eps = svd.sigma.map(f64::ln);
            let mean = eps.sum() / D as f64;
            let dev = eps.map(|e| e - mean);
            let dev_norm = dev.norm();
            let tau_dev = 2.0 * material.mu * dev_norm;
            if tau_dev <= yield_stress * (1.0 + 1e-12) {
                return Ok(*f_trial);
            }
            let delta_gamma = dev_norm - yield_stress / (2.0 * material.mu);
            let eps_new = eps - dev * (delta_gamma / dev_norm);
            Ok(svd.recompose(&eps_new.map(f64::exp)))
        }
    }
}

/// Magnitude of the deviatoric principal Kirchhoff stress of the Hencky
/// model used by the von Mises return map.
pub fn hencky_deviatoric_stress<const D: usize>(f: &Matrix<D>, mu: f64) -> f64 {
    let svd = SignedSvd::new(f);
    let eps = svd.sigma.map(|s| s.abs().ln());
    let mean = eps.sum() / D as f64;
    2.0 * mu * eps.map(|e| e - mean).norm()
}

/// Frobenius norm of `dP/dF` at the rest configuration, in Pa.
pub fn stiffness_scale<const D: usize>(material: &Material) -> f64 {
    fcr_stress_derivative_lame::<D>(&Matrix::<D>::identity(), material.mu, material.lambda)
        .frobenius_norm()
}
