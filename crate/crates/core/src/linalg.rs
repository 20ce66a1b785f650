//! Small fixed-size dense helpers shared by the kernels and the constitutive
//! models. Everything is generic over the spatial dimension `D`, which must be
//! 2 or 3.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector};

pub type Vector<const D: usize> = SVector<f64, D>;
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

#[inline]
pub(crate) fn assert_dim<const D: usize>() {
    assert!(
        D == 2 || D == 3,
        "only 2D and 3D are supported, got D = {D}"
    );
}

pub fn determinant<const D: usize>(m: &Matrix<D>) -> f64 {
    match D {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unreachable!(),
    }
}

fn column3<const D: usize>(m: &Matrix<D>, c: usize) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(m[(0, c)], m[(1, c)], m[(2, c)])
}

/// Cofactor matrix `det(F) F^{-T}`, well defined for singular `F`.
pub fn cofactor<const D: usize>(m: &Matrix<D>) -> Matrix<D> {
    match D {
        2 => {
            let mut c = Matrix::<D>::zeros();
            c[(0, 0)] = m[(1, 1)];
            c[(0, 1)] = -m[(1, 0)];
            c[(1, 0)] = -m[(0, 1)];
            c[(1, 1)] = m[(0, 0)];
            c
        }
        3 => {
            let f0 = column3(m, 0);
            let f1 = column3(m, 1);
            let f2 = column3(m, 2);
            let cols = [f1.cross(&f2), f2.cross(&f0), f0.cross(&f1)];
            Matrix::<D>::from_fn(|i, j| cols[j][i])
        }
        _ => unreachable!(),
    }
}

/// Directional derivative of [`cofactor`] at `m` along `dm`.
pub fn cofactor_differential<const D: usize>(m: &Matrix<D>, dm: &Matrix<D>) -> Matrix<D> {
    match D {
        // linear in m
        2 => cofactor(dm),
        3 => {
            let f = [column3(m, 0), column3(m, 1), column3(m, 2)];
            let d = [column3(dm, 0), column3(dm, 1), column3(dm, 2)];
            let cols = [
                d[1].cross(&f[2]) + f[1].cross(&d[2]),
                d[2].cross(&f[0]) + f[2].cross(&d[0]),
                d[0].cross(&f[1]) + f[0].cross(&d[1]),
            ];
            Matrix::<D>::from_fn(|i, j| cols[j][i])
        }
        _ => unreachable!(),
    }
}

/// Singular value decomposition `m = U diag(sigma) V^T` with `U` and `V`
/// proper rotations. When `det(m) < 0` the smallest singular value carries
/// the sign, so inverted states keep a consistent rotation.
#[derive(Clone, Debug)]
pub struct SignedSvd<const D: usize> {
    pub u: Matrix<D>,
    pub sigma: Vector<D>,
    pub v: Matrix<D>,
}

impl<const D: usize> SignedSvd<D> {
    pub fn new(m: &Matrix<D>) -> Self {
        let (mut u, mut sigma, mut v) = match D {
            2 => {
                let m2 = Matrix2::from_fn(|i, j| m[(i, j)]);
                let svd = m2.svd(true, true);
                let u = svd.u.expect("requested U");
                let vt = svd.v_t.expect("requested V^T");
                (
                    Matrix::<D>::from_fn(|i, j| u[(i, j)]),
                    Vector::<D>::from_fn(|i, _| svd.singular_values[i]),
                    Matrix::<D>::from_fn(|i, j| vt[(j, i)]),
                )
            }
            3 => {
                let m3 = Matrix3::from_fn(|i, j| m[(i, j)]);
                let svd = m3.svd(true, true);
                let u = svd.u.expect("requested U");
                let vt = svd.v_t.expect("requested V^T");
                (
                    Matrix::<D>::from_fn(|i, j| u[(i, j)]),
                    Vector::<D>::from_fn(|i, _| svd.singular_values[i]),
                    Matrix::<D>::from_fn(|i, j| vt[(j, i)]),
                )
            }
            _ => unreachable!(),
        };
        let k = sigma.imin();
        if determinant(&u) < 0.0 {
            for r in 0..D {
                u[(r, k)] = -u[(r, k)];
            }
            sigma[k] = -sigma[k];
        }
        if determinant(&v) < 0.0 {
            for r in 0..D {
                v[(r, k)] = -v[(r, k)];
            }
            sigma[k] = -sigma[k];
        }
        Self { u, sigma, v }
    }

    /// Rotation factor of the polar decomposition `m = R S`.
    pub fn rotation(&self) -> Matrix<D> {
        self.u * self.v.transpose()
    }

    /// Symmetric factor of the polar decomposition `m = R S`.
    pub fn stretch(&self) -> Matrix<D> {
        self.v * Matrix::<D>::from_diagonal(&self.sigma) * self.v.transpose()
    }

    pub fn recompose(&self, sigma: &Vector<D>) -> Matrix<D> {
        self.u * Matrix::<D>::from_diagonal(sigma) * self.v.transpose()
    }
}

/// Rotation matrix for an angular displacement. In 2D `angle` holds a single
/// component (counter-clockwise radians); in 3D it is a scaled axis.
pub fn rotation_matrix<const D: usize>(angle: &[f64]) -> Matrix<D> {
    match D {
        2 => {
            let (s, c) = angle[0].sin_cos();
            let mut r = Matrix::<D>::identity();
            r[(0, 0)] = c;
            r[(0, 1)] = -s;
            r[(1, 0)] = s;
            r[(1, 1)] = c;
            r
        }
        3 => {
            let axis = nalgebra::Vector3::new(angle[0], angle[1], angle[2]);
            let rot = nalgebra::Rotation3::from_scaled_axis(axis);
            Matrix::<D>::from_fn(|i, j| rot[(i, j)])
        }
        _ => unreachable!(),
    }
}

/// Velocity of a rigid rotation `omega x r`; 2D uses the scalar rate.
pub fn angular_velocity_cross<const D: usize>(omega: &[f64], r: &Vector<D>) -> Vector<D> {
    match D {
        2 => {
            let mut v = Vector::<D>::zeros();
            v[0] = -omega[0] * r[1];
            v[1] = omega[0] * r[0];
            v
        }
        3 => {
            let w = nalgebra::Vector3::new(omega[0], omega[1], omega[2]);
            let rr = nalgebra::Vector3::new(r[0], r[1], r[2]);
            let c = w.cross(&rr);
            Vector::<D>::from_fn(|i, _| c[i])
        }
        _ => unreachable!(),
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample3() -> Matrix<3> {
        Matrix::<3>::new(1.2, 0.1, -0.3, 0.05, 0.9, 0.2, 0.4, -0.1, 1.1)
    }

    #[test]
    fn cofactor_is_det_times_inverse_transpose() {
        let m = sample3();
        let c = cofactor(&m);
        let expected = m.try_inverse().unwrap().transpose() * determinant(&m);
        assert!((c - expected).norm() < 1e-12);

        let m2 = Matrix::<2>::new(1.3, 0.2, -0.4, 0.8);
        let c2 = cofactor(&m2);
        let e2 = m2.try_inverse().unwrap().transpose() * determinant(&m2);
        assert!((c2 - e2).norm() < 1e-12);
    }

    #[test]
    fn cofactor_differential_matches_finite_difference() {
        let m = sample3();
        let dm = Matrix::<3>::new(0.3, -0.2, 0.1, 0.7, 0.05, -0.4, 0.2, 0.1, 0.6);
        let h = 1e-6;
        let fd = (cofactor(&(m + dm * h)) - cofactor(&(m - dm * h))) / (2.0 * h);
        assert!((fd - cofactor_differential(&m, &dm)).norm() < 1e-8);
    }

    #[test]
    fn signed_svd_handles_inversion() {
        let mut m = sample3();
        m.set_column(0, &(-m.column(0)));
        assert!(determinant(&m) < 0.0);
        let svd = SignedSvd::new(&m);
        assert!((determinant(&svd.u) - 1.0).abs() < 1e-12);
        assert!((determinant(&svd.v) - 1.0).abs() < 1e-12);
        assert!(svd.sigma.iter().filter(|s| **s < 0.0).count() == 1);
        assert!((svd.recompose(&svd.sigma) - m).norm() < 1e-12);
        let r = svd.rotation();
        assert!((r * svd.stretch() - m).norm() < 1e-12);
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let r2 = rotation_matrix::<2>(&[0.7]);
        assert!((r2.transpose() * r2 - Matrix::<2>::identity()).norm() < 1e-14);
        let r3 = rotation_matrix::<3>(&[0.1, -0.5, 0.3]);
        assert!((r3.transpose() * r3 - Matrix::<3>::identity()).norm() < 1e-14);
        assert!((determinant(&r3) - 1.0).abs() < 1e-14);
    }
}
