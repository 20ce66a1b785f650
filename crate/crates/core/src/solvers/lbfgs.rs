use std::collections::VecDeque;

use crate::linalg::{axpy, dot, norm};

/// Pairs whose curvature `y^T s` is below this fraction of `|y| |s|` are not
/// stored.
pub const CURVATURE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Ring buffer of the most recent secant pairs.
#[derive(Clone, Debug)]
pub struct LbfgsHistory {
    window: usize,
    pairs: VecDeque<Pair>,
    skipped: usize,
}

impl LbfgsHistory {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "L-BFGS window must be at least 1");
        Self {
            window,
            pairs: VecDeque::with_capacity(window),
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs rejected by the curvature test so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Store `(s, y)` unless its curvature is too small. Returns whether the
    /// pair was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        if !(ys > CURVATURE_FLOOR * norm(&y) * norm(&s)) {
            self.skipped += 1;
            return false;
        }
        if self.pairs.len() == self.window {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s,
            y,
            rho: 1.0 / ys,
        });
        true
    }
}

/// Two-loop recursion for `p = -H^{-1} g` with `initializer` standing in for
/// the initial inverse Hessian.
pub fn lbfgs_direction<E>(
    gradient: &[f64],
    history: &LbfgsHistory,
    mut initializer: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
) -> Result<Vec<f64>, E> {
    let mut q: Vec<f64> = gradient.iter().map(|g| -g).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.pairs.iter().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        axpy(-alpha, &pair.y, &mut q);
        alphas.push(alpha);
    }
    let mut r = initializer(&q)?;
    for (pair, alpha) in history.pairs.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &r);
        axpy(alpha - beta, &pair.s, &mut r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::convert::Infallible;

    fn identity(q: &[f64]) -> Result<Vec<f64>, Infallible> {
        Ok(q.to_vec())
    }

    #[test]
    fn empty_history_uses_initializer() {
        let h = LbfgsHistory::new(8);
        let g = vec![1.0, -2.0, 3.0];
        assert_eq!(
            lbfgs_direction(&g, &h, identity).unwrap(),
            vec![-1.0, 2.0, -3.0]
        );
    }

    #[test]
    fn exact_initializer_gives_newton_step() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let inv = a.clone().try_inverse().unwrap();
        let mut h = LbfgsHistory::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = (&a * DVector::from_vec(s.clone())).as_slice().to_vec();
            assert!(h.push(s, y));
        }
        let g = vec![0.3, -1.0, 2.0];
        let p = lbfgs_direction(&g, &h, |q| {
            Ok::<_, Infallible>((&inv * DVector::from_column_slice(q)).as_slice().to_vec())
        })
        .unwrap();
        let newton = -(&inv * DVector::from_vec(g));
        for k in 0..3 {
            assert!((p[k] - newton[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_quadratic_directions_descend() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        for _ in 0..100 {
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
            let mut h = LbfgsHistory::new(8);
            for _ in 0..10 {
                let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = (&a * DVector::from_vec(s.clone())).as_slice().to_vec();
                h.push(s, y);
            }
            assert_eq!(h.len(), 8);
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = lbfgs_direction(&g, &h, identity).unwrap();
            assert!(dot(&g, &p) < 0.0);
        }
    }

    #[test]
    fn low_curvature_pairs_are_skipped() {
        let mut h = LbfgsHistory::new(2);
        assert!(!h.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(!h.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(h.push(vec![1.0, 0.0], vec![1.0, 0.0]));
        assert_eq!(h.len(), 1);
        assert_eq!(h.skipped(), 2);
    }
}
