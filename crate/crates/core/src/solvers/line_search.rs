use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    pub shrink: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            armijo: 1e-4,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearchResult {
    pub step: f64,
    pub energy: f64,
    pub point: Vec<f64>,
    pub evaluations: usize,
}

/// Backtracking search from `alpha = 1` for the Armijo condition
/// `E(x + alpha p) <= E(x) + c alpha g^T p`. Points where the energy cannot
/// be evaluated count as rejected.
pub fn line_search<E>(
    mut energy: impl FnMut(&[f64]) -> Result<f64, E>,
    x: &[f64],
    direction: &[f64],
    energy0: f64,
    gradient: &[f64],
    config: &LineSearchConfig,
) -> Result<LineSearchResult, SolverError> {
    let slope = dot(gradient, direction);
    if !(slope < 0.0) {
        return Err(SolverError::NotDescent(slope));
    }
    let mut step = 1.0;
    let mut trial = vec![0.0; x.len()];
    for evaluations in 1..=config.max_halvings + 1 {
        for ((t, xi), pi) in trial.iter_mut().zip(x).zip(direction) {
            *t = xi + step * pi;
        }
        if let Ok(e) = energy(&trial) {
            if e <= energy0 + config.armijo * step * slope {
                return Ok(LineSearchResult {
                    step,
                    energy: e,
                    point: trial,
                    evaluations,
                });
            }
        }
        step *= config.shrink;
    }
    Err(SolverError::LineSearch {
        halvings: config.max_halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic(x: &[f64]) -> Result<f64, ()> {
        Ok(x.iter()
            .enumerate()
            .map(|(k, v)| 0.5 * (k as f64 + 1.0) * v * v)
            .sum())
    }

    #[test]
    fn newton_step_on_quadratic_is_accepted() {
        let x = vec![1.0, -2.0, 0.5];
        let g: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 + 1.0) * v)
            .collect();
        let p: Vec<f64> = x.iter().map(|v| -v).collect();
        let e0 = quadratic(&x).unwrap();
        let r = line_search(quadratic, &x, &p, e0, &g, &LineSearchConfig::default()).unwrap();
        assert_eq!(r.step, 1.0);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        let x = vec![1.0];
        let g = vec![1.0];
        let e0 = quadratic(&x).unwrap();
        let err =
            line_search(quadratic, &x, &[1.0], e0, &g, &LineSearchConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::NotDescent(_)));
        let err =
            line_search(quadratic, &x, &[0.0], e0, &g, &LineSearchConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::NotDescent(_)));
    }

    #[test]
    fn accepted_steps_satisfy_armijo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = |x: &[f64]| -> Result<f64, ()> {
            Ok(x.iter().map(|v| v.powi(4) + (3.0 * v).cos()).sum())
        };
        let cfg = LineSearchConfig::default();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g: Vec<f64> = x
                .iter()
                .map(|v| 4.0 * v.powi(3) - 3.0 * (3.0 * v).sin())
                .collect();
            let p: Vec<f64> = g.iter().map(|v| -v * rng.random_range(0.1..5.0)).collect();
            let e0 = f(&x).unwrap();
            let r = line_search(f, &x, &p, e0, &g, &cfg).unwrap();
            let slope = dot(&g, &p);
            assert!(r.step > 0.0 && r.step <= 1.0);
            assert!(f(&r.point).unwrap() <= e0 + cfg.armijo * r.step * slope);
            assert!(r.energy < e0);
        }
    }

    #[test]
    fn unevaluable_energies_are_backtracked() {
        let f = |x: &[f64]| -> Result<f64, ()> {
            if x[0] < -0.5 {
                Err(())
            } else {
                Ok(x[0] * x[0])
            }
        };
        let r = line_search(
            f,
            &[1.0],
            &[-4.0],
            1.0,
            &[2.0],
            &LineSearchConfig::default(),
        )
        .unwrap();
        assert!(r.step <= 0.25);
    }
}
