use std::sync::Arc;

use super::{line_search, Progress, SolveFailure, SolveReport, SolverConfig, SolverError};
use crate::krylov::pcg;
use crate::linalg::dot;
use crate::multigrid::{CoarseSolveMode, MultigridHierarchy};
use crate::objective::{HessianProjection, ObjectiveState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Operator {
    Assembled,
    MatrixFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Preconditioner {
    Jacobi,
    Multigrid,
}

/// Relative CG tolerance `min(0.5, sqrt(max(sqrt(g^T D^-1 g), tau)))`.
pub fn inexactness(gradient: &[f64], diagonal: &[f64], tau: f64) -> f64 {
    let measure: f64 = gradient
        .iter()
        .zip(diagonal)
        .map(|(g, d)| g * g / d)
        .sum::<f64>()
        .sqrt();
    measure.max(tau).sqrt().min(0.5)
}

/// Default floor: the inexactness measure of a gradient whose scaled
/// components all sit at the outer tolerance.
fn auto_tau<const D: usize>(progress: &Progress<'_, D>, diagonal: &[f64]) -> f64 {
    let state = progress.state;
    let scale =
        progress.config.epsilon * progress.cn.length * progress.cn.max_stiffness() * state.dt();
    let inv: f64 = diagonal.iter().map(|d| 1.0 / d).sum();
    scale * inv.sqrt()
}

pub(super) fn solve<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
    operator: Operator,
    preconditioner: Preconditioner,
) -> Result<SolveReport, SolveFailure> {
    let mut progress = Progress::new(state, config);
    let mut dv = state.initial_increment();
    match run(
        state,
        config,
        operator,
        preconditioner,
        &mut progress,
        &mut dv,
    ) {
        Ok(residual) => Ok(progress.finish(dv, residual)),
        Err(e) => Err(progress.fail(e, dv)),
    }
}

fn run<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
    operator: Operator,
    preconditioner: Preconditioner,
    progress: &mut Progress<'_, D>,
    dv: &mut Vec<f64>,
) -> Result<f64, SolverError> {
    let mut g = progress.gradient(dv)?;
    let mut residual = progress.residual(&g)?;
    progress.initial_residual = residual;
    if residual <= progress.tolerance {
        return Ok(residual);
    }
    let mut energy = progress.energy(dv)?;

    loop {
        progress.check_budget(residual)?;
        let b: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut p = vec![0.0; b.len()];
        let mut extra_work = 0.0;
        let (outcome, diagonal) = match operator {
            Operator::MatrixFree => {
                let op = state.matrix_free(dv, HessianProjection::Spd)?;
                let diagonal = op.diagonal();
                let tau = config.tau.unwrap_or_else(|| auto_tau(progress, &diagonal));
                let k = inexactness(&g, &diagonal, tau);
                let out = pcg(
                    |x, y| op.apply_into(x, y),
                    crate::krylov::jacobi(&diagonal),
                    &b,
                    &mut p,
                    k,
                    config.cg_cap,
                )?;
                (out, diagonal)
            }
            Operator::Assembled => {
                let h = Arc::new(state.assemble_hessian(dv, HessianProjection::Spd)?);
                let diagonal = h.diagonal();
                let tau = config.tau.unwrap_or_else(|| auto_tau(progress, &diagonal));
                let k = inexactness(&g, &diagonal, tau);
                let out = match preconditioner {
                    Preconditioner::Jacobi => pcg(
                        |x, y| h.multiply_into(x, y),
                        crate::krylov::jacobi(&diagonal),
                        &b,
                        &mut p,
                        k,
                        config.cg_cap,
                    )?,
                    Preconditioner::Multigrid => {
                        let hierarchy = MultigridHierarchy::build(
                            h.clone(),
                            state.layout().clone(),
                            state.dirichlet(),
                            config.levels,
                            config.embedding,
                        )?;
                        progress.hierarchy_builds += 1;
                        let mut failure = None;
                        let out = pcg(
                            |x, y| h.multiply_into(x, y),
                            |r, z| match hierarchy.vcycle(r, CoarseSolveMode::Pinned) {
                                Ok((u, stats)) => {
                                    extra_work += stats.work_units;
                                    z.copy_from_slice(&u);
                                }
                                Err(e) => {
                                    failure.get_or_insert(e);
                                    z.copy_from_slice(r);
                                }
                            },
                            &b,
                            &mut p,
                            k,
                            config.cg_cap,
                        )?;
                        if let Some(e) = failure {
                            return Err(e.into());
                        }
                        out
                    }
                };
                (out, diagonal)
            }
        };
        if !outcome.converged {
            log::warn!("CG reached its cap of {} iterations", config.cg_cap);
        }
        progress.work += outcome.iterations as f64 + extra_work;

        if !(dot(&g, &p) < 0.0) {
            progress.fallbacks += 1;
            log::warn!("Newton direction failed the descent test; using the Jacobi direction");
            p = g.iter().zip(&diagonal).map(|(gi, d)| -gi / d).collect();
        }

        let search = line_search(
            |x| progress.energy(x),
            dv,
            &p,
            energy,
            &g,
            &config.line_search,
        )?;
        *dv = search.point;
        energy = search.energy;
        g = progress.gradient(dv)?;
        residual = progress.residual(&g)?;
        progress.record(residual, energy, search.step, outcome.iterations);
        if residual <= progress.tolerance {
            return Ok(residual);
        }
    }
}
