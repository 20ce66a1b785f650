use std::sync::Arc;

use super::{
    lbfgs_direction, line_search, LbfgsHistory, Progress, SolveFailure, SolveReport, SolverConfig,
    SolverError,
};
use crate::linalg::dot;
use crate::multigrid::{CoarseSolveMode, MultigridHierarchy};
use crate::objective::{HessianProjection, ObjectiveState};

pub(super) fn solve<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
    levels: usize,
) -> Result<SolveReport, SolveFailure> {
    let mut progress = Progress::new(state, config);
    let mut dv = state.initial_increment();
    match run(state, config, levels, &mut progress, &mut dv) {
        Ok(residual) => Ok(progress.finish(dv, residual)),
        Err(e) => Err(progress.fail(e, dv)),
    }
}

fn run<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
    levels: usize,
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

    // lagged model: Hessian and hierarchy are fixed for the whole step
    let hessian = Arc::new(state.assemble_hessian(dv, HessianProjection::Spd)?);
    let diagonal = hessian.diagonal();
    let hierarchy = MultigridHierarchy::build(
        hessian,
        state.layout().clone(),
        state.dirichlet(),
        levels,
        config.embedding,
    )?;
    progress.hierarchy_builds += 1;
    let mut history = LbfgsHistory::new(config.window);

    loop {
        progress.check_budget(residual)?;
        let mut cycles = 0usize;
        let mut cycle_work = 0.0;
        let mut precondition = |q: &[f64]| -> Result<Vec<f64>, SolverError> {
            let (u, stats) = hierarchy.vcycle(q, CoarseSolveMode::Adaptive)?;
            cycles += 1;
            cycle_work += stats.work_units;
            Ok(u)
        };
        let mut p = lbfgs_direction(&g, &history, &mut precondition)?;
        if !(dot(&g, &p) < 0.0) {
            progress.fallbacks += 1;
            log::warn!("L-BFGS direction failed the descent test; restarting history");
            history.clear();
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            p = precondition(&neg)?;
            if !(dot(&g, &p) < 0.0) {
                p = g.iter().zip(&diagonal).map(|(gi, d)| -gi / d).collect();
            }
        }
        progress.work += cycle_work;

        let search = line_search(
            |x| progress.energy(x),
            dv,
            &p,
            energy,
            &g,
            &config.line_search,
        )?;
        let g_new = progress.gradient(&search.point)?;
        let s: Vec<f64> = search
            .point
            .iter()
            .zip(dv.iter())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        history.push(s, y);
        *dv = search.point;
        g = g_new;
        energy = search.energy;
        residual = progress.residual(&g)?;
        progress.record(residual, energy, search.step, cycles);
        if residual <= progress.tolerance {
            return Ok(residual);
        }
    }
}
