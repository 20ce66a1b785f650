//! Nonlinear solvers for one implicit step: the multigrid-initialized
//! L-BFGS solver, its single-level variant, and projected Newton with
//! Jacobi or multigrid preconditioned CG. All share the characteristic-norm
//! stopping test `|g|_cn <= eps sqrt(n)`.

mod lbfgs;
mod line_search;
mod newton;
mod quasi_newton;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::krylov::{jacobi, pcg, PcgError, PcgOutcome};
pub use lbfgs::{lbfgs_direction, LbfgsHistory, CURVATURE_FLOOR};
pub use line_search::{line_search, LineSearchConfig, LineSearchResult};
pub use newton::inexactness;

use crate::grid::KernelKind;
use crate::linalg::Vector;
use crate::multigrid::MultigridError;
use crate::objective::{compute_node_cn, scaled_norm, NodeCn, ObjectiveError, ObjectiveState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Hot,
    PnPcg,
    PnPcgMf,
    PnMgpcg,
    LbfgsH,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Hot,
        SolverKind::PnPcg,
        SolverKind::PnPcgMf,
        SolverKind::PnMgpcg,
        SolverKind::LbfgsH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Hot => "hot",
            SolverKind::PnPcg => "pn-pcg",
            SolverKind::PnPcgMf => "pn-pcg-mf",
            SolverKind::PnMgpcg => "pn-mgpcg",
            SolverKind::LbfgsH => "lbfgs-h",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown solver `{s}`; expected one of hot, pn-pcg, pn-pcg-mf, pn-mgpcg, lbfgs-h"))
    }
}

fn default_embedding() -> KernelKind {
    KernelKind::Linear
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Outer tolerance on the characteristic norm of the gradient.
    pub epsilon: f64,
    /// Floor of the CG inexactness measure. `None` picks the value the
    /// measure takes at the outer tolerance.
    pub tau: Option<f64>,
    pub levels: usize,
    pub window: usize,
    #[serde(default = "default_embedding")]
    pub embedding: KernelKind,
    pub max_outer: usize,
    pub cg_cap: usize,
    pub line_search: LineSearchConfig,
    /// Record elapsed wall time in diagnostics; off for reproducible output.
    #[serde(skip)]
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Hot,
            epsilon: 1e-7,
            tau: None,
            levels: 3,
            window: 8,
            embedding: KernelKind::Linear,
            max_outer: 1000,
            cg_cap: 10_000,
            line_search: LineSearchConfig::default(),
            record_wall_time: true,
        }
    }
}

impl SolverConfig {
    pub fn with_kind(kind: SolverKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if let Some(t) = self.tau {
            if !(t.is_finite() && t >= 0.0) {
                return bad("tau must be non-negative");
            }
        }
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.max_outer == 0 || self.cg_cap == 0 {
            return bad("iteration caps must be positive");
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0 && ls.armijo > 0.0 && ls.armijo < 1.0) {
            return bad("line search needs 0 < shrink < 1 and 0 < armijo < 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Multigrid(#[from] MultigridError),
    #[error(transparent)]
    Pcg(#[from] PcgError),
    #[error("search direction is not a descent direction (g^T p = {0:e})")]
    NotDescent(f64),
    #[error("line search found no sufficient decrease after {halvings} halvings")]
    LineSearch { halvings: usize },
    #[error("no convergence after {iterations} outer iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// One row per accepted outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub frame: usize,
    pub step: usize,
    pub outer_iteration: usize,
    pub scaled_residual: f64,
    pub energy: f64,
    pub step_length: f64,
    /// CG iterations or V-cycles spent on this outer iteration.
    pub inner_iterations: usize,
    /// Cumulative cost in fine-level matrix-vector products.
    pub work_units: f64,
    /// Seconds since the start of the solve.
    pub wall_time: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "frame,step,outer_iteration,scaled_residual,energy,step_length,inner_iterations,work_units,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{},{:e},{:e}",
            self.frame,
            self.step,
            self.outer_iteration,
            self.scaled_residual,
            self.energy,
            self.step_length,
            self.inner_iterations,
            self.work_units,
            self.wall_time
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub increment: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// `eps * sqrt(n)`
    pub tolerance: f64,
    pub hierarchy_builds: usize,
    /// Directions replaced because they failed the descent test.
    pub fallbacks: usize,
}

impl SolveReport {
    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }

    pub fn inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn work_units(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.work_units)
    }
}

/// A failed solve with the state it reached.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveFailure {
    pub error: SolverError,
    pub last_iterate: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} outer iterations",
            self.error,
            self.records.len()
        )
    }
}

impl std::error::Error for SolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Bookkeeping shared by all solvers.
struct Progress<'a, const D: usize> {
    state: &'a ObjectiveState<D>,
    config: &'a SolverConfig,
    cn: NodeCn,
    tolerance: f64,
    records: Vec<DiagnosticsRecord>,
    work: f64,
    started: Instant,
    initial_residual: f64,
    hierarchy_builds: usize,
    fallbacks: usize,
}

impl<'a, const D: usize> Progress<'a, D> {
    fn new(state: &'a ObjectiveState<D>, config: &'a SolverConfig) -> Self {
        let cn = compute_node_cn(state);
        let tolerance = config.epsilon * (state.node_count() as f64).sqrt();
        Self {
            state,
            config,
            cn,
            tolerance,
            records: Vec::new(),
            work: 0.0,
            started: Instant::now(),
            initial_residual: f64::NAN,
            hierarchy_builds: 0,
            fallbacks: 0,
        }
    }

    fn residual(&self, g: &[f64]) -> Result<f64, SolverError> {
        Ok(scaled_norm::<D>(g, &self.cn)?)
    }

    fn energy(&mut self, dv: &[f64]) -> Result<f64, ObjectiveError> {
        self.work += 1.0;
        self.state.energy(dv)
    }

    fn gradient(&mut self, dv: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.work += 1.0;
        self.state.gradient(dv)
    }

    fn check_budget(&self, residual: f64) -> Result<(), SolverError> {
        if self.records.len() >= self.config.max_outer {
            return Err(SolverError::NotConverged {
                iterations: self.records.len(),
                residual,
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }

    fn record(&mut self, residual: f64, energy: f64, step_length: f64, inner_iterations: usize) {
        let wall_time = if self.config.record_wall_time {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        self.records.push(DiagnosticsRecord {
            frame: 0,
            step: 0,
            outer_iteration: self.records.len() + 1,
            scaled_residual: residual,
            energy,
            step_length,
            inner_iterations,
            work_units: self.work,
            wall_time,
        });
    }

    fn finish(self, increment: Vec<f64>, final_residual: f64) -> SolveReport {
        SolveReport {
            increment,
            records: self.records,
            initial_residual: self.initial_residual,
            final_residual,
            tolerance: self.tolerance,
            hierarchy_builds: self.hierarchy_builds,
            fallbacks: self.fallbacks,
        }
    }

    fn fail(self, error: SolverError, last_iterate: Vec<f64>) -> SolveFailure {
        SolveFailure {
            error,
            last_iterate,
            records: self.records,
        }
    }
}

/// Minimize the incremental potential with the configured solver.
pub fn solve<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
) -> Result<SolveReport, SolveFailure> {
    if let Err(error) = config.validate() {
        return Err(SolveFailure {
            error,
            last_iterate: state.initial_increment(),
            records: Vec::new(),
        });
    }
    match config.kind {
        SolverKind::Hot => solve_hot(state, config),
        SolverKind::LbfgsH => solve_lbfgs_h(state, config),
        SolverKind::PnPcg => solve_pn_pcg(state, config, false),
        SolverKind::PnPcgMf => solve_pn_pcg(state, config, true),
        SolverKind::PnMgpcg => solve_pn_mgpcg(state, config),
    }
}

/// L-BFGS with a multigrid V-cycle as initial inverse Hessian, both built
/// once from the projected Hessian at the start of the step.
pub fn solve_hot<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
) -> Result<SolveReport, SolveFailure> {
    quasi_newton::solve(state, config, config.levels)
}

/// [`solve_hot`] with a single level: the initializer is an adaptive
/// Jacobi-PCG solve with the lagged Hessian.
pub fn solve_lbfgs_h<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
) -> Result<SolveReport, SolveFailure> {
    quasi_newton::solve(state, config, 1)
}

/// Inexact projected Newton with Jacobi-preconditioned CG.
pub fn solve_pn_pcg<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
    matrix_free: bool,
) -> Result<SolveReport, SolveFailure> {
    let operator = if matrix_free {
        newton::Operator::MatrixFree
    } else {
        newton::Operator::Assembled
    };
    newton::solve(state, config, operator, newton::Preconditioner::Jacobi)
}

/// Inexact projected Newton with V-cycle preconditioned CG; the hierarchy is
/// rebuilt at every outer iteration.
pub fn solve_pn_mgpcg<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
) -> Result<SolveReport, SolveFailure> {
    newton::solve(
        state,
        config,
        newton::Operator::Assembled,
        newton::Preconditioner::Multigrid,
    )
}

/// Solve the grid step and return end-of-step nodal velocities.
pub fn step_grid<const D: usize>(
    state: &ObjectiveState<D>,
    config: &SolverConfig,
) -> Result<(Vec<Vector<D>>, SolveReport), SolveFailure> {
    let report = solve(state, config)?;
    Ok((state.end_velocities(&report.increment), report))
}
