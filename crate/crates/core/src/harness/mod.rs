//! Scene files, the per-step driver, built-in scenes and output writers.

pub mod boundary;
pub mod driver;
pub mod library;
pub mod output;
pub mod scene;

use std::fs;
use std::path::PathBuf;

use thiserror::Error;

pub use boundary::{apply_colliders, Collider, Geometry, RigidMotion};
pub use driver::{
    advance_frame, advance_step, next_step_size, step_objective, Scene, SimulationState,
    StepSummary, TRANSFER_KERNEL,
};
pub use library::{builtin_scene, BUILTIN_SCENES, STIFFNESS_SWEEP};
pub use output::{
    read_snapshot, write_diagnostics, write_snapshot, write_text_table, Snapshot, SnapshotError,
};
pub use scene::{parse_scene, SceneConfig};

use crate::solvers::SolveFailure;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scene parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scene at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("scene has dim {got} but {expected} was requested")]
    Dimension { expected: usize, got: usize },
    #[error("step {step}: {message}")]
    Step { step: usize, message: String },
    #[error("step {step}: solver failed: {failure}")]
    Solve {
        step: usize,
        failure: Box<SolveFailure>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory for snapshots and diagnostics; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    /// Also write a plain-text position table per frame.
    pub text_tables: bool,
}

/// Totals for one finished frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub frame: usize,
    pub time: f64,
    pub steps: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub work_units: f64,
    pub max_residual: f64,
    pub particles: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunSummary {
    pub frames: usize,
    pub steps: usize,
    pub outer_iterations: usize,
    pub diagnostics_rows: usize,
}

/// Simulate every frame of `config`, writing outputs as frames finish.
pub fn run_scene(
    config: &SceneConfig,
    options: &RunOptions,
    on_frame: impl FnMut(&FrameReport),
) -> Result<RunSummary, HarnessError> {
    match config.dim {
        2 => run::<2>(config, options, on_frame),
        3 => run::<3>(config, options, on_frame),
        d => Err(HarnessError::Invalid {
            path: "dim".into(),
            message: format!("dim must be 2 or 3, got {d}"),
        }),
    }
}

fn write_frame<const D: usize>(
    options: &RunOptions,
    state: &SimulationState<D>,
) -> Result<(), HarnessError> {
    let Some(dir) = &options.out_dir else {
        return Ok(());
    };
    let snapshot = Snapshot::from_particles(&state.particles);
    write_snapshot(&dir.join(output::snapshot_name(state.frame)), &snapshot)?;
    if options.text_tables {
        write_text_table(&dir.join(output::text_table_name(state.frame)), &snapshot)?;
    }
    Ok(())
}

fn run<const D: usize>(
    config: &SceneConfig,
    options: &RunOptions,
    mut on_frame: impl FnMut(&FrameReport),
) -> Result<RunSummary, HarnessError> {
    let (scene, mut state) = config.build::<D>()?;
    if let Some(dir) = &options.out_dir {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    write_frame(options, &state)?;
    let mut summary = RunSummary::default();
    let mut result = Ok(());
    while state.frame < scene.frames {
        match advance_frame(&mut state, &scene) {
            Ok(steps) => {
                let report = FrameReport {
                    frame: state.frame,
                    time: state.time,
                    steps: steps.len(),
                    outer_iterations: steps.iter().map(|s| s.outer_iterations).sum(),
                    inner_iterations: steps.iter().map(|s| s.inner_iterations).sum(),
                    work_units: steps.iter().map(|s| s.work_units).sum(),
                    max_residual: steps.iter().map(|s| s.final_residual).fold(0.0, f64::max),
                    particles: state.particles.len(),
                };
                summary.frames += 1;
                summary.steps += report.steps;
                summary.outer_iterations += report.outer_iterations;
                on_frame(&report);
                if let Err(e) = write_frame(options, &state) {
                    result = Err(e);
                    break;
                }
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    // diagnostics gathered so far are written even when a step failed
    if let Some(dir) = &options.out_dir {
        write_diagnostics(&dir.join(output::DIAGNOSTICS_NAME), &state.diagnostics)?;
    }
    summary.diagnostics_rows = state.diagnostics.len();
    result.map(|()| summary)
}
