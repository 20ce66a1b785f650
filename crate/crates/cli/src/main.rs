use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hot_mpm::grid::KernelKind;
use hot_mpm::harness::{
    builtin_scene, parse_scene, run_scene, FrameReport, RunOptions, BUILTIN_SCENES,
};
use hot_mpm::solvers::SolverKind;

#[derive(Parser, Debug)]
#[command(name = "hot", version, about = "Implicit MPM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scene file and write per-frame snapshots.
    Run(RunArgs),
    /// Print a built-in scene as JSON.
    Scene {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_SCENES))]
        name: String,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scene file (JSON).
    scene: PathBuf,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    /// Output directory for snapshots and diagnostics.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    /// Outer tolerance on the characteristic norm.
    #[arg(long)]
    eps: Option<f64>,
    /// Multigrid levels.
    #[arg(long)]
    levels: Option<usize>,
    /// L-BFGS history window.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum)]
    embedding: Option<Embedding>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave wall time out of the diagnostics so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
    /// Also write a plain-text position table per frame.
    #[arg(long)]
    text: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Hot,
    PnPcg,
    PnPcgMf,
    PnMgpcg,
    LbfgsH,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Hot => SolverKind::Hot,
            Solver::PnPcg => SolverKind::PnPcg,
            Solver::PnPcgMf => SolverKind::PnPcgMf,
            Solver::PnMgpcg => SolverKind::PnMgpcg,
            Solver::LbfgsH => SolverKind::LbfgsH,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Embedding {
    Linear,
    Quadratic,
}

fn run(args: RunArgs) -> Result<()> {
    if let Some(threads) = args.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = fs::read_to_string(&args.scene)
        .with_context(|| format!("reading {}", args.scene.display()))?;
    let mut config =
        parse_scene(&text).with_context(|| format!("loading {}", args.scene.display()))?;
    if let Some(s) = args.solver {
        config.solver.kind = s.into();
    }
    if let Some(frames) = args.frames {
        config.frames = frames;
    }
    if let Some(eps) = args.eps {
        config.solver.epsilon = eps;
    }
    if let Some(levels) = args.levels {
        config.solver.levels = levels;
    }
    if let Some(window) = args.window {
        config.solver.window = window;
    }
    if let Some(e) = args.embedding {
        config.solver.embedding = match e {
            Embedding::Linear => KernelKind::Linear,
            Embedding::Quadratic => KernelKind::QuadraticBSpline,
        };
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.solver.record_wall_time = !args.deterministic;
    // overrides are checked like the file itself
    config.validate()?;

    log::info!(
        "{}: {} frames with {}",
        args.scene.display(),
        config.frames,
        config.solver.kind
    );
    let options = RunOptions {
        out_dir: args.out,
        text_tables: args.text,
    };
    let summary = run_scene(&config, &options, |r: &FrameReport| {
        println!(
            "frame {:4}  t={:.4}  steps={}  outer={}  inner={}  work={:.1}  residual={:.3e}  particles={}",
            r.frame, r.time, r.steps, r.outer_iterations, r.inner_iterations, r.work_units, r.max_residual, r.particles
        );
    })?;
    println!(
        "done: {} frames, {} steps, {} outer iterations",
        summary.frames, summary.steps, summary.outer_iterations
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Scene { name } => {
            let config = builtin_scene(&name).expect("name was validated by the parser");
            println!("{}", config.to_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
