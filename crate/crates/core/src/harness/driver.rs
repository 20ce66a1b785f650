use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::boundary::{apply_colliders, Collider, Geometry};
use super::scene::SceneConfig;
use super::HarnessError;
use crate::constitutive::Material;
use crate::grid::{activate_grid, cfl_dt, KernelKind, SparseGrid};
use crate::linalg::Vector;
use crate::objective::ObjectiveState;
use crate::solvers::{step_grid, DiagnosticsRecord, SolverConfig};
use crate::transfer::{advect, g2p, p2g, update_strain, InterpolationCache, Particle};

/// Transfer kernel used between particles and grid.
pub const TRANSFER_KERNEL: KernelKind = KernelKind::QuadraticBSpline;

/// A validated scene with vectors fixed to dimension `D`.
#[derive(Clone, Debug)]
pub struct Scene<const D: usize> {
    pub dx: f64,
    pub fps: f64,
    pub frames: usize,
    pub gravity: Vector<D>,
    pub materials: Vec<Material>,
    pub colliders: Vec<Collider<D>>,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState<const D: usize> {
    pub particles: Vec<Particle<D>>,
    pub time: f64,
    /// Frames completed so far.
    pub frame: usize,
    /// Steps taken so far.
    pub step: usize,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// What one call to [`advance_step`] did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub step: usize,
    pub dt: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub work_units: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub hierarchy_builds: usize,
    pub fallbacks: usize,
    pub dirichlet_nodes: usize,
    pub inverted: usize,
    pub frame_completed: bool,
}

impl SceneConfig {
    /// Build the typed scene and sample the initial particles.
    pub fn build<const D: usize>(&self) -> Result<(Scene<D>, SimulationState<D>), HarnessError> {
        self.validate()?;
        if self.dim != D {
            return Err(HarnessError::Dimension {
                expected: D,
                got: self.dim,
            });
        }
        let table = self.material_table();
        let scene = Scene {
            dx: self.dx,
            fps: self.fps,
            frames: self.frames,
            gravity: self
                .gravity
                .as_ref()
                .map_or_else(Vector::<D>::zeros, |g| Vector::<D>::from_column_slice(g)),
            materials: table.iter().map(|(_, m)| *m).collect(),
            colliders: self.colliders.iter().map(Collider::from_spec).collect(),
            solver: self.solver.clone(),
        };
        let particles = self.sample_particles::<D>(&scene.materials);
        let state = SimulationState {
            particles,
            time: 0.0,
            frame: 0,
            step: 0,
            diagnostics: Vec::new(),
        };
        Ok((scene, state))
    }

    /// Fill every object with samples on a lattice of spacing
    /// `dx / particles_per_cell`, each owning one lattice cell of volume.
    fn sample_particles<const D: usize>(&self, materials: &[Material]) -> Vec<Particle<D>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let spacing = self.dx / self.particles_per_cell as f64;
        let volume = spacing.powi(D as i32);
        let mut particles = Vec::new();
        for object in &self.objects {
            let material = self
                .material_index(&object.material)
                .expect("validated material");
            let density = materials[material].density;
            let geometry = Geometry::<D>::from_shape(&object.shape);
            let (lo, hi) = self
                .shape_bounds(&object.shape)
                .expect("validated bounded shape");
            let counts: Vec<usize> = (0..D)
                .map(|a| (((hi[a] - lo[a]) / spacing) - 1e-9).ceil().max(1.0) as usize)
                .collect();
            let total: usize = counts.iter().product();
            let velocity = object
                .velocity
                .as_ref()
                .map_or_else(Vector::<D>::zeros, |v| Vector::<D>::from_column_slice(v));
            for flat in 0..total {
                let mut rest = flat;
                let mut x = Vector::<D>::zeros();
                for a in 0..D {
                    let k = rest % counts[a];
                    rest /= counts[a];
                    x[a] = lo[a] + (k as f64 + 0.5) * spacing;
                }
                if self.jitter > 0.0 {
                    for a in 0..D {
                        x[a] += rng.random_range(-self.jitter..self.jitter) * spacing;
                    }
                }
                if !geometry.contains(&x) {
                    continue;
                }
                let mut particle = Particle::at_rest(x, density * volume, volume, material);
                particle.velocity = velocity;
                if let Some([lo, hi]) = object.random_stretch {
                    for a in 0..D {
                        particle.deformation[(a, a)] = if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        };
                    }
                }
                particles.push(particle);
            }
        }
        particles
    }
}

impl<const D: usize> Scene<D> {
    /// End time of frame `frame` (zero-based).
    pub fn frame_end(&self, frame: usize) -> f64 {
        (frame + 1) as f64 / self.fps
    }
}

/// Step size of the next step and whether it ends the current frame.
pub fn next_step_size<const D: usize>(state: &SimulationState<D>, scene: &Scene<D>) -> (f64, bool) {
    let v_max = state
        .particles
        .iter()
        .map(|p| p.velocity.norm())
        .fold(0.0, f64::max);
    let remaining = scene.frame_end(state.frame) - state.time;
    let dt = cfl_dt(v_max, scene.dx, scene.fps).min(remaining);
    // absorb a sliver left by rounding into this step
    if remaining - dt <= 1e-9 * remaining.max(1.0 / scene.fps) {
        (remaining, true)
    } else {
        (dt, false)
    }
}

/// Grid, interpolation cache and objective of the next step of `state`:
/// activation, P2G and the boundary scripts at the current time.
pub fn step_objective<const D: usize>(
    state: &SimulationState<D>,
    scene: &Scene<D>,
    dt: f64,
) -> Result<(SparseGrid<D>, InterpolationCache<D>, ObjectiveState<D>), HarnessError> {
    let positions: Vec<Vector<D>> = state.particles.iter().map(|p| p.position).collect();
    if positions.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(HarnessError::Step {
            step: state.step,
            message: "particle positions are not finite".into(),
        });
    }
    let mut grid = activate_grid(&positions, scene.dx, TRANSFER_KERNEL);
    let cache = InterpolationCache::build(&grid, &positions, TRANSFER_KERNEL);
    p2g(&state.particles, &mut grid, &cache);
    apply_colliders(&mut grid, &scene.colliders, state.time);
    let objective = ObjectiveState::new(
        &grid,
        &state.particles,
        &cache,
        &scene.materials,
        dt,
        scene.gravity,
    )
    .map_err(|e| HarnessError::Step {
        step: state.step,
        message: e.to_string(),
    })?;
    Ok((grid, cache, objective))
}

/// Run one implicit step: CFL step size, grid activation, P2G, boundary
/// scripts, the implicit grid solve, G2P, strain update and advection.
/// On error `state` is left untouched.
pub fn advance_step<const D: usize>(
    state: &mut SimulationState<D>,
    scene: &Scene<D>,
) -> Result<StepSummary, HarnessError> {
    let (dt, frame_completed) = next_step_size(state, scene);
    if !(dt > 0.0) {
        return Err(HarnessError::Invalid {
            path: "fps".into(),
            message: format!("non-positive time step {dt:e}"),
        });
    }
    let (mut grid, cache, objective) = step_objective(state, scene, dt)?;
    let (velocities, report) =
        step_grid(&objective, &scene.solver).map_err(|failure| HarnessError::Solve {
            step: state.step,
            failure: Box::new(failure),
        })?;

    grid.velocity = velocities;
    let mut particles = state.particles.clone();
    g2p(&grid, &mut particles, &cache);
    let strain = update_strain(&mut particles, &grid.velocity, &cache, &scene.materials, dt);
    advect(&mut particles, dt);

    let summary = StepSummary {
        step: state.step,
        dt,
        outer_iterations: report.outer_iterations(),
        inner_iterations: report.inner_iterations(),
        work_units: report.work_units(),
        initial_residual: report.initial_residual,
        final_residual: report.final_residual,
        hierarchy_builds: report.hierarchy_builds,
        fallbacks: report.fallbacks,
        dirichlet_nodes: grid.dirichlet_count(),
        inverted: strain.inverted,
        frame_completed,
    };
    state.particles = particles;
    state
        .diagnostics
        .extend(report.records.into_iter().map(|mut r| {
            r.frame = state.frame;
            r.step = state.step;
            r
        }));
    state.step += 1;
    if frame_completed {
        state.time = scene.frame_end(state.frame);
        state.frame += 1;
    } else {
        state.time += dt;
    }
    Ok(summary)
}

/// Steps until the current frame is complete.
pub fn advance_frame<const D: usize>(
    state: &mut SimulationState<D>,
    scene: &Scene<D>,
) -> Result<Vec<StepSummary>, HarnessError> {
    let mut steps = Vec::new();
    loop {
        let summary = advance_step(state, scene)?;
        let done = summary.frame_completed;
        steps.push(summary);
        if done {
            return Ok(steps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scene::parse_scene;

    fn scene_text(body: &str) -> String {
        format!(
            r#"{{
            "dim": 2, "dx": 0.1, "fps": 24, "frames": 2,
            "domain": {{"min": [0, 0], "max": [1, 1]}},
            "materials": {{"m": {{"density": 1000, "youngs_modulus": 1e4, "poisson_ratio": 0.3}}}},
            {body}
        }}"#
        )
    }

    #[test]
    fn sampling_fills_boxes_and_spheres() {
        let text = scene_text(
            r#""particles_per_cell": 2,
            "objects": [
                {"shape": {"type": "box", "min": [0.2, 0.2], "max": [0.4, 0.5]}, "material": "m", "velocity": [1, 0]},
                {"shape": {"type": "sphere", "center": [0.7, 0.7], "radius": 0.1}, "material": "m"}
            ]"#,
        );
        let (scene, state) = parse_scene(&text).unwrap().build::<2>().unwrap();
        let boxed: Vec<_> = state
            .particles
            .iter()
            .filter(|p| p.position[0] < 0.5)
            .collect();
        assert_eq!(boxed.len(), 4 * 6);
        let mass: f64 = boxed.iter().map(|p| p.mass).sum();
        assert!((mass - 1000.0 * 0.2 * 0.3).abs() < 1e-9);
        assert!(boxed
            .iter()
            .all(|p| p.velocity == Vector::<2>::new(1.0, 0.0)));
        let disk = state.particles.len() - boxed.len();
        // lattice samples inside a disk of radius two cells: close to its area
        assert!((disk as f64 * 0.0025 - std::f64::consts::PI * 0.01).abs() < 0.01);
        assert_eq!(scene.gravity, Vector::<2>::zeros());
        assert!(parse_scene(&text).unwrap().build::<3>().is_err());
    }

    #[test]
    fn random_stretch_uses_the_seed() {
        let text = scene_text(
            r#""seed": 9, "jitter": 0.2,
            "objects": [{"shape": {"type": "box", "min": [0.2, 0.2], "max": [0.4, 0.4]}, "material": "m", "random_stretch": [0.7, 1.3]}]"#,
        );
        let config = parse_scene(&text).unwrap();
        let (_, a) = config.build::<2>().unwrap();
        let (_, b) = config.build::<2>().unwrap();
        assert_eq!(a, b);
        for p in &a.particles {
            let f = p.deformation;
            assert_eq!(f[(0, 1)], 0.0);
            assert!((0.7..=1.3).contains(&f[(0, 0)]) && (0.7..=1.3).contains(&f[(1, 1)]));
        }
        assert_ne!(a.particles[0].deformation, a.particles[1].deformation);
        let mut other = config.clone();
        other.seed = 10;
        assert_ne!(other.build::<2>().unwrap().1, a);
    }

    #[test]
    fn frames_end_exactly_on_frame_boundaries() {
        let text = scene_text(
            r#""gravity": [0, -9.81],
            "objects": [{"shape": {"type": "box", "min": [0.3, 0.3], "max": [0.5, 0.5]}, "material": "m", "velocity": [0, -4]}]"#,
        );
        let (scene, mut state) = parse_scene(&text).unwrap().build::<2>().unwrap();
        let steps = advance_frame(&mut state, &scene).unwrap();
        // 0.6 dx / 4 m/s is shorter than a frame
        assert!(steps.len() >= 2);
        assert_eq!(state.frame, 1);
        assert_eq!(state.time, 1.0 / 24.0);
        assert_eq!(state.step, steps.len());
        let total: usize = steps.iter().map(|s| s.outer_iterations).sum();
        assert_eq!(state.diagnostics.len(), total);
        assert!(state.diagnostics.iter().all(|r| r.frame == 0));
    }

    #[test]
    fn failed_step_leaves_state_untouched() {
        let text = scene_text(
            r#""gravity": [0, -9.81], "solver": {"max_outer": 1, "epsilon": 1e-14},
            "objects": [{"shape": {"type": "box", "min": [0.3, 0.3], "max": [0.5, 0.5]}, "material": "m"}]"#,
        );
        let (scene, mut state) = parse_scene(&text).unwrap().build::<2>().unwrap();
        let before = state.clone();
        let err = advance_step(&mut state, &scene).unwrap_err();
        assert!(matches!(err, HarnessError::Solve { step: 0, .. }), "{err}");
        assert_eq!(state, before);
    }
}
