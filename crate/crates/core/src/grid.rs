//! Lattice and kernel primitives: B-spline weights and gradients, sparse grid
//! activation and the CFL step size.
//!
//! Grid nodes sit at integer multiples of the spacing `dx`. Kernel offsets are
//! always `(x_particle - x_node) / dx`, i.e. measured in cells from the node.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

/// Integer lattice index of a grid node. Ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeCoord<const D: usize>(pub [i64; D]);

impl<const D: usize> LatticeCoord<D> {
    pub fn offset(&self, delta: &[i64; D]) -> Self {
        let mut c = self.0;
        for a in 0..D {
            c[a] += delta[a];
        }
        Self(c)
    }

    pub fn position(&self, dx: f64) -> Vector<D> {
        Vector::<D>::from_fn(|a, _| self.0[a] as f64 * dx)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    #[serde(alias = "quadratic")]
    QuadraticBSpline,
    Linear,
}

impl KernelKind {
    pub fn support_radius(self) -> f64 {
        match self {
            KernelKind::QuadraticBSpline => 1.5,
            KernelKind::Linear => 1.0,
        }
    }

    /// Nodes per axis touched by one sample.
    pub fn stencil_width(self) -> usize {
        match self {
            KernelKind::QuadraticBSpline => 3,
            KernelKind::Linear => 2,
        }
    }

    #[inline]
    pub fn weight_1d(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelKind::QuadraticBSpline => {
                if a < 0.5 {
                    0.75 - a * a
                } else if a < 1.5 {
                    let b = 1.5 - a;
                    0.5 * b * b
                } else {
                    0.0
                }
            }
            KernelKind::Linear => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative of [`Self::weight_1d`] with respect to the offset.
    #[inline]
    pub fn derivative_1d(self, t: f64) -> f64 {
        let a = t.abs();
        let s = if t < 0.0 { -1.0 } else { 1.0 };
        match self {
            KernelKind::QuadraticBSpline => {
                if a < 0.5 {
                    -2.0 * t
                } else if a < 1.5 {
                    -s * (1.5 - a)
                } else {
                    0.0
                }
            }
            KernelKind::Linear => {
                if a < 1.0 {
                    -s
                } else {
                    0.0
                }
            }
        }
    }

    /// First node (per axis) of the stencil covering a sample at `x` cells.
    #[inline]
    fn base_node(self, x: f64) -> i64 {
        match self {
            KernelKind::QuadraticBSpline => x.round() as i64 - 1,
            KernelKind::Linear => x.floor() as i64,
        }
    }
}

/// Tensor-product kernel weight for a per-axis offset in cell units.
pub fn kernel_weight(kind: KernelKind, offset: &[f64]) -> f64 {
    offset.iter().map(|&t| kind.weight_1d(t)).product()
}

/// Gradient of the kernel weight with respect to the sample position, in 1/m.
pub fn kernel_gradient<const N: usize>(kind: KernelKind, offset: &[f64; N], dx: f64) -> [f64; N] {
    let mut g = [0.0; N];
    for (a, ga) in g.iter_mut().enumerate() {
        let mut v = kind.derivative_1d(offset[a]) / dx;
        for (b, &t) in offset.iter().enumerate() {
            if b != a {
                v *= kind.weight_1d(t);
            }
        }
        *ga = v;
    }
    g
}

#[derive(Clone, Copy, Debug)]
pub struct StencilEntry<const D: usize> {
    pub coord: LatticeCoord<D>,
    pub weight: f64,
    /// Gradient with respect to the sample position (1/m).
    pub gradient: Vector<D>,
}

/// Visit every node with a strictly positive weight for a sample at
/// `position` (meters).
pub fn for_each_stencil_node<const D: usize>(
    kind: KernelKind,
    position: &Vector<D>,
    dx: f64,
    mut f: impl FnMut(StencilEntry<D>),
) {
    let width = kind.stencil_width();
    let mut base = [0i64; D];
    let mut w = [[0.0; 3]; D];
    let mut dw = [[0.0; 3]; D];
    for a in 0..D {
        let x = position[a] / dx;
        base[a] = kind.base_node(x);
        for k in 0..width {
            let t = x - (base[a] + k as i64) as f64;
            w[a][k] = kind.weight_1d(t);
            dw[a][k] = kind.derivative_1d(t) / dx;
        }
    }
    let total = width.pow(D as u32);
    for flat in 0..total {
        let mut idx = [0usize; D];
        let mut rem = flat;
        for slot in idx.iter_mut() {
            *slot = rem % width;
            rem /= width;
        }
        let mut weight = 1.0;
        for a in 0..D {
            weight *= w[a][idx[a]];
        }
        if weight <= 0.0 {
            continue;
        }
        let mut gradient = Vector::<D>::zeros();
        for a in 0..D {
            let mut g = dw[a][idx[a]];
            for b in 0..D {
                if b != a {
                    g *= w[b][idx[b]];
                }
            }
            gradient[a] = g;
        }
        let mut c = [0i64; D];
        for a in 0..D {
            c[a] = base[a] + idx[a] as i64;
        }
        f(StencilEntry {
            coord: LatticeCoord(c),
            weight,
            gradient,
        });
    }
}

pub fn stencil_nodes<const D: usize>(
    kind: KernelKind,
    position: &Vector<D>,
    dx: f64,
) -> Vec<StencilEntry<D>> {
    let mut out = Vec::with_capacity(kind.stencil_width().pow(D as u32));
    for_each_stencil_node(kind, position, dx, |e| out.push(e));
    out
}

/// Sorted set of active lattice nodes with a coordinate lookup.
#[derive(Clone, Debug)]
pub struct NodeLayout<const D: usize> {
    pub dx: f64,
    coords: Vec<LatticeCoord<D>>,
    lookup: HashMap<LatticeCoord<D>, usize>,
}

impl<const D: usize> NodeLayout<D> {
    /// Duplicates are merged and indices follow lexicographic coordinate
    /// order.
    pub fn from_coords(dx: f64, mut coords: Vec<LatticeCoord<D>>) -> Self {
        crate::linalg::assert_dim::<D>();
        coords.par_sort_unstable();
        coords.dedup();
        let lookup = coords.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Self { dx, coords, lookup }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[LatticeCoord<D>] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> LatticeCoord<D> {
        self.coords[i]
    }

    #[inline]
    pub fn index_of(&self, c: &LatticeCoord<D>) -> Option<usize> {
        self.lookup.get(c).copied()
    }

    pub fn position(&self, i: usize) -> Vector<D> {
        self.coords[i].position(self.dx)
    }
}

/// Active nodes of one grid level with their nodal state.
#[derive(Clone, Debug)]
pub struct SparseGrid<const D: usize> {
    pub dx: f64,
    layout: Arc<NodeLayout<D>>,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vector<D>>,
    pub velocity: Vec<Vector<D>>,
    pub dirichlet: Vec<bool>,
    /// Prescribed velocity of Dirichlet nodes (ignored elsewhere).
    pub scripted_velocity: Vec<Vector<D>>,
}

impl<const D: usize> SparseGrid<D> {
    pub fn from_coords(dx: f64, coords: Vec<LatticeCoord<D>>) -> Self {
        let layout = NodeLayout::from_coords(dx, coords);
        let n = layout.len();
        Self {
            dx,
            layout: Arc::new(layout),
            mass: vec![0.0; n],
            momentum: vec![Vector::<D>::zeros(); n],
            velocity: vec![Vector::<D>::zeros(); n],
            dirichlet: vec![false; n],
            scripted_velocity: vec![Vector::<D>::zeros(); n],
        }
    }

    pub fn layout(&self) -> &Arc<NodeLayout<D>> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn coords(&self) -> &[LatticeCoord<D>] {
        self.layout.coords()
    }

    pub fn coord(&self, i: usize) -> LatticeCoord<D> {
        self.layout.coord(i)
    }

    #[inline]
    pub fn index_of(&self, c: &LatticeCoord<D>) -> Option<usize> {
        self.layout.index_of(c)
    }

    pub fn position(&self, i: usize) -> Vector<D> {
        self.layout.position(i)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn dirichlet_count(&self) -> usize {
        self.dirichlet.iter().filter(|d| **d).count()
    }
}

/// Activate exactly the lattice nodes that receive a positive weight from at
/// least one sample. The result does not depend on sample order.
pub fn activate_grid<const D: usize>(
    positions: &[Vector<D>],
    dx: f64,
    kind: KernelKind,
) -> SparseGrid<D> {
    assert!(dx > 0.0, "grid spacing must be positive");
    let coords: Vec<LatticeCoord<D>> = positions
        .par_iter()
        .flat_map_iter(|x| {
            debug_assert!(x.iter().all(|v| v.is_finite()));
            stencil_nodes(kind, x, dx).into_iter().map(|e| e.coord)
        })
        .collect();
    SparseGrid::from_coords(dx, coords)
}

/// CFL-limited step: `min(1/fps, 0.6 dx / v_max)`.
pub fn cfl_dt(v_max: f64, dx: f64, fps: f64) -> f64 {
    const CFL: f64 = 0.6;
    let frame = 1.0 / fps;
    if v_max <= 0.0 {
        frame
    } else {
        frame.min(CFL * dx / v_max)
    }
}
