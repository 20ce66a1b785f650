//! Characteristic norm: per-node gradient scaling that makes the
//! termination test unitless and comparable across materials.

use super::{ObjectiveError, ObjectiveState};

/// The characteristic length is `CN_LENGTH_FACTOR * dx^2`.
pub const CN_LENGTH_FACTOR: f64 = 24.0;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeCn {
    /// Characteristic length `24 dx^2` (m^2).
    pub length: f64,
    /// Mass-weighted stiffness per node (Pa).
    pub stiffness: Vec<f64>,
    /// `length * stiffness_i * dt`, the divisor applied to node `i`.
    pub scale: Vec<f64>,
}

impl NodeCn {
    pub fn max_stiffness(&self) -> f64 {
        self.stiffness.iter().copied().fold(0.0, f64::max)
    }
}

pub fn compute_node_cn<const D: usize>(state: &ObjectiveState<D>) -> NodeCn {
    let dx = state.layout().dx;
    let length = CN_LENGTH_FACTOR * dx * dx;
    let stiffness_p = state.particle_stiffness();
    let mass_p = state.particle_mass();
    let stiffness: Vec<f64> = (0..state.node_count())
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for &e in state.node_entry_range(i) {
                let e = e as usize;
                let p = state.entry_particle(e);
                let wm = state.entry_weight(e) * mass_p[p];
                num += wm * stiffness_p[p];
                den += wm;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    let scale = stiffness
        .iter()
        .map(|xi| length * xi * state.dt())
        .collect();
    NodeCn {
        length,
        stiffness,
        scale,
    }
}

/// `|| g_i / (l xi_i dt) ||_2` over all nodes.
pub fn scaled_norm<const D: usize>(g: &[f64], cn: &NodeCn) -> Result<f64, ObjectiveError> {
    if g.len() != cn.scale.len() * D {
        return Err(ObjectiveError::DimensionMismatch {
            expected: cn.scale.len() * D,
            got: g.len(),
        });
    }
    let mut sum = 0.0;
    for (i, s) in cn.scale.iter().enumerate() {
        if !(*s > 0.0) {
            return Err(ObjectiveError::ZeroStiffness(i));
        }
        for v in &g[i * D..i * D + D] {
            let r = v / s;
            sum += r * r;
        }
    }
    Ok(sum.sqrt())
}
