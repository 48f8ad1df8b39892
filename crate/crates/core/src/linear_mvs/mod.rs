//! Per-view linear inverse-depth solve over split vertex slots.
//!
//! The energy combines scene-point observations (barycentric rows), coplanar
//! extension across shared edges (smoothness rows) and equality of paired
//! slots (continuity rows). Color similarity of the adjacent triangles weights
//! the latter two so depth steps at color edges stay cheap.

mod solve;
mod sparse;
mod system;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use solve::{solve, FusionRow, Solution, SolveOptions};
pub use sparse::{conjugate_gradient, rcm_order, CgReport, SkylineCholesky, SparseSymmetric};
pub use system::{assemble, color_weight, ARow, BRow, CRow, DepthSystem, Energy, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub sigma_color: f64,
    /// Above this many unknowns the solve switches to conjugate gradient.
    pub direct_limit: usize,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_c: 1.0,
            sigma_color: 0.2,
            direct_limit: 200_000,
            cg_tolerance: 1e-12,
            cg_max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("unconstrained system: the view has no scene-point observations")]
    Unconstrained,
    #[error("rank deficient normal matrix in support component {component:?} (slot {slot})")]
    RankDeficient { component: Option<u32>, slot: usize },
    #[error("slot {0} is not an active unknown")]
    BadSlot(usize),
    #[error("conjugate gradient stalled at relative residual {0:e}")]
    NotConverged(f64),
}
