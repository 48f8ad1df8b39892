//! Per-triangle confidence, multi-view depth fusion and the merged surface.

mod confidence;
mod correspond;
mod fuse;
mod surface;

use serde::{Deserialize, Serialize};

pub use confidence::{
    confidence, front_parallelism, normal_consistency, position_consistency, score_view, score_views, ConfidenceScore,
    NoCorrespondence, ViewContext,
};
pub use correspond::{find_corresponding, median_edge_length, CorrespondenceIndex, Thresholds};
pub use fuse::{fuse, fusion_energy, FusionReport};
pub use surface::{merge, FusedSurface};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub sigma_p: f64,
    pub sigma_n: f64,
    pub sigma_v: f64,
    /// Confidence neighbors: up to this many views within `neighbor_window`
    /// of the source index.
    pub max_neighbors: usize,
    pub neighbor_window: usize,
    /// Triangles above this confidence are held fixed during fusion.
    pub anchor_threshold: f64,
    pub lambda_u: f64,
    /// Fusion partners satisfy `|i − j| < fusion_window`.
    pub fusion_window: usize,
    /// Correspondence distance as a multiple of the median edge length.
    pub space_factor: f64,
    pub normal_threshold_deg: f64,
    pub color_threshold: f64,
    pub sweeps: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            sigma_p: 2.0,
            sigma_n: 0.3,
            sigma_v: 0.3,
            max_neighbors: 6,
            neighbor_window: 3,
            anchor_threshold: 0.5,
            lambda_u: 1.0,
            fusion_window: 3,
            space_factor: 3.0,
            normal_threshold_deg: 30.0,
            color_threshold: 0.15,
            sweeps: 1,
        }
    }
}
