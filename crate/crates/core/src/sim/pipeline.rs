use serde::{Deserialize, Serialize};

use crate::geometry::CameraModel;
use crate::linear_mvs::{assemble, solve, DepthSystem, Observation, SolveError, SolveOptions, SolveParams};
use crate::meshing::{cluster_regions, oversegment, triangulate, RgbImage, SegmentParams, SupportClusters, ViewMesh};
use crate::view::ViewFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconParams {
    pub segment: SegmentParams,
    /// Support spreads only between triangles closer than this in color.
    pub link_threshold: f64,
    /// Support components with fewer observations are dropped.
    pub min_component_points: usize,
    /// Support components whose seeded triangles cover less than this
    /// fraction of their area are dropped.
    pub min_seed_fraction: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            segment: SegmentParams::default(),
            link_threshold: 0.05,
            min_component_points: 6,
            min_seed_fraction: 0.2,
        }
    }
}

/// Support after dropping sparsely observed components, renumbered densely.
pub fn filter_support(
    mesh: &ViewMesh,
    support: &SupportClusters,
    obs: &[Observation],
    params: &ReconParams,
) -> SupportClusters {
    let locator = mesh.locator();
    let k = support.count;
    let mut points = vec![0usize; k];
    let mut seeded = vec![false; mesh.num_triangles()];
    for o in obs {
        if let Some(t) = locator.locate_where(&o.pixel, |t| support.is_supported(t)) {
            seeded[t] = true;
            points[support.component[t].unwrap() as usize] += 1;
        }
    }
    let mut area = vec![0.0; k];
    let mut seeded_area = vec![0.0; k];
    for t in 0..mesh.num_triangles() {
        if let Some(c) = support.component[t] {
            let a = mesh.triangle_area(t);
            area[c as usize] += a;
            if seeded[t] {
                seeded_area[c as usize] += a;
            }
        }
    }
    let keep: Vec<bool> = (0..k)
        .map(|c| points[c] >= params.min_component_points && seeded_area[c] >= params.min_seed_fraction * area[c])
        .collect();
    renumber(support, |c| keep[c as usize])
}

fn renumber(support: &SupportClusters, keep: impl Fn(u32) -> bool) -> SupportClusters {
    let mut map = vec![None; support.count];
    let mut count = 0;
    for c in 0..support.count {
        if keep(c as u32) {
            map[c] = Some(count as u32);
            count += 1;
        }
    }
    SupportClusters { component: support.component.iter().map(|c| c.and_then(|c| map[c as usize])).collect(), count }
}

/// Meshes an image once; the result only depends on pixels.
pub fn mesh_image(image: &RgbImage, params: &ReconParams) -> ViewMesh {
    triangulate(&oversegment(image, &params.segment))
}

/// Support, system and depths for one view. Components that turn out rank
/// deficient are dropped and the solve repeated. A view without usable
/// observations comes back with no support.
pub fn solve_view(
    id: usize,
    camera: CameraModel,
    mesh: ViewMesh,
    obs: &[Observation],
    recon: &ReconParams,
    solve_params: &SolveParams,
) -> Result<ViewFrame, SolveError> {
    let pixels: Vec<_> = obs.iter().map(|o| o.pixel).collect();
    let raw = cluster_regions(&mesh, &pixels, Some(recon.link_threshold));
    let mut support = filter_support(&mesh, &raw, obs, recon);
    let n = mesh.num_slots();
    let empty = |mesh: ViewMesh| {
        let t = mesh.num_triangles();
        ViewFrame {
            id,
            camera: camera.clone(),
            system: DepthSystem::empty(n),
            mesh,
            support: SupportClusters { component: vec![None; t], count: 0 },
            depths: vec![f64::NAN; n],
            confidence: vec![0.0; t],
        }
    };
    loop {
        if support.count == 0 {
            return Ok(empty(mesh));
        }
        let system = match assemble(&mesh, &support, obs, solve_params) {
            Ok(s) => s,
            Err(SolveError::Unconstrained) => return Ok(empty(mesh)),
            Err(e) => return Err(e),
        };
        match solve(&system, solve_params, &SolveOptions::default()) {
            Ok(sol) => {
                let t = mesh.num_triangles();
                return Ok(ViewFrame {
                    id,
                    camera,
                    mesh,
                    support,
                    system,
                    depths: sol.depths,
                    confidence: vec![0.0; t],
                });
            }
            Err(SolveError::RankDeficient { slot, .. }) => {
                let bad = system.slot_component[slot].or(support.component[ViewMesh::triangle_of_slot(slot)]);
                let Some(bad) = bad else {
                    return Err(SolveError::RankDeficient { component: None, slot });
                };
                support = renumber(&support, |c| c != bad);
            }
            Err(e) => return Err(e),
        }
    }
}
