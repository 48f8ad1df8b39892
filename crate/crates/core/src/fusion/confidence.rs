use thiserror::Error;

use super::FusionParams;
use crate::geometry::{angle_between, barycentric_of, CameraModel, InverseDepth, Vec3};
use crate::meshing::TriangleLocator;
use crate::view::{ViewFrame, WorldTriangle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScore {
    /// Mean reprojection disagreement with neighbor views, pixels.
    pub e_p: f64,
    /// Mean normal disagreement, radians.
    pub e_n: f64,
    /// Angle between the normal and the direction to the camera, radians.
    pub e_v: f64,
    pub gamma: f64,
    /// Neighbor views that contributed.
    pub neighbors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no correspondence in the neighbor view")]
pub struct NoCorrespondence;

/// `exp(−ē_p/σ_p) · exp(−ē_n/σ_n) · (1 − exp(−cos²(e_v)/σ_v))`.
pub fn confidence(e_p: f64, e_n: f64, e_v: f64, sigma_p: f64, sigma_n: f64, sigma_v: f64) -> f64 {
    let c = e_v.cos();
    (-e_p / sigma_p).exp() * (-e_n / sigma_n).exp() * (1.0 - (-(c * c) / sigma_v).exp())
}

pub fn normal_consistency(a: &Vec3, b: &Vec3) -> f64 {
    angle_between(a, b)
}

/// Angle between the (camera-facing) normal and the direction from the
/// centroid back to the camera; zero when fronto-parallel.
pub fn front_parallelism(tri: &WorldTriangle, camera: &CameraModel) -> f64 {
    angle_between(&tri.normal, &(camera.center() - tri.centroid))
}

/// Read-only view plus cached lookup structures.
#[derive(Debug, Clone)]
pub struct ViewContext<'a> {
    pub frame: &'a ViewFrame,
    pub locator: TriangleLocator,
    pub world: Vec<Option<WorldTriangle>>,
}

impl<'a> ViewContext<'a> {
    pub fn new(frame: &'a ViewFrame) -> Self {
        Self { frame, locator: frame.locator(), world: frame.world_triangles() }
    }

    /// Surface point of this view along the ray through `pixel`, with the
    /// triangle it lies on.
    pub fn surface_at(&self, pixel: &crate::geometry::Vec2) -> Option<(Vec3, usize)> {
        let cam = &self.frame.camera;
        if !cam.contains_pixel(pixel) {
            return None;
        }
        let t = self.locator.locate_where(pixel, |t| self.world[t].is_some())?;
        let b = barycentric_of(&self.frame.mesh.triangle_pixels(t), pixel).ok()?;
        let s = self.frame.mesh.triangles[t];
        let d = b.apply([self.frame.depths[s[0]], self.frame.depths[s[1]], self.frame.depths[s[2]]]);
        if !(d > 0.0) {
            return None;
        }
        Some((cam.unproject(pixel, InverseDepth(d)).ok()?, t))
    }
}

/// Projects `x` into the neighbor view, reads that view's surface point at the
/// pixel, and reprojects it into `camera_i`. Returns the pixel distance and
/// the neighbor triangle hit.
pub fn position_consistency(
    x: &Vec3,
    camera_i: &CameraModel,
    neighbor: &ViewContext,
) -> Result<(f64, usize), NoCorrespondence> {
    let (q, _) = neighbor.frame.camera.project(x).map_err(|_| NoCorrespondence)?;
    let (x_other, t) = neighbor.surface_at(&q).ok_or(NoCorrespondence)?;
    let (p_self, _) = camera_i.project(x).map_err(|_| NoCorrespondence)?;
    let (p_other, _) = camera_i.project(&x_other).map_err(|_| NoCorrespondence)?;
    Ok(((p_self - p_other).norm(), t))
}

/// Neighbor views of `i`: nearest by index first, lower index first on ties.
pub fn neighbor_views(i: usize, count: usize, window: usize, limit: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 1..=window {
        if i >= k {
            out.push(i - k);
        }
        if i + k < count {
            out.push(i + k);
        }
    }
    out.truncate(limit);
    out
}

/// Scores every triangle of view `i`; `None` for unsolved triangles.
pub fn score_view(i: usize, contexts: &[ViewContext], params: &FusionParams) -> Vec<Option<ConfidenceScore>> {
    let ctx = &contexts[i];
    let cam = &ctx.frame.camera;
    let neighbors = neighbor_views(i, contexts.len(), params.neighbor_window, params.max_neighbors);
    ctx.world
        .iter()
        .map(|w| {
            let w = w.as_ref()?;
            let (mut sp, mut sn, mut n) = (0.0, 0.0, 0usize);
            for &j in &neighbors {
                if let Ok((e_p, tj)) = position_consistency(&w.centroid, cam, &contexts[j]) {
                    let other = contexts[j].world[tj].as_ref().expect("located triangles are solved");
                    sp += e_p;
                    sn += normal_consistency(&w.normal, &other.normal);
                    n += 1;
                }
            }
            let e_v = front_parallelism(w, cam);
            if n == 0 {
                return Some(ConfidenceScore { e_p: 0.0, e_n: 0.0, e_v, gamma: 0.0, neighbors: 0 });
            }
            let (e_p, e_n) = (sp / n as f64, sn / n as f64);
            let gamma = confidence(e_p, e_n, e_v, params.sigma_p, params.sigma_n, params.sigma_v);
            Some(ConfidenceScore { e_p, e_n, e_v, gamma, neighbors: n })
        })
        .collect()
}

/// Scores all views and stores Γ in each frame.
pub fn score_views(views: &mut [ViewFrame], params: &FusionParams) -> Vec<Vec<Option<ConfidenceScore>>> {
    let scores: Vec<Vec<Option<ConfidenceScore>>> = {
        let contexts: Vec<ViewContext> = views.iter().map(ViewContext::new).collect();
        (0..views.len()).map(|i| score_view(i, &contexts, params)).collect()
    };
    for (v, s) in views.iter_mut().zip(&scores) {
        v.confidence = s.iter().map(|c| c.map_or(0.0, |c| c.gamma)).collect();
    }
    scores
}
