//! Synthetic scenes, rendering, scene-point synthesis, the closed capture
//! loop and evaluation metrics.

mod eval;
mod output;
mod pipeline;
mod points;
mod render;
mod scene;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_map, sample_iso_points, CoverageLabel, CoverageMap, CoverageParams, CoverageSummary};
use crate::fusion::{fuse, merge, score_views, FusedSurface, FusionParams, FusionReport};
use crate::geometry::{CameraModel, Intrinsics, Vec2, Vec3};
use crate::linear_mvs::SolveParams;
use crate::meshing::ViewMesh;
use crate::nbv::{plan_nbvs, plan_path, FlightPath, NbvOutcome, NbvParams, OccupancyGrid, Pose};
use crate::view::ViewFrame;
use crate::Error;

pub use eval::{
    accuracy, completeness, icp_refine, umeyama, Accuracy, EvalError, IcpReport, NearestVertex, Similarity,
    BRUTE_FORCE_LIMIT,
};
pub use output::{nbv_json, write_iteration, write_json, write_state, NbvJson};
pub use pipeline::{filter_support, mesh_image, solve_view, ReconParams};
pub use points::{observations_for_view, sees, synth_scene_points, PointParams, ScenePoint};
pub use render::{render_view, shade, RenderedView, BACKGROUND};
pub use scene::{build_scene, Primitive, Scene, SceneError, SceneSpec};

/// Camera intrinsics shared by every simulated capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self { width: 160, height: 96, focal: 120.0 }
    }
}

impl CameraParams {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.focal, self.width, self.height)
    }
}

/// Rectangular initial path at a fixed height. Side cameras face the
/// rectangle's interior perpendicular to their side; corner cameras face
/// diagonally inward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParams {
    pub center: Vec2,
    pub half_x: f64,
    pub half_y: f64,
    pub height: f64,
    pub pitch_deg: f64,
    /// Cameras per side, corners excluded.
    pub per_side: usize,
    pub corners: bool,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            center: Vec2::zeros(),
            half_x: 8.5,
            half_y: 8.5,
            height: 6.0,
            pitch_deg: 30.0,
            per_side: 3,
            corners: true,
        }
    }
}

pub fn rectangular_orbit(orbit: &OrbitParams, intrinsics: Intrinsics) -> Vec<CameraModel> {
    let (cx, cy, hx, hy) = (orbit.center.x, orbit.center.y, orbit.half_x, orbit.half_y);
    let mut poses: Vec<(f64, f64, f64)> = Vec::new();
    let side = |k: usize| (k as f64 + 1.0) / (orbit.per_side as f64 + 1.0) * 2.0 - 1.0;
    // Counter-clockwise from the south-west corner.
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    for c in 0..4 {
        let (sx, sy) = corners[c];
        if orbit.corners {
            poses.push((cx + sx * hx, cy + sy * hy, (-sy).atan2(-sx).to_degrees()));
        }
        let (ex, ey) = corners[(c + 1) % 4];
        for k in 0..orbit.per_side {
            let t = 0.5 * (side(k) + 1.0);
            let (x, y) = (sx + (ex - sx) * t, sy + (ey - sy) * t);
            // Inward normal of this side.
            let yaw = match c {
                0 => 90.0,
                1 => 180.0,
                2 => -90.0,
                _ => 0.0,
            };
            poses.push((cx + x * hx, cy + y * hy, yaw));
        }
    }
    poses
        .into_iter()
        .map(|(x, y, yaw)| {
            CameraModel::look_from(intrinsics, Vec3::new(x, y, orbit.height), yaw, orbit.pitch_deg).expect("valid")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Spacing of ground-truth samples, m.
    pub sample_radius: f64,
    pub completeness_distance: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { sample_radius: 0.15, completeness_distance: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub camera: CameraParams,
    pub orbit: OrbitParams,
    pub points: PointParams,
    pub recon: ReconParams,
    pub solve: SolveParams,
    pub fusion: FusionParams,
    pub coverage: CoverageParams,
    pub nbv: NbvParams,
    pub eval: EvalParams,
    /// Rounds of NBV capture after the initial orbit.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            camera: CameraParams::default(),
            orbit: OrbitParams::default(),
            points: PointParams::default(),
            recon: ReconParams::default(),
            solve: SolveParams::default(),
            fusion: FusionParams::default(),
            coverage: CoverageParams::default(),
            nbv: NbvParams::default(),
            eval: EvalParams::default(),
            max_iterations: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FullyCovered,
    NoReachableNbv,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: Option<Accuracy>,
    pub completeness: Option<f64>,
}

/// Everything produced in one iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cameras: Vec<CameraModel>,
    pub num_points: usize,
    pub surface: FusedSurface,
    pub coverage: CoverageMap,
    /// Uncovered iso-points per ground-truth face id.
    pub uncovered_by_face: BTreeMap<usize, usize>,
    pub fusion: FusionReport,
    pub nbv: Option<NbvOutcome>,
    pub path: Option<FlightPath>,
    pub metrics: Metrics,
}

impl IterationRecord {
    pub fn summary(&self) -> CoverageSummary {
        self.coverage.summary
    }

    pub fn selected_pitch(&self) -> Option<f64> {
        match &self.nbv {
            Some(NbvOutcome::Selected { pitch_deg, .. }) => Some(*pitch_deg),
            _ => None,
        }
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "iteration": self.iteration,
            "views": self.cameras.len(),
            "scene_points": self.num_points,
            "fused_triangles": self.surface.len(),
            "coverage": self.coverage.summary,
            "uncovered_by_face": self.uncovered_by_face,
            "selected_pitch_deg": self.selected_pitch(),
            "fusion": self.fusion,
            "accuracy": self.metrics.accuracy,
            "completeness": self.metrics.completeness,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoopState {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

impl LoopState {
    pub fn fraction_history(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|r| r.coverage.summary.fraction).collect()
    }

    pub fn last(&self) -> &IterationRecord {
        self.iterations.last().expect("at least one iteration")
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "termination": self.termination,
            "iterations": self.iterations.iter().map(IterationRecord::metrics_json).collect::<Vec<_>>(),
        })
    }
}

struct Capture {
    camera: CameraModel,
    mesh: ViewMesh,
}

fn stage<E: Into<Error>>(name: &'static str, iteration: usize) -> impl FnOnce(E) -> Error {
    move |e| Error::Stage { stage: name, iteration, source: Box::new(e.into()) }
}

/// Reconstructs and fuses all captures against the given scene points.
pub fn reconstruct(
    cameras: &[CameraModel],
    meshes: &[ViewMesh],
    points: &[ScenePoint],
    params: &SimParams,
) -> Result<(Vec<ViewFrame>, FusionReport), Error> {
    let mut frames = Vec::with_capacity(cameras.len());
    for (v, (cam, mesh)) in cameras.iter().zip(meshes).enumerate() {
        let obs = observations_for_view(points, v, cam);
        frames.push(solve_view(v, cam.clone(), mesh.clone(), &obs, &params.recon, &params.solve)?);
    }
    score_views(&mut frames, &params.fusion);
    let report = fuse(&mut frames, &params.solve, &params.fusion)?;
    score_views(&mut frames, &params.fusion);
    Ok((frames, report))
}

/// Capture → scene points → meshing → solve → confidence → fusion → merge →
/// coverage → NBV planning, repeated until nothing is uncovered, no NBV is
/// reachable, or `max_iterations` rounds of NBVs have been captured.
pub fn run_loop(spec: &SceneSpec, initial: Vec<CameraModel>, params: &SimParams) -> Result<LoopState, Error> {
    let scene = build_scene(spec).map_err(|e| Error::Invalid(e.to_string()))?;
    let gt: Vec<Vec3> = sample_iso_points(&scene.triangles, params.eval.sample_radius, params.seed)
        .map_err(stage("evaluation", 0))?
        .into_iter()
        .map(|s| s.position)
        .collect();
    let intr = params.camera.intrinsics();
    let mut captures: Vec<Capture> = Vec::new();
    let mut pending = initial;
    let mut iterations = Vec::new();
    let mut iteration = 0;
    let termination = loop {
        for camera in pending.drain(..) {
            let image = render_view(&scene, &camera).image;
            captures.push(Capture { mesh: mesh_image(&image, &params.recon), camera });
        }
        let cameras: Vec<CameraModel> = captures.iter().map(|c| c.camera.clone()).collect();
        let meshes: Vec<ViewMesh> = captures.iter().map(|c| c.mesh.clone()).collect();
        // Same seed every round: earlier views keep their observations.
        let points = synth_scene_points(&scene, &cameras, &params.points, params.seed ^ spec.seed.rotate_left(17));
        let (frames, fusion) =
            reconstruct(&cameras, &meshes, &points, params).map_err(stage("reconstruction", iteration))?;
        let surface = merge(&frames);
        let coverage = coverage_map(&surface, &cameras, &params.coverage).map_err(stage("coverage", iteration))?;
        let uncovered_by_face = label_counts_by_face(&scene, &coverage, CoverageLabel::Uncovered);
        let vertices: Vec<Vec3> = surface.triangles.iter().flatten().copied().collect();
        let metrics = if vertices.is_empty() {
            Metrics { accuracy: None, completeness: None }
        } else {
            let nv = NearestVertex::new(vertices);
            Metrics {
                accuracy: accuracy(&gt, &nv).ok(),
                completeness: completeness(&gt, &nv, params.eval.completeness_distance).ok(),
            }
        };
        let mut record = IterationRecord {
            iteration,
            cameras: cameras.clone(),
            num_points: points.len(),
            surface,
            coverage,
            uncovered_by_face,
            fusion,
            nbv: None,
            path: None,
            metrics,
        };
        log::info!(
            "iteration {iteration}: {} views, {} points, coverage {:?}",
            cameras.len(),
            points.len(),
            record.coverage.summary
        );
        if record.coverage.summary.uncovered == 0 {
            iterations.push(record);
            break Termination::FullyCovered;
        }
        if iteration >= params.max_iterations {
            iterations.push(record);
            break Termination::MaxIterations;
        }
        let bvh = record.surface.bvh();
        let poses: Vec<Pose> = cameras.iter().map(Pose::of).collect();
        let plan = plan_nbvs(&record.coverage, &bvh, intr, &poses, &params.nbv, params.coverage.occlusion())
            .map_err(stage("nbv planning", iteration))?;
        match &plan.outcome {
            NbvOutcome::Selected { altitude, nbvs, .. } => {
                let start = cameras.last().expect("cameras").center();
                let path = plan_flight(&bvh, *altitude, &start, nbvs, &params.nbv)
                    .map_err(stage("path planning", iteration))?;
                for &k in &path.visit_order {
                    pending.push(nbvs[k].camera(intr));
                }
                record.path = Some(path);
                record.nbv = Some(plan.outcome.clone());
                iterations.push(record);
            }
            other => {
                record.nbv = Some(other.clone());
                iterations.push(record);
                break match other {
                    NbvOutcome::FullyCovered => Termination::FullyCovered,
                    _ => Termination::NoReachableNbv,
                };
            }
        }
        if pending.is_empty() {
            break Termination::NoReachableNbv;
        }
        iteration += 1;
    };
    Ok(LoopState { iterations, termination })
}

/// Occupancy grid on the NBV plane around the surface, the NBVs and the
/// start; the start is moved to the nearest free cell when it is occupied.
pub fn plan_flight(
    surface: &crate::geometry::Bvh,
    altitude: f64,
    start: &Vec3,
    nbvs: &[crate::nbv::ViewCandidate],
    params: &NbvParams,
) -> Result<FlightPath, crate::nbv::PlanningError> {
    let pad = 2.0 * params.safe_distance;
    let (mut lo, mut hi) = surface.bounds().map_or((*start, *start), |(a, b)| (a, b));
    for p in nbvs.iter().map(|n| n.position).chain([*start]) {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let grid = OccupancyGrid::build(
        surface,
        altitude,
        params.cell_size,
        params.safe_distance,
        Vec2::new(lo.x - pad, lo.y - pad),
        Vec2::new(hi.x + pad, hi.y + pad),
    )?;
    let on_plane = Vec3::new(start.x, start.y, altitude);
    let cell = grid.cell_of(&on_plane);
    let free = grid.snap_free(cell, grid.nx.max(grid.ny)).unwrap_or(cell);
    plan_path(&grid, &grid.center(free), nbvs, params.snap_radius)
}

/// Iso-points with `label`, counted per ground-truth face.
pub fn label_counts_by_face(scene: &Scene, coverage: &CoverageMap, label: CoverageLabel) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for p in coverage.points.iter().filter(|p| p.label == label) {
        if let Some(c) = scene.bvh.closest_point(&p.position) {
            *out.entry(scene.face[c.triangle]).or_insert(0) += 1;
        }
    }
    out
}
