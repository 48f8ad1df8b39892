//! Next-best-view search over quantized pitch planes, plus occupancy-grid
//! A* paths through the selected views.

mod path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{projection_ratio, CoverageMap, IsoPoint, Occlusion};
use crate::geometry::{Bvh, CameraModel, Intrinsics, Vec2, Vec3};

pub use path::{astar, bfs_distance, plan_path, Cell, FlightPath, OccupancyGrid, Waypoint};

#[derive(Debug, Error, PartialEq)]
pub enum PlanningError {
    #[error("start position ({x}, {y}) lies in an occupied cell")]
    StartOccupied { x: f64, y: f64 },
    #[error("invalid planning parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbvParams {
    pub pitch_count: usize,
    pub pitch_min_deg: f64,
    pub pitch_max_deg: f64,
    pub yaw_count: usize,
    /// Candidate position spacing on each plane, meters.
    pub grid_step: f64,
    pub safe_distance: f64,
    /// Planes below this altitude are raised to it.
    pub min_altitude: Option<f64>,
    pub nbv_count: usize,
    pub nms_radius: f64,
    pub reach_angle_deg: f64,
    pub reach_distance_indoor: f64,
    pub reach_distance_outdoor: f64,
    pub indoor: bool,
    /// Occupancy grid cell size, meters.
    pub cell_size: f64,
    /// How far (cells) an NBV in an occupied cell may be moved.
    pub snap_radius: usize,
}

impl Default for NbvParams {
    fn default() -> Self {
        Self {
            pitch_count: 12,
            pitch_min_deg: -30.0,
            pitch_max_deg: 30.0,
            yaw_count: 8,
            grid_step: 1.0,
            safe_distance: 5.0,
            min_altitude: None,
            nbv_count: 5,
            nms_radius: 1.0,
            reach_angle_deg: 15.0,
            reach_distance_indoor: 0.5,
            reach_distance_outdoor: 3.0,
            indoor: false,
            cell_size: 0.5,
            snap_radius: 2,
        }
    }
}

impl NbvParams {
    pub fn validate(&self) -> Result<(), PlanningError> {
        let ok = self.pitch_count >= 1
            && self.yaw_count >= 1
            && self.grid_step > 0.0
            && self.safe_distance > 0.0
            && self.cell_size > 0.0
            && self.pitch_min_deg <= self.pitch_max_deg;
        if ok {
            Ok(())
        } else {
            Err(PlanningError::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Uniformly spaced pitches, endpoints included (downward positive).
    pub fn pitches(&self) -> Vec<f64> {
        if self.pitch_count == 1 {
            return vec![0.5 * (self.pitch_min_deg + self.pitch_max_deg)];
        }
        let step = (self.pitch_max_deg - self.pitch_min_deg) / (self.pitch_count - 1) as f64;
        (0..self.pitch_count).map(|k| self.pitch_min_deg + step * k as f64).collect()
    }

    pub fn yaws(&self) -> Vec<f64> {
        (0..self.yaw_count).map(|k| 360.0 * k as f64 / self.yaw_count as f64).collect()
    }

    fn reach_distance(&self) -> f64 {
        if self.indoor {
            self.reach_distance_indoor
        } else {
            self.reach_distance_outdoor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCandidate {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub score: f64,
    pub reachable: bool,
}

impl ViewCandidate {
    pub fn camera(&self, intrinsics: Intrinsics) -> CameraModel {
        CameraModel::look_from(intrinsics, self.position, self.yaw_deg, self.pitch_deg).expect("valid intrinsics")
    }
}

/// Position, yaw and pitch of an already captured view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl Pose {
    pub fn of(camera: &CameraModel) -> Self {
        Self { position: camera.center(), yaw_deg: camera.yaw_deg(), pitch_deg: camera.pitch_deg() }
    }
}

/// Altitude of plane H_θ: a camera `safe_distance` from the highest
/// uncovered point and pitched by θ (downward positive) sees it at the image
/// center. `None` when nothing is uncovered.
pub fn altitude_for_pitch(
    pitch_deg: f64,
    uncovered: &[Vec3],
    safe_distance: f64,
    min_altitude: Option<f64>,
) -> Option<f64> {
    let top = uncovered.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    if uncovered.is_empty() {
        return None;
    }
    let z = top + safe_distance * pitch_deg.to_radians().sin();
    Some(min_altitude.map_or(z, |m| z.max(m)))
}

/// Sum of projection ratios over the uncovered points the camera sees.
pub fn score_candidate(camera: &CameraModel, uncovered: &[&IsoPoint], occluders: &Bvh, occlusion: Occlusion) -> f64 {
    uncovered.iter().map(|p| projection_ratio(&p.position, &p.normal, camera, occluders, occlusion)).sum()
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Reachable iff some existing view is within the angle limit in both pitch
/// and yaw and within the distance limit. With no existing views every
/// candidate is reachable.
pub fn is_reachable(c: &ViewCandidate, existing: &[Pose], params: &NbvParams) -> bool {
    existing.is_empty()
        || existing.iter().any(|v| {
            (c.pitch_deg - v.pitch_deg).abs() <= params.reach_angle_deg
                && angle_diff(c.yaw_deg, v.yaw_deg) <= params.reach_angle_deg
                && (c.position - v.position).norm() <= params.reach_distance()
        })
}

/// Grid of candidate xy positions over `[min, max]`.
pub fn candidate_positions(min: Vec2, max: Vec2, step: f64) -> Vec<Vec2> {
    let nx = ((max.x - min.x) / step).floor() as usize + 1;
    let ny = ((max.y - min.y) / step).floor() as usize + 1;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Vec2::new(min.x + i as f64 * step, min.y + j as f64 * step));
        }
    }
    out
}

/// Scored candidates on one plane, in generation order (position-major, then
/// yaw). Positions closer than the safe distance to the surface are skipped.
pub fn score_plane(
    pitch_deg: f64,
    altitude: f64,
    positions: &[Vec2],
    uncovered: &[&IsoPoint],
    surface: &Bvh,
    intrinsics: Intrinsics,
    existing: &[Pose],
    params: &NbvParams,
    occlusion: Occlusion,
) -> Vec<ViewCandidate> {
    let mut out = Vec::new();
    for xy in positions {
        let position = Vec3::new(xy.x, xy.y, altitude);
        if surface.any_within(&position, params.safe_distance) {
            continue;
        }
        for yaw in params.yaws() {
            let mut c = ViewCandidate { position, yaw_deg: yaw, pitch_deg, score: 0.0, reachable: false };
            c.score = score_candidate(&c.camera(intrinsics), uncovered, surface, occlusion);
            c.reachable = is_reachable(&c, existing, params);
            out.push(c);
        }
    }
    out
}

/// Picks up to `nbv_count` reachable, positive-score candidates by descending
/// score (ties keep generation order), suppressing any within `nms_radius`
/// of an already picked one.
pub fn select_nbvs(candidates: &[ViewCandidate], params: &NbvParams) -> Vec<ViewCandidate> {
    let mut order: Vec<usize> =
        (0..candidates.len()).filter(|&k| candidates[k].reachable && candidates[k].score > 0.0).collect();
    order.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score).then(a.cmp(&b)));
    let mut picked: Vec<ViewCandidate> = Vec::new();
    for k in order {
        if picked.len() >= params.nbv_count {
            break;
        }
        let c = candidates[k];
        if picked.iter().all(|p| (p.position - c.position).norm() >= params.nms_radius) {
            picked.push(c);
        }
    }
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneResult {
    pub pitch_deg: f64,
    pub altitude: f64,
    pub nbvs: Vec<ViewCandidate>,
    pub candidates_scored: usize,
}

impl PlaneResult {
    pub fn best_score(&self) -> f64 {
        self.nbvs.first().map_or(0.0, |c| c.score)
    }
}

/// Plane whose best NBV scores highest; ties go to smaller |θ|, then
/// smaller θ. `None` when every plane is empty.
pub fn choose_pitch_plane(planes: &[PlaneResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, p) in planes.iter().enumerate() {
        if p.nbvs.is_empty() {
            continue;
        }
        best = match best {
            None => Some(k),
            Some(b) => {
                let q = &planes[b];
                let better = p.best_score() > q.best_score()
                    || (p.best_score() == q.best_score()
                        && (p.pitch_deg.abs() < q.pitch_deg.abs()
                            || (p.pitch_deg.abs() == q.pitch_deg.abs() && p.pitch_deg < q.pitch_deg)));
                Some(if better { k } else { b })
            }
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum NbvOutcome {
    Selected { pitch_deg: f64, altitude: f64, nbvs: Vec<ViewCandidate> },
    FullyCovered,
    NoReachableNbv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbvPlan {
    pub outcome: NbvOutcome,
    pub planes: Vec<PlaneResult>,
}

/// Full plane-by-plane search. Candidate positions span the surface bounds
/// inflated by twice the safe distance.
pub fn plan_nbvs(
    coverage: &CoverageMap,
    surface: &Bvh,
    intrinsics: Intrinsics,
    existing: &[Pose],
    params: &NbvParams,
    occlusion: Occlusion,
) -> Result<NbvPlan, PlanningError> {
    params.validate()?;
    let uncovered: Vec<&IsoPoint> = coverage.uncovered().collect();
    if uncovered.is_empty() {
        return Ok(NbvPlan { outcome: NbvOutcome::FullyCovered, planes: Vec::new() });
    }
    let heights: Vec<Vec3> = uncovered.iter().map(|p| p.position).collect();
    let (lo, hi) = surface.bounds().unwrap_or((heights[0], heights[0]));
    let pad = 2.0 * params.safe_distance;
    let positions =
        candidate_positions(Vec2::new(lo.x - pad, lo.y - pad), Vec2::new(hi.x + pad, hi.y + pad), params.grid_step);
    let planes: Vec<PlaneResult> = params
        .pitches()
        .into_iter()
        .map(|pitch| {
            let altitude =
                altitude_for_pitch(pitch, &heights, params.safe_distance, params.min_altitude).expect("non-empty");
            let scored =
                score_plane(pitch, altitude, &positions, &uncovered, surface, intrinsics, existing, params, occlusion);
            PlaneResult {
                pitch_deg: pitch,
                altitude,
                candidates_scored: scored.len(),
                nbvs: select_nbvs(&scored, params),
            }
        })
        .collect();
    let outcome = match choose_pitch_plane(&planes) {
        Some(k) => NbvOutcome::Selected {
            pitch_deg: planes[k].pitch_deg,
            altitude: planes[k].altitude,
            nbvs: planes[k].nbvs.clone(),
        },
        None => NbvOutcome::NoReachableNbv,
    };
    Ok(NbvPlan { outcome, planes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(x: f64, score: f64) -> ViewCandidate {
        ViewCandidate { position: Vec3::new(x, 0.0, 0.0), yaw_deg: 0.0, pitch_deg: 0.0, score, reachable: true }
    }

    #[test]
    fn altitude_cases() {
        let pts = [Vec3::new(0.0, 0.0, 3.0), Vec3::new(1.0, 0.0, 7.0)];
        assert_eq!(altitude_for_pitch(0.0, &pts, 5.0, None), Some(7.0));
        assert!((altitude_for_pitch(30.0, &pts, 5.0, None).unwrap() - 9.5).abs() < 1e-12);
        assert!((altitude_for_pitch(-30.0, &pts, 5.0, None).unwrap() - 4.5).abs() < 1e-12);
        assert_eq!(altitude_for_pitch(-30.0, &pts, 5.0, Some(6.0)), Some(6.0));
        assert_eq!(altitude_for_pitch(10.0, &[], 5.0, None), None);
    }

    #[test]
    fn pitch_grid() {
        let p = NbvParams::default().pitches();
        assert_eq!(p.len(), 12);
        assert_eq!(p[0], -30.0);
        assert!((p[11] - 30.0).abs() < 1e-12);
        assert_eq!(NbvParams::default().yaws(), vec![0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]);
    }

    #[test]
    fn reachability() {
        let params = NbvParams::default();
        let v = Pose { position: Vec3::zeros(), yaw_deg: 350.0, pitch_deg: 30.0 };
        let mut c =
            ViewCandidate { position: Vec3::zeros(), yaw_deg: 350.0, pitch_deg: 30.0, score: 1.0, reachable: false };
        assert!(is_reachable(&c, &[v], &params));
        c.yaw_deg = 5.0;
        assert!(is_reachable(&c, &[v], &params));
        c.yaw_deg = 10.0;
        assert!(!is_reachable(&c, &[v], &params));
        c.yaw_deg = 350.0;
        c.position.x = 2.9;
        assert!(is_reachable(&c, &[v], &params));
        c.position.x = 3.1;
        assert!(!is_reachable(&c, &[v], &params));
        let indoor = NbvParams { indoor: true, ..params };
        c.position.x = 0.6;
        assert!(!is_reachable(&c, &[v], &indoor));
    }

    #[test]
    fn nms_and_order() {
        let params = NbvParams::default();
        let c = [cand(0.0, 5.0), cand(0.5, 4.0), cand(3.0, 3.0), cand(9.0, 0.0)];
        let s = select_nbvs(&c, &params);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].score, 5.0);
        assert_eq!(s[1].score, 3.0);
        let mut unreachable = c;
        unreachable[0].reachable = false;
        assert_eq!(select_nbvs(&unreachable, &params)[0].score, 4.0);
    }

    #[test]
    fn plane_tie_breaks() {
        let plane = |pitch: f64, score: f64| PlaneResult {
            pitch_deg: pitch,
            altitude: 0.0,
            nbvs: if score > 0.0 { vec![cand(0.0, score)] } else { vec![] },
            candidates_scored: 1,
        };
        assert_eq!(choose_pitch_plane(&[plane(10.0, 1.0), plane(-10.0, 1.0)]), Some(1));
        assert_eq!(choose_pitch_plane(&[plane(20.0, 1.0), plane(-10.0, 1.0)]), Some(1));
        assert_eq!(choose_pitch_plane(&[plane(20.0, 2.0), plane(-10.0, 1.0)]), Some(0));
        assert_eq!(choose_pitch_plane(&[plane(20.0, 0.0), plane(-10.0, 0.0)]), None);
    }
}
