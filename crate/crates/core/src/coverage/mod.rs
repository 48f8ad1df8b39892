//! Iso-point sampling on the fused surface and covered/uncovered/ignored
//! classification from projection ratios and view spans.

mod sample;

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusedSurface;
use crate::geometry::{angle_between, Bvh, CameraModel, Vec3};
use crate::ply::{xyz_rgb_props, PlyFormat, PlyMesh};

pub use sample::{sample_iso_points, SurfaceSample};

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("disk radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("invalid coverage parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageParams {
    /// Poisson disk radius, meters.
    pub r_disk: f64,
    /// Projection ratio (px²/m²) above which a view counts as good.
    pub gamma_min: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    /// Density proxy at or above which a point is covered outright.
    pub signal_threshold: f64,
    /// Confidence-weighted centroid count within `r_disk` that maps to a
    /// signal of 1.
    pub signal_reference_count: f64,
    /// Minimum ray offset for occlusion tests, meters. The effective offset
    /// is `max(occlusion_bias, r_disk / 2)`.
    pub occlusion_bias: f64,
    /// Hits closer than this along the point's normal, on triangles within
    /// 30° of parallel, are treated as the same surface rather than an
    /// occluder. Overlapping per-view copies in the fused soup would
    /// otherwise hide each other. Zero disables.
    pub surface_thickness: f64,
    pub seed: u64,
}

impl Default for CoverageParams {
    fn default() -> Self {
        Self {
            r_disk: 0.25,
            gamma_min: 0.25,
            theta_min_deg: 2.0,
            theta_max_deg: 30.0,
            signal_threshold: 0.8,
            signal_reference_count: 24.0,
            occlusion_bias: 1e-3,
            surface_thickness: 0.1,
            seed: 0,
        }
    }
}

impl CoverageParams {
    pub fn validate(&self) -> Result<(), CoverageError> {
        if !(self.r_disk > 0.0) || !self.r_disk.is_finite() {
            return Err(CoverageError::InvalidRadius(self.r_disk));
        }
        if !(self.theta_min_deg <= self.theta_max_deg)
            || !(self.signal_reference_count > 0.0)
            || !(self.gamma_min >= 0.0)
            || !(self.surface_thickness >= 0.0)
        {
            return Err(CoverageError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn occlusion(&self) -> Occlusion {
        Occlusion { bias: self.occlusion_bias.max(0.5 * self.r_disk), thickness: self.surface_thickness }
    }
}

/// How a ray from a surface point toward a camera is tested for blockers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    /// Ray offset at both ends, meters.
    pub bias: f64,
    /// Same-surface tolerance along the normal, meters.
    pub thickness: f64,
}

impl Occlusion {
    /// Every hit beyond `bias` blocks.
    pub fn strict(bias: f64) -> Self {
        Self { bias, thickness: 0.0 }
    }
}

// cos 30°
const SAME_SURFACE_COS: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageLabel {
    Covered,
    Uncovered,
    Ignored,
}

impl CoverageLabel {
    /// Export color: green, red, blue.
    pub fn color(self) -> [u8; 3] {
        match self {
            CoverageLabel::Covered => [0, 200, 0],
            CoverageLabel::Uncovered => [220, 0, 0],
            CoverageLabel::Ignored => [0, 0, 220],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoPoint {
    pub position: Vec3,
    pub normal: Vec3,
    /// Disk area, m².
    pub area: f64,
    pub signal: f64,
    pub label: CoverageLabel,
    pub good_views: Vec<usize>,
    /// Fused-surface triangle the sample lies on.
    pub triangle: usize,
}

/// Projected pixel area of a small disk over its true area:
/// `fx·fy·(n·(C − X)) / Z³`. Zero when outside the image, behind the
/// camera, or back-facing. Occlusion is the caller's concern.
pub fn projection_ratio_unoccluded(position: &Vec3, normal: &Vec3, camera: &CameraModel) -> f64 {
    let Ok((px, _)) = camera.project(position) else {
        return 0.0;
    };
    if !camera.contains_pixel(&px) {
        return 0.0;
    }
    let facing = normal.dot(&(camera.center() - position));
    if !(facing > 0.0) {
        return 0.0;
    }
    let z = camera.to_camera(position).z;
    let k = camera.intrinsics();
    k.fx * k.fy * facing / (z * z * z)
}

/// Projection ratio with occlusion against `occluders`.
pub fn projection_ratio(
    position: &Vec3,
    normal: &Vec3,
    camera: &CameraModel,
    occluders: &Bvh,
    occlusion: Occlusion,
) -> f64 {
    let g = projection_ratio_unoccluded(position, normal, camera);
    if g == 0.0 {
        return 0.0;
    }
    let to_cam = camera.center() - position;
    let dist = to_cam.norm();
    let bias = occlusion.bias;
    if dist <= 2.0 * bias {
        return g;
    }
    let dir = to_cam / dist;
    let rise = dir.dot(normal);
    let blocked = occluders.occluded_by(position, &dir, bias, dist - bias, |tri, t| {
        if t * rise >= occlusion.thickness {
            return true;
        }
        let [a, b, c] = &occluders.triangles()[tri];
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        !(len > 0.0 && n.dot(normal).abs() >= SAME_SURFACE_COS * len)
    });
    if blocked {
        0.0
    } else {
        g
    }
}

/// Labels one point from its per-view projection ratios. Points seen by no
/// view are ignored; otherwise a strong density signal covers them; otherwise
/// they need two good views whose directions at the point span an angle in
/// `[θ_min, θ_max]`. Returns the label and the good-view indices.
pub fn classify(
    position: &Vec3,
    signal: f64,
    ratios: &[f64],
    centers: &[Vec3],
    params: &CoverageParams,
) -> (CoverageLabel, Vec<usize>) {
    let good: Vec<usize> = (0..ratios.len()).filter(|&v| ratios[v] > params.gamma_min).collect();
    if ratios.iter().all(|&g| !(g > 0.0)) {
        return (CoverageLabel::Ignored, good);
    }
    if signal >= params.signal_threshold {
        return (CoverageLabel::Covered, good);
    }
    if good.len() < 2 {
        return (CoverageLabel::Uncovered, good);
    }
    let (lo, hi) = (params.theta_min_deg.to_radians(), params.theta_max_deg.to_radians());
    let dirs: Vec<Vec3> = good.iter().map(|&v| centers[v] - position).collect();
    for a in 0..dirs.len() {
        for b in a + 1..dirs.len() {
            let angle = angle_between(&dirs[a], &dirs[b]);
            if angle >= lo && angle <= hi {
                return (CoverageLabel::Covered, good);
            }
        }
    }
    (CoverageLabel::Uncovered, good)
}

/// Confidence-weighted count of fused centroids within `r`, normalized.
struct SignalField {
    cell: f64,
    grid: HashMap<(i64, i64, i64), Vec<(Vec3, f64)>>,
}

impl SignalField {
    fn new(surface: &FusedSurface, r: f64) -> Self {
        let mut grid: HashMap<(i64, i64, i64), Vec<(Vec3, f64)>> = HashMap::new();
        for k in 0..surface.len() {
            let c = surface.centroid(k);
            grid.entry(Self::key(&c, r)).or_default().push((c, surface.confidence[k]));
        }
        Self { cell: r, grid }
    }

    fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    fn value(&self, p: &Vec3, reference: f64) -> f64 {
        let (x, y, z) = Self::key(p, self.cell);
        let r2 = self.cell * self.cell;
        let mut sum = 0.0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(items) = self.grid.get(&(x + dx, y + dy, z + dz)) {
                        sum += items.iter().filter(|(c, _)| (c - p).norm_squared() < r2).map(|(_, g)| g).sum::<f64>();
                    }
                }
            }
        }
        sum / reference
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub covered: usize,
    pub uncovered: usize,
    pub ignored: usize,
    /// `covered / (covered + uncovered)`; absent when both are zero.
    pub fraction: Option<f64>,
}

impl CoverageSummary {
    pub fn from_points(points: &[IsoPoint]) -> Self {
        let count = |l| points.iter().filter(|p| p.label == l).count();
        let (covered, uncovered, ignored) =
            (count(CoverageLabel::Covered), count(CoverageLabel::Uncovered), count(CoverageLabel::Ignored));
        let seen = covered + uncovered;
        let fraction = (seen > 0).then(|| covered as f64 / seen as f64);
        Self { covered, uncovered, ignored, fraction }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub points: Vec<IsoPoint>,
    pub summary: CoverageSummary,
}

impl CoverageMap {
    pub fn uncovered(&self) -> impl Iterator<Item = &IsoPoint> {
        self.points.iter().filter(|p| p.label == CoverageLabel::Uncovered)
    }

    /// Point cloud colored by label.
    pub fn write_ply(&self, out: &mut impl Write, format: PlyFormat) -> io::Result<()> {
        let mut m = PlyMesh::new();
        m.vertex_props = xyz_rgb_props();
        for p in &self.points {
            let c = p.label.color();
            m.vertices.push(vec![p.position.x, p.position.y, p.position.z, c[0] as f64, c[1] as f64, c[2] as f64]);
        }
        m.write(out, format)
    }
}

/// Samples, scores and labels the fused surface against the captured views.
pub fn coverage_map(
    surface: &FusedSurface,
    views: &[CameraModel],
    params: &CoverageParams,
) -> Result<CoverageMap, CoverageError> {
    params.validate()?;
    let samples = sample_iso_points(&surface.triangles, params.r_disk, params.seed)?;
    let bvh = surface.bvh();
    let signal = SignalField::new(surface, params.r_disk);
    let centers: Vec<Vec3> = views.iter().map(|v| v.center()).collect();
    let area = std::f64::consts::PI * params.r_disk * params.r_disk;
    let occlusion = params.occlusion();
    let points: Vec<IsoPoint> = samples
        .iter()
        .map(|s| {
            let normal = surface.normal[s.triangle];
            let ratios: Vec<f64> =
                views.iter().map(|v| projection_ratio(&s.position, &normal, v, &bvh, occlusion)).collect();
            let sig = signal.value(&s.position, params.signal_reference_count);
            let (label, good_views) = classify(&s.position, sig, &ratios, &centers, params);
            IsoPoint { position: s.position, normal, area, signal: sig, label, good_views, triangle: s.triangle }
        })
        .collect();
    let summary = CoverageSummary::from_points(&points);
    Ok(CoverageMap { points, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use rand::{Rng, SeedableRng};

    fn cam_at(pos: Vec3, target: Vec3) -> CameraModel {
        CameraModel::look_at(Intrinsics::centered(120.0, 160, 96), pos, target).unwrap()
    }

    #[test]
    fn fronto_parallel_ratio_is_f2_over_z2() {
        for z in [2.0, 5.0, 11.0] {
            let cam = cam_at(Vec3::new(0.0, 0.0, z), Vec3::zeros());
            let g = projection_ratio_unoccluded(&Vec3::zeros(), &Vec3::z(), &cam);
            assert!((g - 120.0 * 120.0 / (z * z)).abs() < 1e-9 * g, "{g}");
        }
    }

    #[test]
    fn ratio_matches_projected_polygon_area() {
        // Off-axis, tilted tiny disk: compare with the projected area of a
        // fine polygon approximating it.
        let cam = cam_at(Vec3::new(1.0, -2.0, 6.0), Vec3::new(0.3, 0.1, 0.0));
        let p = Vec3::new(0.5, 0.4, 0.2);
        let n = Vec3::new(0.2, -0.3, 1.0).normalize();
        let u = n.cross(&Vec3::x()).normalize();
        let w = n.cross(&u);
        let (r, k) = (1e-4, 720);
        let pts: Vec<_> = (0..k)
            .map(|i| {
                let a = i as f64 / k as f64 * std::f64::consts::TAU;
                cam.project(&(p + (u * a.cos() + w * a.sin()) * r)).unwrap().0
            })
            .collect();
        let mut area = 0.0;
        for i in 0..k {
            let (a, b) = (pts[i], pts[(i + 1) % k]);
            area += a.x * b.y - a.y * b.x;
        }
        let poly_disk = 0.5 * k as f64 * (std::f64::consts::TAU / k as f64).sin() * r * r;
        let oracle = area.abs() / 2.0 / poly_disk;
        let g = projection_ratio_unoccluded(&p, &n, &cam);
        assert!((g - oracle).abs() < 1e-3 * oracle, "{g} vs {oracle}");
    }

    #[test]
    fn edge_on_back_facing_and_occluded() {
        let cam = cam_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros());
        assert_eq!(projection_ratio_unoccluded(&Vec3::zeros(), &Vec3::x(), &cam), 0.0);
        assert_eq!(projection_ratio_unoccluded(&Vec3::zeros(), &-Vec3::z(), &cam), 0.0);
        let wall = Bvh::new(vec![
            [Vec3::new(-1.0, -1.0, 2.0), Vec3::new(1.0, -1.0, 2.0), Vec3::new(1.0, 1.0, 2.0)],
            [Vec3::new(-1.0, -1.0, 2.0), Vec3::new(1.0, 1.0, 2.0), Vec3::new(-1.0, 1.0, 2.0)],
        ]);
        assert_eq!(projection_ratio(&Vec3::zeros(), &Vec3::z(), &cam, &wall, Occlusion::strict(1e-3)), 0.0);
        assert!(projection_ratio(&Vec3::zeros(), &Vec3::z(), &cam, &Bvh::default(), Occlusion::strict(1e-3)) > 0.0);
    }

    #[test]
    fn nearby_parallel_copy_is_same_surface() {
        let cam = cam_at(Vec3::new(3.0, 0.0, 5.0), Vec3::zeros());
        let sheet = |z: f64, tilt: f64| {
            Bvh::new(vec![
                [Vec3::new(-1.0, -1.0, z - tilt), Vec3::new(1.0, -1.0, z + tilt), Vec3::new(1.0, 1.0, z + tilt)],
                [Vec3::new(-1.0, -1.0, z - tilt), Vec3::new(1.0, 1.0, z + tilt), Vec3::new(-1.0, 1.0, z - tilt)],
            ])
        };
        let loose = Occlusion { bias: 1e-3, thickness: 0.1 };
        let p = Vec3::zeros();
        // 5 cm above, parallel: ignored with a thickness, blocks without.
        assert!(projection_ratio(&p, &Vec3::z(), &cam, &sheet(0.05, 0.0), loose) > 0.0);
        assert_eq!(projection_ratio(&p, &Vec3::z(), &cam, &sheet(0.05, 0.0), Occlusion::strict(1e-3)), 0.0);
        // Too far above, or steeply tilted: still an occluder.
        assert_eq!(projection_ratio(&p, &Vec3::z(), &cam, &sheet(0.3, 0.0), loose), 0.0);
        assert_eq!(projection_ratio(&p, &Vec3::z(), &cam, &sheet(0.05, 0.9), loose), 0.0);
    }

    fn at_angle(deg: f64) -> Vec<Vec3> {
        let a = deg.to_radians();
        vec![Vec3::new(0.0, 0.0, 5.0), Vec3::new(5.0 * a.sin(), 0.0, 5.0 * a.cos())]
    }

    #[test]
    fn classification_window() {
        let p = CoverageParams::default();
        let x = Vec3::zeros();
        assert_eq!(classify(&x, 0.0, &[10.0, 0.0], &at_angle(10.0), &p).0, CoverageLabel::Uncovered);
        assert_eq!(classify(&x, 0.0, &[10.0, 10.0], &at_angle(10.0), &p).0, CoverageLabel::Covered);
        assert_eq!(classify(&x, 0.0, &[10.0, 10.0], &at_angle(0.5), &p).0, CoverageLabel::Uncovered);
        assert_eq!(classify(&x, 0.0, &[10.0, 10.0], &at_angle(45.0), &p).0, CoverageLabel::Uncovered);
        assert_eq!(classify(&x, 0.0, &[0.0, 0.0], &at_angle(10.0), &p).0, CoverageLabel::Ignored);
        assert_eq!(classify(&x, 5.0, &[1.0, 0.0], &at_angle(10.0), &p).0, CoverageLabel::Covered);
        // Seen, but only weakly: not ignored.
        assert_eq!(classify(&x, 0.0, &[0.1, 0.1], &at_angle(10.0), &p).0, CoverageLabel::Uncovered);
    }

    #[test]
    fn adding_views_never_uncovers() {
        let p = CoverageParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let n = rng.gen_range(0..6);
            let centers: Vec<Vec3> = (0..n + 1)
                .map(|_| Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(1.0..5.0)))
                .collect();
            let ratios: Vec<f64> =
                (0..n + 1).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
            let sig = rng.gen_range(0.0..1.0);
            let (before, _) = classify(&Vec3::zeros(), sig, &ratios[..n], &centers[..n], &p);
            let (after, _) = classify(&Vec3::zeros(), sig, &ratios, &centers, &p);
            if before == CoverageLabel::Covered {
                assert_eq!(after, CoverageLabel::Covered);
            }
        }
    }

    #[test]
    fn empty_surface_and_no_views() {
        let m = coverage_map(&FusedSurface::default(), &[], &CoverageParams::default()).unwrap();
        assert!(m.points.is_empty());
        assert_eq!(m.summary.fraction, None);
        let s = FusedSurface {
            triangles: vec![[Vec3::zeros(), Vec3::x(), Vec3::y()]],
            normal: vec![Vec3::z()],
            source_view: vec![0],
            source_triangle: vec![0],
            confidence: vec![1.0],
            color: vec![[0.5; 3]],
        };
        let m = coverage_map(&s, &[], &CoverageParams { r_disk: 0.2, ..Default::default() }).unwrap();
        assert!(!m.points.is_empty());
        assert!(m.points.iter().all(|p| p.label == CoverageLabel::Ignored));
        assert_eq!(m.summary.ignored, m.points.len());
    }
}
