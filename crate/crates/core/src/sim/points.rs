use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::geometry::{triangle_area, CameraModel, Vec2, Vec3};
use crate::linear_mvs::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointParams {
    /// Samples per m² of scene surface, before visibility culling.
    pub density: f64,
    /// Pixel noise standard deviation; observations stay within 3 px.
    pub pixel_noise: f64,
    /// Position noise standard deviation along the first observing ray, m.
    pub depth_noise: f64,
    /// A point needs two observing cameras at most this far apart.
    pub pairing_radius: Option<f64>,
}

impl Default for PointParams {
    fn default() -> Self {
        Self { density: 40.0, pixel_noise: 0.3, depth_noise: 0.005, pairing_radius: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    /// Noisy position.
    pub position: Vec3,
    pub true_position: Vec3,
    /// `(view, pixel)`.
    pub observations: Vec<(usize, Vec2)>,
    /// Scene triangle the sample came from.
    pub triangle: usize,
    /// Signed offset applied along the viewing ray, m.
    pub noise: f64,
}

const MAX_PIXEL_ERROR: f64 = 3.0;

/// True when the scene point `x` on triangle `t` is seen by `cam`.
pub fn sees(scene: &Scene, t: usize, x: &Vec3, cam: &CameraModel) -> bool {
    let Ok((px, _)) = cam.project(x) else {
        return false;
    };
    if !cam.contains_pixel(&px) {
        return false;
    }
    let to_cam = cam.center() - x;
    if !(scene.normal(t).dot(&to_cam) > 0.0) {
        return false;
    }
    let dist = to_cam.norm();
    !scene.bvh.occluded(x, &(to_cam / dist), 1e-7 * (1.0 + dist), dist * (1.0 - 1e-9))
}

/// Sparse structure-from-motion stand-in: uniform surface samples that at
/// least two cameras see, perturbed along the first observing ray, with
/// noisy pixel observations. Deterministic for a given seed; appending
/// cameras keeps every existing point and observation unchanged.
pub fn synth_scene_points(scene: &Scene, cameras: &[CameraModel], params: &PointParams, seed: u64) -> Vec<ScenePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(scene.triangles.len());
    let mut total = 0.0;
    for t in &scene.triangles {
        total += triangle_area(t);
        cumulative.push(total);
    }
    if total == 0.0 || !(params.density > 0.0) {
        return Vec::new();
    }
    let n = (params.density * total).ceil() as usize;
    let mut out = Vec::new();
    for i in 0..n {
        let u = rng.gen::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= u).min(scene.triangles.len() - 1);
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        let tri = &scene.triangles[t];
        let x = tri[0] + (tri[1] - tri[0]) * a + (tri[2] - tri[0]) * b;
        // Noise comes from a per-sample stream, drawn view by view, so
        // appending cameras leaves earlier draws untouched.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(i as u64 + 1);
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        let pixel_draws: Vec<Vec2> =
            (0..cameras.len()).map(|_| truncated_pixel_noise(&mut noise_rng, params.pixel_noise)).collect();

        let seen: Vec<usize> = (0..cameras.len()).filter(|&v| sees(scene, t, &x, &cameras[v])).collect();
        if seen.len() < 2 {
            continue;
        }
        if let Some(r) = params.pairing_radius {
            let paired = seen
                .iter()
                .enumerate()
                .any(|(i, &a)| seen[i + 1..].iter().any(|&b| (cameras[a].center() - cameras[b].center()).norm() <= r));
            if !paired {
                continue;
            }
        }
        let ray = (x - cameras[seen[0]].center()).normalize();
        let noise = z * params.depth_noise;
        let position = x + ray * noise;
        let mut observations = Vec::new();
        for &v in &seen {
            let Ok((px, _)) = cameras[v].project(&position) else {
                continue;
            };
            let obs = px + pixel_draws[v];
            if cameras[v].contains_pixel(&obs) {
                observations.push((v, obs));
            }
        }
        if observations.len() >= 2 {
            out.push(ScenePoint { position, true_position: x, observations, triangle: t, noise });
        }
    }
    out
}

fn truncated_pixel_noise(rng: &mut ChaCha8Rng, sigma: f64) -> Vec2 {
    loop {
        let v = Vec2::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * sigma;
        if v.norm() <= MAX_PIXEL_ERROR {
            return v;
        }
    }
}

/// Observations of view `v`: observed pixel and the point's inverse depth.
pub fn observations_for_view(points: &[ScenePoint], v: usize, camera: &CameraModel) -> Vec<Observation> {
    points
        .iter()
        .filter_map(|p| {
            let (_, px) = p.observations.iter().find(|o| o.0 == v)?;
            let z = camera.to_camera(&p.position).z;
            (z > 0.0).then(|| Observation { pixel: *px, inverse_depth: 1.0 / z })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::scene::{build_scene, Primitive, SceneSpec};
    use super::*;
    use crate::geometry::Intrinsics;

    fn wall_and_cams() -> (Scene, Vec<CameraModel>) {
        let scene = build_scene(&SceneSpec {
            primitives: vec![Primitive::Box {
                min: Vec3::new(-5.0, 4.0, -3.0),
                max: Vec3::new(5.0, 5.0, 3.0),
                color: [0.5; 3],
            }],
            ground: None,
            ground_color: [0.0; 3],
            seed: 0,
        })
        .unwrap();
        let intr = Intrinsics::centered(60.0, 160, 96);
        let cams = (0..3)
            .map(|i| CameraModel::look_from(intr, Vec3::new(i as f64 * 0.3 - 0.3, 0.0, 0.0), 90.0, 0.0).unwrap())
            .collect();
        (scene, cams)
    }

    #[test]
    fn zero_noise_is_exact() {
        let (scene, cams) = wall_and_cams();
        let params = PointParams { density: 20.0, pixel_noise: 0.0, depth_noise: 0.0, pairing_radius: None };
        let pts = synth_scene_points(&scene, &cams, &params, 1);
        assert!(pts.len() > 100);
        for p in &pts {
            assert!(scene.bvh.closest_point(&p.position).unwrap().distance < 1e-12);
            for (v, px) in &p.observations {
                assert!((cams[*v].project(&p.position).unwrap().0 - px).norm() < 1e-12);
            }
            // Only the front face (y = 4) is visible.
            assert!((p.position.y - 4.0).abs() < 1e-12);
        }
        assert_eq!(pts, synth_scene_points(&scene, &cams, &params, 1));
    }

    #[test]
    fn appending_cameras_keeps_existing_observations() {
        let (scene, cams) = wall_and_cams();
        let params = PointParams { density: 20.0, ..Default::default() };
        let two = synth_scene_points(&scene, &cams[..2], &params, 5);
        let three = synth_scene_points(&scene, &cams, &params, 5);
        assert!(!two.is_empty());
        for p in &two {
            let q = three.iter().find(|q| q.true_position == p.true_position).unwrap();
            assert_eq!(q.position, p.position);
            assert_eq!(&q.observations[..p.observations.len()], &p.observations[..]);
        }
    }

    #[test]
    fn depth_noise_statistics() {
        let (scene, cams) = wall_and_cams();
        let params = PointParams { density: 400.0, pixel_noise: 1.0, depth_noise: 0.01, pairing_radius: None };
        let pts = synth_scene_points(&scene, &cams, &params, 2);
        assert!(pts.len() >= 10_000, "{}", pts.len());
        let mean = pts.iter().map(|p| (p.position.y - 4.0).abs()).sum::<f64>() / pts.len() as f64;
        assert!((0.006..=0.010).contains(&mean), "{mean}");
        for p in &pts {
            for (v, px) in &p.observations {
                assert!((cams[*v].project(&p.position).unwrap().0 - px).norm() <= 3.0);
            }
        }
    }

    #[test]
    fn occluded_regions_get_nothing() {
        let mut spec = SceneSpec::box_with_overhang();
        spec.primitives.truncate(1);
        spec.primitives.push(Primitive::Box {
            min: Vec3::new(-1.0, -6.0, 0.0),
            max: Vec3::new(1.0, -5.0, 1.0),
            color: [0.2; 3],
        });
        let scene = build_scene(&spec).unwrap();
        let intr = Intrinsics::centered(120.0, 160, 96);
        let cams: Vec<_> = [-0.2, 0.2]
            .iter()
            .map(|&x| CameraModel::look_at(intr, Vec3::new(x, -12.0, 0.5), Vec3::new(0.0, 0.0, 0.5)).unwrap())
            .collect();
        let pts = synth_scene_points(&scene, &cams, &PointParams { density: 50.0, ..Default::default() }, 3);
        assert!(!pts.is_empty());
        for p in &pts {
            // Nothing from the big box's back faces or from the part of its
            // front face hidden by the small box.
            assert!(p.true_position.y < -1.999);
            if (p.true_position.y + 2.0).abs() < 1e-9 {
                assert!(!(p.true_position.x.abs() < 0.8 && p.true_position.z < 0.8));
            }
        }
        let pair = PointParams { pairing_radius: Some(0.1), ..Default::default() };
        assert!(synth_scene_points(&scene, &cams, &pair, 3).is_empty());
    }
}
