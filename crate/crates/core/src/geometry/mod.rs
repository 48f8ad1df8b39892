//! Pinhole cameras, barycentric coordinates and inverse-depth arithmetic.
//!
//! Conventions used throughout the crate:
//!
//! - World frame is right-handed with `+z` up.
//! - Camera frame has `x` right, `y` down and `z` along the optical axis.
//! - Pixel `(u, v)` has its center at integer coordinates, so the image
//!   domain is `[-0.5, width - 0.5) x [-0.5, height - 0.5)`.
//! - Inverse depth is `1 / Z` with `Z` measured along the optical axis. A plane
//!   in the world is then an affine function of pixel coordinates, which is
//!   what makes barycentric interpolation of inverse depth exact.
//! - Pitch is positive when the camera looks down, yaw is the heading of the
//!   optical axis measured counter-clockwise from `+x`. Both are degrees at the
//!   API boundary.

mod bvh;
mod camera_json;

pub use bvh::{Bvh, ClosestPoint, RayHit};
pub use camera_json::{load_cameras, save_cameras, CameraJson};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points with camera-frame `Z` at or below this are treated as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-6;
/// Minimum |signed area| (px^2) of a triangle used for barycentric solves.
pub const DEGENERATE_AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid inverse depth {0}")]
    InvalidInverseDepth(f64),
    #[error("degenerate triangle (signed area {0})")]
    DegenerateTriangle(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// Focal lengths and principal point in pixels, image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square pixels with the principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Self {
        Self { fx: focal, fy: focal, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0, width, height }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidCamera(format!("bad intrinsics {self:?}")))
        }
    }
}

/// Calibrated pinhole camera with a world-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Intrinsics,
    rotation: Mat3,
    translation: Vec3,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        let err = (rotation.transpose() * rotation - Mat3::identity()).amax();
        if !(err < 1e-9) || rotation.determinant() <= 0.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "rotation is not a proper orthonormal matrix (|RtR - I| = {err:e})"
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::InvalidCamera("non-finite translation".into()));
        }
        Ok(Self { intrinsics, rotation, translation })
    }

    /// Camera at `position` looking along `yaw_deg`/`pitch_deg` with zero roll.
    pub fn look_from(
        intrinsics: Intrinsics,
        position: Vec3,
        yaw_deg: f64,
        pitch_deg: f64,
    ) -> Result<Self, GeometryError> {
        let rotation = rotation_from_yaw_pitch(yaw_deg, pitch_deg);
        Self::new(intrinsics, rotation, -(rotation * position))
    }

    /// Camera at `position` whose optical axis passes through `target`.
    pub fn look_at(intrinsics: Intrinsics, position: Vec3, target: Vec3) -> Result<Self, GeometryError> {
        let dir = target - position;
        let yaw = dir.y.atan2(dir.x).to_degrees();
        let pitch = (-dir.z).atan2(dir.x.hypot(dir.y)).to_degrees();
        Self::look_from(intrinsics, position, yaw, pitch)
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit optical axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn pitch_deg(&self) -> f64 {
        let f = self.forward();
        (-f.z).clamp(-1.0, 1.0).asin().to_degrees()
    }

    pub fn yaw_deg(&self) -> f64 {
        let f = self.forward();
        f.y.atan2(f.x).to_degrees()
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    /// Pixel and inverse depth of a world point.
    pub fn project(&self, world: &Vec3) -> Result<(Vec2, InverseDepth), GeometryError> {
        let p = self.to_camera(world);
        if p.z <= BEHIND_CAMERA_EPS {
            return Err(GeometryError::BehindCamera(p.z));
        }
        let k = &self.intrinsics;
        let px = Vec2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        Ok((px, InverseDepth(1.0 / p.z)))
    }

    /// World point seen at `pixel` with inverse depth `d`.
    pub fn unproject(&self, pixel: &Vec2, d: InverseDepth) -> Result<Vec3, GeometryError> {
        if !(d.0 > 0.0) || !d.0.is_finite() {
            return Err(GeometryError::InvalidInverseDepth(d.0));
        }
        let z = 1.0 / d.0;
        let cam = self.ray_camera(pixel) * z;
        Ok(self.rotation.transpose() * (cam - self.translation))
    }

    /// Camera-frame ray through `pixel`, scaled so that its `z` component is 1.
    pub fn ray_camera(&self, pixel: &Vec2) -> Vec3 {
        let k = &self.intrinsics;
        Vec3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0)
    }

    /// World-frame ray direction through `pixel` (unit length).
    pub fn ray_world(&self, pixel: &Vec2) -> Vec3 {
        (self.rotation.transpose() * self.ray_camera(pixel)).normalize()
    }

    pub fn contains_pixel(&self, pixel: &Vec2) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.intrinsics.width as f64 - 0.5
            && pixel.y < self.intrinsics.height as f64 - 0.5
    }
}

/// World-to-camera rotation for a zero-roll camera.
pub fn rotation_from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Mat3 {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let forward = Vec3::new(cp * cy, cp * sy, -sp);
    let right = Vec3::new(sy, -cy, 0.0);
    let down = forward.cross(&right);
    Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Inverse depth `1/Z` (1/m).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct InverseDepth(pub f64);

impl InverseDepth {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0 > 0.0 && self.0.is_finite()
    }
}

/// Affine weights of a point with respect to a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barycentric(pub [f64; 3]);

impl Barycentric {
    pub fn weights(&self) -> [f64; 3] {
        self.0
    }

    pub fn is_inside(&self, tol: f64) -> bool {
        self.0.iter().all(|w| *w >= -tol)
    }

    pub fn apply<T>(&self, values: [T; 3]) -> T
    where
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Copy,
    {
        values[0] * self.0[0] + values[1] * self.0[1] + values[2] * self.0[2]
    }
}

/// Twice the signed area of a 2D triangle.
pub fn signed_area2(tri: &[Vec2; 3]) -> f64 {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    e1.x * e2.y - e1.y * e2.x
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn barycentric_of(tri: &[Vec2; 3], p: &Vec2) -> Result<Barycentric, GeometryError> {
    let area2 = signed_area2(tri);
    if (area2 * 0.5).abs() <= DEGENERATE_AREA_EPS {
        return Err(GeometryError::DegenerateTriangle(area2 * 0.5));
    }
    let w0 = cross2(tri[1] - p, tri[2] - p) / area2;
    let w1 = cross2(tri[2] - p, tri[0] - p) / area2;
    Ok(Barycentric([w0, w1, 1.0 - w0 - w1]))
}

pub fn interp_inverse_depth(b: &Barycentric, d1: InverseDepth, d2: InverseDepth, d3: InverseDepth) -> InverseDepth {
    let w = b.0;
    InverseDepth(w[0] * d1.0 + w[1] * d2.0 + w[2] * d3.0)
}

/// Unnormalized face normal `(b - a) x (c - a)`.
pub fn triangle_cross(tri: &[Vec3; 3]) -> Vec3 {
    (tri[1] - tri[0]).cross(&(tri[2] - tri[0]))
}

pub fn triangle_area(tri: &[Vec3; 3]) -> f64 {
    0.5 * triangle_cross(tri).norm()
}

pub fn triangle_centroid(tri: &[Vec3; 3]) -> Vec3 {
    (tri[0] + tri[1] + tri[2]) / 3.0
}

/// Angle between two vectors in radians, robust near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simple_camera() -> CameraModel {
        let k = Intrinsics { fx: 100.0, fy: 100.0, cx: 50.0, cy: 50.0, width: 101, height: 101 };
        CameraModel::new(k, Mat3::identity(), Vec3::zeros()).unwrap()
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> CameraModel {
        let k = Intrinsics { fx: 120.0, fy: 110.0, cx: 80.0, cy: 48.0, width: 160, height: 96 };
        let pos = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..5.0));
        CameraModel::look_from(k, pos, rng.gen_range(-180.0..180.0), rng.gen_range(-60.0..60.0)).unwrap()
    }

    #[test]
    fn project_on_axis_and_off_axis() {
        let cam = simple_camera();
        let (px, d) = cam.project(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(px, Vec2::new(50.0, 50.0));
        assert_eq!(d.0, 0.5);
        let (px, d) = cam.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(px, Vec2::new(100.0, 50.0));
        assert_eq!(d.0, 0.5);
        assert_eq!(cam.unproject(&Vec2::new(100.0, 50.0), InverseDepth(0.5)).unwrap(), Vec3::new(1.0, 0.0, 2.0));
        assert_eq!(cam.unproject(&Vec2::new(50.0, 50.0), InverseDepth(0.5)).unwrap(), Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn project_rejects_points_behind() {
        let cam = simple_camera();
        assert!(matches!(cam.project(&Vec3::new(0.0, 0.0, 0.0)), Err(GeometryError::BehindCamera(_))));
        assert!(matches!(cam.project(&Vec3::new(0.0, 0.0, -1.0)), Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn unproject_rejects_bad_depth() {
        let cam = simple_camera();
        let px = Vec2::new(3.0, 4.0);
        assert!(matches!(cam.unproject(&px, InverseDepth(0.0)), Err(GeometryError::InvalidInverseDepth(_))));
        assert!(cam.unproject(&px, InverseDepth(-1.0)).is_err());
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let cam = random_camera(&mut rng);
            let px = Vec2::new(rng.gen_range(0.0..160.0), rng.gen_range(0.0..96.0));
            let d = InverseDepth(rng.gen_range(0.05..2.0));
            let world = cam.unproject(&px, d).unwrap();
            let (px2, d2) = cam.project(&world).unwrap();
            assert!((px2 - px).norm() < 1e-9);
            assert!((d2.0 - d.0).abs() < 1e-9);
            let back = cam.unproject(&px2, d2).unwrap();
            assert!((back - world).norm() < 1e-9 * world.norm().max(1.0));
        }
    }

    #[test]
    fn yaw_pitch_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let cam = random_camera(&mut rng);
            assert!((cam.rotation().transpose() * cam.rotation() - Mat3::identity()).amax() < 1e-9);
            let rebuilt = rotation_from_yaw_pitch(cam.yaw_deg(), cam.pitch_deg());
            assert!((rebuilt - cam.rotation()).amax() < 1e-9);
        }
    }

    #[test]
    fn pitch_is_positive_looking_down() {
        let k = Intrinsics::centered(100.0, 160, 96);
        let cam = CameraModel::look_from(k, Vec3::new(0.0, 0.0, 10.0), 90.0, 30.0).unwrap();
        assert_relative_eq!(cam.pitch_deg(), 30.0, epsilon = 1e-12);
        assert_relative_eq!(cam.yaw_deg(), 90.0, epsilon = 1e-12);
        assert!(cam.forward().z < 0.0);
        assert!((cam.center() - Vec3::new(0.0, 0.0, 10.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_invalid_cameras() {
        let k = Intrinsics { fx: -1.0, fy: 1.0, cx: 1.0, cy: 1.0, width: 4, height: 4 };
        assert!(CameraModel::new(k, Mat3::identity(), Vec3::zeros()).is_err());
        let k = Intrinsics::centered(10.0, 4, 4);
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(CameraModel::new(k, reflect, Vec3::zeros()).is_err());
        assert!(CameraModel::new(k, Mat3::identity() * 2.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn barycentric_special_points() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(1.0, 3.0)];
        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        let b = barycentric_of(&tri, &centroid).unwrap();
        for w in b.0 {
            assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
        let b = barycentric_of(&tri, &tri[0]).unwrap();
        assert_eq!(b.0, [1.0, 0.0, 0.0]);
        let flat = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        assert!(matches!(barycentric_of(&flat, &centroid), Err(GeometryError::DegenerateTriangle(_))));
    }

    #[test]
    fn barycentric_reconstructs_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let tri = [0, 1, 2].map(|_| Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)));
            if (signed_area2(&tri) * 0.5).abs() < 1.0 {
                continue;
            }
            let mut w = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let p = tri[0] * w[0] + tri[1] * w[1] + tri[2] * w[2];
            let b = barycentric_of(&tri, &p).unwrap();
            let rec = b.apply(tri);
            assert!((rec - p).norm() < 1e-10);
            assert!((b.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..3 {
                assert!((b.0[k] - w[k]).abs() < 1e-9);
            }
            assert!(b.is_inside(1e-12));
        }
    }

    #[test]
    fn interpolation_basics() {
        let half = InverseDepth(0.5);
        let b = Barycentric([0.2, 0.3, 0.5]);
        assert_relative_eq!(interp_inverse_depth(&b, half, half, half).0, 0.5, epsilon = 1e-15);
        let b = Barycentric([1.0, 0.0, 0.0]);
        let d = interp_inverse_depth(&b, InverseDepth(0.2), InverseDepth(0.9), InverseDepth(0.9));
        assert_eq!(d.0, 0.2);
    }

    #[test]
    fn interpolation_is_linear_in_each_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let b = Barycentric([rng.gen(), rng.gen(), rng.gen()]);
            let d = [InverseDepth(rng.gen()), InverseDepth(rng.gen()), InverseDepth(rng.gen())];
            let delta = rng.gen_range(-1.0..1.0);
            let f0 = interp_inverse_depth(&b, d[0], d[1], d[2]).0;
            let f1 = interp_inverse_depth(&b, InverseDepth(d[0].0 + delta), d[1], d[2]).0;
            assert!((f1 - f0 - b.0[0] * delta).abs() < 1e-14);
        }
    }

    /// Ray-cast oracle: inverse depth interpolated across a triangle whose
    /// vertices lie on a world plane equals the inverse depth of the plane
    /// along each interior pixel ray.
    #[test]
    fn interpolation_exact_on_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cam = random_camera(&mut rng);
        let normal = Vec3::new(0.3, -0.2, 0.9).normalize();
        let point_on_plane = cam.center() + cam.forward() * 6.0;
        let plane_hit = |px: &Vec2| -> f64 {
            let dir_cam = cam.ray_camera(px);
            let dir = cam.rotation().transpose() * dir_cam;
            let t = normal.dot(&(point_on_plane - cam.center())) / normal.dot(&dir);
            // `dir` has unit z in the camera frame, so t is the optical depth.
            1.0 / t
        };
        let tri = [Vec2::new(10.0, 10.0), Vec2::new(140.0, 20.0), Vec2::new(70.0, 90.0)];
        let d = tri.map(|p| InverseDepth(plane_hit(&p)));
        for _ in 0..100 {
            let mut w = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let p = tri[0] * w[0] + tri[1] * w[1] + tri[2] * w[2];
            let b = barycentric_of(&tri, &p).unwrap();
            let interp = interp_inverse_depth(&b, d[0], d[1], d[2]).0;
            assert!((interp - plane_hit(&p)).abs() < 1e-6);
        }
    }
}
