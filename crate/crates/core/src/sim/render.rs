use super::scene::Scene;
use crate::geometry::{CameraModel, Vec2, Vec3};
use crate::meshing::RgbImage;

pub const BACKGROUND: [f64; 3] = [0.62, 0.76, 0.95];

/// Fixed directional light used for flat shading.
fn light() -> Vec3 {
    Vec3::new(0.2, 0.45, 0.87).normalize()
}

/// Flat-shaded face color; distinct per axis-aligned orientation so adjacent
/// faces of a box segment apart.
pub fn shade(color: &[f64; 3], normal: &Vec3) -> [f64; 3] {
    let s = 0.25 + 0.375 * (1.0 + normal.dot(&light()));
    color.map(|c| (c * s).clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct RenderedView {
    pub image: RgbImage,
    /// Distance along the pixel ray to the first hit; NaN for background.
    pub depth: Vec<f64>,
    /// Scene triangle hit, `u32::MAX` for background.
    pub triangle: Vec<u32>,
}

impl RenderedView {
    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.depth[y * self.image.width() + x];
        d.is_finite().then_some(d)
    }

    /// Depth along the optical axis.
    pub fn z_depth_at(&self, camera: &CameraModel, x: usize, y: usize) -> Option<f64> {
        let r = self.depth_at(x, y)?;
        let ray = camera.ray_camera(&Vec2::new(x as f64, y as f64));
        Some(r / ray.norm())
    }

    pub fn num_foreground(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Ray casts every pixel center.
pub fn render_view(scene: &Scene, camera: &CameraModel) -> RenderedView {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let mut image = RgbImage::new(w, h, BACKGROUND);
    let mut depth = vec![f64::NAN; w * h];
    let mut triangle = vec![u32::MAX; w * h];
    let origin = camera.center();
    for y in 0..h {
        for x in 0..w {
            let dir = camera.ray_world(&Vec2::new(x as f64, y as f64));
            if let Some(hit) = scene.bvh.intersect(&origin, &dir, 1e-9, f64::INFINITY) {
                let k = y * w + x;
                depth[k] = hit.t;
                triangle[k] = hit.triangle as u32;
                image.set(x, y, shade(&scene.colors[hit.triangle], &scene.normal(hit.triangle)));
            }
        }
    }
    RenderedView { image, depth, triangle }
}
