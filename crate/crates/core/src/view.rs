//! A calibrated view with its mesh, support clusters, linear system and the
//! current per-slot inverse depths.

use crate::geometry::{CameraModel, InverseDepth, Vec3, DEGENERATE_AREA_EPS};
use crate::linear_mvs::DepthSystem;
use crate::meshing::{SupportClusters, TriangleLocator, ViewMesh};

#[derive(Debug, Clone)]
pub struct ViewFrame {
    pub id: usize,
    pub camera: CameraModel,
    pub mesh: ViewMesh,
    pub support: SupportClusters,
    pub system: DepthSystem,
    /// Per-slot inverse depth; NaN where unsolved.
    pub depths: Vec<f64>,
    /// Per-triangle confidence; zero for unsupported triangles.
    pub confidence: Vec<f64>,
}

impl ViewFrame {
    /// True when the triangle is supported and all three depths are usable.
    pub fn is_solved(&self, t: usize) -> bool {
        self.support.is_supported(t)
            && self.mesh.triangles[t].iter().all(|&s| self.depths[s].is_finite() && self.depths[s] > 0.0)
    }

    pub fn world_triangle(&self, t: usize) -> Option<[Vec3; 3]> {
        if !self.is_solved(t) {
            return None;
        }
        let tri = self.mesh.triangles[t];
        let mut out = [Vec3::zeros(); 3];
        for k in 0..3 {
            out[k] = self.camera.unproject(&self.mesh.vertices[tri[k]], InverseDepth(self.depths[tri[k]])).ok()?;
        }
        Some(out)
    }

    /// World triangles with unit normals facing this camera, for every
    /// solved, non-degenerate triangle.
    pub fn world_triangles(&self) -> Vec<Option<WorldTriangle>> {
        let center = self.camera.center();
        (0..self.mesh.num_triangles())
            .map(|t| {
                let v = self.world_triangle(t)?;
                WorldTriangle::new(v, &center)
            })
            .collect()
    }

    pub fn locator(&self) -> TriangleLocator {
        self.mesh.locator()
    }
}

/// World-space triangle with cached centroid and camera-facing unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldTriangle {
    pub vertices: [Vec3; 3],
    pub centroid: Vec3,
    pub normal: Vec3,
}

impl WorldTriangle {
    /// `None` for degenerate triangles.
    pub fn new(vertices: [Vec3; 3], facing: &Vec3) -> Option<Self> {
        let cross = (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0]));
        let len = cross.norm();
        if !(0.5 * len > DEGENERATE_AREA_EPS) {
            return None;
        }
        let centroid = (vertices[0] + vertices[1] + vertices[2]) / 3.0;
        let mut normal = cross / len;
        if normal.dot(&(facing - centroid)) < 0.0 {
            normal = -normal;
        }
        Some(Self { vertices, centroid, normal })
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.vertices[1] - self.vertices[0]).cross(&(self.vertices[2] - self.vertices[0])).norm()
    }
}
