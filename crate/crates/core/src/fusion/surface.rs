use std::io::{self, Read, Write};

use crate::geometry::{Bvh, Vec3};
use crate::ply::{PlyFormat, PlyMesh, ScalarKind};
use crate::view::{ViewFrame, WorldTriangle};

/// Triangle soup from every view's solved triangles, with provenance.
#[derive(Debug, Clone, Default)]
pub struct FusedSurface {
    pub triangles: Vec<[Vec3; 3]>,
    /// Camera-facing unit normal of each triangle in its source view.
    pub normal: Vec<Vec3>,
    pub source_view: Vec<usize>,
    pub source_triangle: Vec<usize>,
    pub confidence: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

/// Below this area (m²) a world triangle is dropped from the merge.
const MIN_AREA: f64 = 1e-10;

/// Concatenates the solved, non-degenerate triangles of all views.
pub fn merge(views: &[ViewFrame]) -> FusedSurface {
    let mut s = FusedSurface::default();
    for (vi, v) in views.iter().enumerate() {
        let center = v.camera.center();
        for t in 0..v.mesh.num_triangles() {
            let Some(w) = v.world_triangle(t).and_then(|w| WorldTriangle::new(w, &center)) else {
                continue;
            };
            if w.area() <= MIN_AREA {
                continue;
            }
            s.triangles.push(w.vertices);
            s.normal.push(w.normal);
            s.source_view.push(vi);
            s.source_triangle.push(t);
            s.confidence.push(v.confidence.get(t).copied().unwrap_or(0.0));
            s.color.push(v.mesh.color[t]);
        }
    }
    s
}

fn to_u8(x: f64) -> f64 {
    (x.clamp(0.0, 1.0) * 255.0).round()
}

/// Green for Γ = 1 through red for Γ = 0.
pub fn confidence_color(gamma: f64) -> [f64; 3] {
    let g = gamma.clamp(0.0, 1.0);
    [1.0 - g, g, 0.0]
}

impl FusedSurface {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn centroid(&self, k: usize) -> Vec3 {
        let t = &self.triangles[k];
        (t[0] + t[1] + t[2]) / 3.0
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(crate::geometry::triangle_area).sum()
    }

    pub fn bvh(&self) -> Bvh {
        Bvh::new(self.triangles.clone())
    }

    fn ply(&self, colors: impl Fn(usize) -> [f64; 3]) -> PlyMesh {
        let mut m = PlyMesh::new();
        m.vertex_props = ["x", "y", "z"].iter().map(|n| (n.to_string(), ScalarKind::Double)).collect();
        m.face_props = vec![
            ("red".into(), ScalarKind::UChar),
            ("green".into(), ScalarKind::UChar),
            ("blue".into(), ScalarKind::UChar),
            ("confidence".into(), ScalarKind::Double),
            ("source_view".into(), ScalarKind::Int),
        ];
        for (k, t) in self.triangles.iter().enumerate() {
            let base = m.vertices.len() as u32;
            // Winding follows the stored normal so a reader can recover it.
            let flip = crate::geometry::triangle_cross(t).dot(&self.normal[k]) < 0.0;
            let order = if flip { [0, 2, 1] } else { [0, 1, 2] };
            m.vertices.extend(order.iter().map(|&i| vec![t[i].x, t[i].y, t[i].z]));
            let c = colors(k);
            m.faces.push((
                vec![base, base + 1, base + 2],
                vec![to_u8(c[0]), to_u8(c[1]), to_u8(c[2]), self.confidence[k], self.source_view[k] as f64],
            ));
        }
        m
    }

    /// Mesh with the source image colors per face.
    pub fn write_ply(&self, out: &mut impl Write, format: PlyFormat) -> io::Result<()> {
        self.ply(|k| self.color[k]).write(out, format)
    }

    /// Reads what [`FusedSurface::write_ply`] wrote. Normals come from the
    /// winding; colors are quantized to 8 bits; `source_triangle` is the
    /// face index.
    pub fn read_ply(input: impl Read) -> io::Result<Self> {
        let m = PlyMesh::read(input)?;
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let face_prop = |name: &str| m.face_props.iter().position(|(n, _)| n == name);
        let (x, y, z) = match (m.vertex_prop("x"), m.vertex_prop("y"), m.vertex_prop("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(bad("missing vertex coordinates")),
        };
        let rgb = [face_prop("red"), face_prop("green"), face_prop("blue")];
        let (conf, view) = (face_prop("confidence"), face_prop("source_view"));
        let mut s = FusedSurface::default();
        for (k, (idx, props)) in m.faces.iter().enumerate() {
            if idx.len() != 3 {
                return Err(bad("only triangles are supported"));
            }
            let mut tri = [Vec3::zeros(); 3];
            for (c, &i) in idx.iter().enumerate() {
                let v = m.vertices.get(i as usize).ok_or_else(|| bad("vertex index out of range"))?;
                tri[c] = Vec3::new(v[x], v[y], v[z]);
            }
            let cross = crate::geometry::triangle_cross(&tri);
            let len = cross.norm();
            if !(len > 0.0) {
                continue;
            }
            s.triangles.push(tri);
            s.normal.push(cross / len);
            s.source_view.push(view.map_or(0, |i| props[i] as usize));
            s.source_triangle.push(k);
            s.confidence.push(conf.map_or(0.0, |i| props[i]));
            s.color.push(rgb.map(|c| c.map_or(0.5, |i| props[i] / 255.0)));
        }
        Ok(s)
    }

    /// Mesh colored by confidence.
    pub fn write_confidence_ply(&self, out: &mut impl Write, format: PlyFormat) -> io::Result<()> {
        self.ply(|k| confidence_color(self.confidence[k])).write(out, format)
    }
}
