use serde::{Deserialize, Serialize};

use crate::geometry::{Bvh, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box.
    Box { min: Vec3, max: Vec3, color: [f64; 3] },
    /// Overhanging slab; geometrically a box, kept distinct for audits.
    Slab { min: Vec3, max: Vec3, color: [f64; 3] },
    /// Walls over `min..max` (z up to the eaves at `max.z`) with a gabled
    /// roof whose ridge runs along x at `ridge_z`.
    Gabled { min: Vec3, max: Vec3, ridge_z: f64, color: [f64; 3], roof_color: [f64; 3] },
}

impl Primitive {
    fn extents_ok(&self) -> bool {
        let (min, max) = match self {
            Primitive::Box { min, max, .. } | Primitive::Slab { min, max, .. } | Primitive::Gabled { min, max, .. } => {
                (min, max)
            }
        };
        let ok = (0..3).all(|k| max[k] > min[k]);
        match self {
            Primitive::Gabled { ridge_z, max, .. } => ok && *ridge_z > max.z,
            _ => ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Square ground plane at z = 0 with this half-extent, if any.
    pub ground: Option<f64>,
    pub ground_color: [f64; 3],
    pub seed: u64,
}

impl SceneSpec {
    /// A box with a roof slab overhanging on every side.
    pub fn box_with_overhang() -> Self {
        Self {
            primitives: vec![
                Primitive::Box {
                    min: Vec3::new(-2.0, -2.0, 0.0),
                    max: Vec3::new(2.0, 2.0, 3.0),
                    color: [0.85, 0.7, 0.45],
                },
                Primitive::Slab {
                    min: Vec3::new(-3.5, -3.5, 3.0),
                    max: Vec3::new(3.5, 3.5, 3.5),
                    color: [0.15, 0.25, 0.82],
                },
            ],
            ground: None,
            ground_color: [0.4, 0.5, 0.35],
            seed: 7,
        }
    }

    pub fn unit_cube() -> Self {
        Self {
            primitives: vec![Primitive::Box {
                min: Vec3::zeros(),
                max: Vec3::new(1.0, 1.0, 1.0),
                color: [0.6, 0.6, 0.6],
            }],
            ground: None,
            ground_color: [0.5; 3],
            seed: 0,
        }
    }
}

/// Ground-truth triangle soup with per-triangle provenance.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub triangles: Vec<[Vec3; 3]>,
    pub colors: Vec<[f64; 3]>,
    /// Index into `SceneSpec::primitives`; `usize::MAX` for the ground.
    pub primitive: Vec<usize>,
    /// Globally unique planar face id.
    pub face: Vec<usize>,
    pub bvh: Bvh,
}

impl Scene {
    pub fn normal(&self, t: usize) -> Vec3 {
        crate::geometry::triangle_cross(&self.triangles[t]).normalize()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(crate::geometry::triangle_area).sum()
    }

    pub fn num_faces(&self) -> usize {
        self.face.iter().max().map_or(0, |m| m + 1)
    }

    pub fn face_area(&self, face: usize) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.face[t] == face)
            .map(|t| crate::geometry::triangle_area(&self.triangles[t]))
            .sum()
    }
}

#[derive(Default)]
struct Builder {
    tris: Vec<[Vec3; 3]>,
    colors: Vec<[f64; 3]>,
    primitive: Vec<usize>,
    face: Vec<usize>,
    next_face: usize,
}

impl Builder {
    /// Planar convex polygon, counter-clockwise seen from outside.
    fn polygon(&mut self, pts: &[Vec3], color: [f64; 3], prim: usize) {
        for k in 1..pts.len() - 1 {
            self.tris.push([pts[0], pts[k], pts[k + 1]]);
            self.colors.push(color);
            self.primitive.push(prim);
            self.face.push(self.next_face);
        }
        self.next_face += 1;
    }

    fn cuboid(&mut self, min: &Vec3, max: &Vec3, color: [f64; 3], prim: usize) {
        let c = |x: bool, y: bool, z: bool| {
            Vec3::new(if x { max.x } else { min.x }, if y { max.y } else { min.y }, if z { max.z } else { min.z })
        };
        let (f, t) = (false, true);
        self.polygon(&[c(f, f, f), c(f, t, f), c(t, t, f), c(t, f, f)], color, prim); // bottom
        self.polygon(&[c(f, f, t), c(t, f, t), c(t, t, t), c(f, t, t)], color, prim); // top
        self.polygon(&[c(f, f, f), c(t, f, f), c(t, f, t), c(f, f, t)], color, prim); // -y
        self.polygon(&[c(f, t, f), c(f, t, t), c(t, t, t), c(t, t, f)], color, prim); // +y
        self.polygon(&[c(f, f, f), c(f, f, t), c(f, t, t), c(f, t, f)], color, prim); // -x
        self.polygon(&[c(t, f, f), c(t, t, f), c(t, t, t), c(t, f, t)], color, prim);
        // +x
    }

    fn gabled(&mut self, min: &Vec3, max: &Vec3, ridge_z: f64, color: [f64; 3], roof: [f64; 3], prim: usize) {
        let ym = 0.5 * (min.y + max.y);
        let p = Vec3::new;
        self.polygon(
            &[p(min.x, min.y, min.z), p(min.x, max.y, min.z), p(max.x, max.y, min.z), p(max.x, min.y, min.z)],
            color,
            prim,
        );
        self.polygon(
            &[p(min.x, min.y, min.z), p(max.x, min.y, min.z), p(max.x, min.y, max.z), p(min.x, min.y, max.z)],
            color,
            prim,
        );
        self.polygon(
            &[p(min.x, max.y, min.z), p(min.x, max.y, max.z), p(max.x, max.y, max.z), p(max.x, max.y, min.z)],
            color,
            prim,
        );
        self.polygon(
            &[
                p(min.x, min.y, min.z),
                p(min.x, min.y, max.z),
                p(min.x, ym, ridge_z),
                p(min.x, max.y, max.z),
                p(min.x, max.y, min.z),
            ],
            color,
            prim,
        );
        self.polygon(
            &[
                p(max.x, min.y, min.z),
                p(max.x, max.y, min.z),
                p(max.x, max.y, max.z),
                p(max.x, ym, ridge_z),
                p(max.x, min.y, max.z),
            ],
            color,
            prim,
        );
        self.polygon(
            &[p(min.x, min.y, max.z), p(max.x, min.y, max.z), p(max.x, ym, ridge_z), p(min.x, ym, ridge_z)],
            roof,
            prim,
        );
        self.polygon(
            &[p(min.x, max.y, max.z), p(min.x, ym, ridge_z), p(max.x, ym, ridge_z), p(max.x, max.y, max.z)],
            roof,
            prim,
        );
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("primitive {0} has a non-positive extent")]
pub struct SceneError(pub usize);

/// Triangulates every primitive; overlapping primitives are kept as a union
/// of triangle soups.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene, SceneError> {
    let mut b = Builder::default();
    for (k, prim) in spec.primitives.iter().enumerate() {
        if !prim.extents_ok() {
            return Err(SceneError(k));
        }
        match prim {
            Primitive::Box { min, max, color } | Primitive::Slab { min, max, color } => b.cuboid(min, max, *color, k),
            Primitive::Gabled { min, max, ridge_z, color, roof_color } => {
                b.gabled(min, max, *ridge_z, *color, *roof_color, k)
            }
        }
    }
    if let Some(h) = spec.ground {
        let p = |x: f64, y: f64| Vec3::new(x, y, 0.0);
        b.polygon(&[p(-h, -h), p(h, -h), p(h, h), p(-h, h)], spec.ground_color, usize::MAX);
    }
    let bvh = Bvh::new(b.tris.clone());
    Ok(Scene { triangles: b.tris, colors: b.colors, primitive: b.primitive, face: b.face, bvh })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prim_centroid(s: &Scene, k: usize) -> Vec3 {
        let ts: Vec<_> = (0..s.triangles.len()).filter(|&t| s.primitive[t] == k).collect();
        let mut c = Vec3::zeros();
        for &t in &ts {
            c += s.triangles[t].iter().sum::<Vec3>();
        }
        c / (3 * ts.len()) as f64
    }

    #[test]
    fn unit_cube() {
        let s = build_scene(&SceneSpec::unit_cube()).unwrap();
        assert_eq!(s.triangles.len(), 12);
        assert!((s.area() - 6.0).abs() < 1e-12);
        assert_eq!(s.num_faces(), 6);
    }

    #[test]
    fn cube_plus_gabled_counts_and_normals() {
        let mut spec = SceneSpec::unit_cube();
        spec.primitives.push(Primitive::Gabled {
            min: Vec3::new(3.0, 0.0, 0.0),
            max: Vec3::new(5.0, 2.0, 1.0),
            ridge_z: 2.0,
            color: [0.5; 3],
            roof_color: [0.2; 3],
        });
        let s = build_scene(&spec).unwrap();
        assert_eq!(s.triangles.len(), 12 + 16);
        for t in 0..s.triangles.len() {
            let c = crate::geometry::triangle_centroid(&s.triangles[t]);
            assert!(s.normal(t).dot(&(c - prim_centroid(&s, s.primitive[t]))) > 0.0, "triangle {t}");
        }
        let o = build_scene(&SceneSpec::box_with_overhang()).unwrap();
        for t in 0..o.triangles.len() {
            let c = crate::geometry::triangle_centroid(&o.triangles[t]);
            assert!(o.normal(t).dot(&(c - prim_centroid(&o, o.primitive[t]))) > 0.0);
        }
    }

    #[test]
    fn rejects_flat_primitive() {
        let spec = SceneSpec {
            primitives: vec![Primitive::Box { min: Vec3::zeros(), max: Vec3::new(1.0, 0.0, 1.0), color: [0.0; 3] }],
            ground: Some(5.0),
            ground_color: [0.0; 3],
            seed: 0,
        };
        assert_eq!(build_scene(&spec).unwrap_err(), SceneError(0));
    }
}
