use std::collections::{HashMap, HashSet};

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::Segmentation;
use crate::geometry::{barycentric_of, signed_area2, Vec2};

/// Two triangles sharing an edge. `pairs` holds the slots that sit at the same
/// pixel, as `[slot in triangles[0], slot in triangles[1]]`; `opposite` holds
/// the slot facing the shared edge in each triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjacencyRecord {
    pub triangles: [usize; 2],
    pub pairs: [[usize; 2]; 2],
    pub opposite: [usize; 2],
}

/// Triangle mesh in pixel space with split vertices: triangle `t` owns slots
/// `3t`, `3t + 1`, `3t + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMesh {
    pub width: usize,
    pub height: usize,
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub region: Vec<u32>,
    pub color: Vec<[f64; 3]>,
    pub adjacency: Vec<AdjacencyRecord>,
    /// Regions dropped because a boundary loop had fewer than three vertices.
    pub skipped_regions: usize,
}

impl ViewMesh {
    pub fn num_slots(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_pixels(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].map(|s| self.vertices[s])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * signed_area2(&self.triangle_pixels(t)).abs()
    }

    pub fn triangle_of_slot(slot: usize) -> usize {
        slot / 3
    }

    /// Adjacency record indices touching each triangle.
    pub fn records_per_triangle(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.triangles.len()];
        for (i, r) in self.adjacency.iter().enumerate() {
            out[r.triangles[0]].push(i);
            out[r.triangles[1]].push(i);
        }
        out
    }

    pub fn locator(&self) -> TriangleLocator {
        TriangleLocator::new(self)
    }

    /// ASCII PLY with pixel coordinates (z = 0) and a per-face region id.
    pub fn write_ply(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        use crate::ply::{PlyFormat, PlyMesh, ScalarKind};
        let mut ply = PlyMesh::new();
        ply.comments.push("view mesh in pixel coordinates".into());
        ply.vertex_props =
            vec![("x".into(), ScalarKind::Float), ("y".into(), ScalarKind::Float), ("z".into(), ScalarKind::Float)];
        ply.vertices = self.vertices.iter().map(|v| vec![v.x, v.y, 0.0]).collect();
        ply.face_props = vec![("region".into(), ScalarKind::Int)];
        ply.faces = self
            .triangles
            .iter()
            .zip(&self.region)
            .map(|(t, r)| (t.iter().map(|&s| s as u32).collect(), vec![*r as f64]))
            .collect();
        ply.write(out, PlyFormat::Ascii)
    }
}

fn point_in_loops(p: &Vec2, loops: &[Vec<Vec2>]) -> bool {
    let mut inside = false;
    for l in loops {
        let n = l.len();
        for i in 0..n {
            let (a, b) = (l[i], l[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Constrained Delaunay triangulation of every region polygon. All region
/// boundaries are inserted as constraints into one triangulation of the image
/// rectangle; faces are then grouped by the constraint-bounded area they
/// fall in and attributed to the matching region.
pub fn triangulate(seg: &Segmentation) -> ViewMesh {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut points: Vec<Point2<f64>> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut seen_edges: HashSet<(usize, usize)> = HashSet::new();
    let mut skipped = vec![false; seg.regions.len()];
    for (r, region) in seg.regions.iter().enumerate() {
        if region.loops.is_empty() || region.loops.iter().any(|l| l.len() < 3) {
            skipped[r] = true;
            continue;
        }
        for l in &region.loops {
            let ids: Vec<usize> = l
                .iter()
                .map(|v| {
                    *index.entry((v.x.to_bits(), v.y.to_bits())).or_insert_with(|| {
                        points.push(Point2::new(v.x, v.y));
                        points.len() - 1
                    })
                })
                .collect();
            for i in 0..ids.len() {
                let (a, b) = (ids[i], ids[(i + 1) % ids.len()]);
                if a != b && seen_edges.insert((a.min(b), a.max(b))) {
                    edges.push([a, b]);
                }
            }
        }
    }

    let mut conflicts = 0usize;
    let cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        match ConstrainedDelaunayTriangulation::try_bulk_load_cdt(points.clone(), edges, |_| conflicts += 1) {
            Ok(c) => c,
            Err(_) => {
                return ViewMesh {
                    width: seg.width,
                    height: seg.height,
                    vertices: Vec::new(),
                    triangles: Vec::new(),
                    region: Vec::new(),
                    color: Vec::new(),
                    adjacency: Vec::new(),
                    skipped_regions: seg.regions.len(),
                }
            }
        };
    debug_assert_eq!(conflicts, 0, "region boundaries must not cross");

    // Flood fill faces across non-constraint edges.
    let nf = cdt.num_all_faces();
    let mut face_verts: Vec<Option<[usize; 3]>> = vec![None; nf];
    let mut face_links: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for face in cdt.inner_faces() {
        let fi = face.fix().index();
        face_verts[fi] = Some(face.vertices().map(|v| v.fix().index()));
        for e in face.adjacent_edges() {
            if e.is_constraint_edge() {
                continue;
            }
            if let Some(other) = e.rev().face().as_inner() {
                face_links[fi].push(other.fix().index());
            }
        }
    }
    let mut component = vec![usize::MAX; nf];
    let mut comp_region: Vec<Option<u32>> = Vec::new();
    for start in 0..nf {
        if face_verts[start].is_none() || component[start] != usize::MAX {
            continue;
        }
        let cid = comp_region.len();
        component[start] = cid;
        let mut stack = vec![start];
        while let Some(f) = stack.pop() {
            for &g in &face_links[f] {
                if component[g] == usize::MAX {
                    component[g] = cid;
                    stack.push(g);
                }
            }
        }
        let v = face_verts[start].unwrap();
        let c = (0..3).map(|k| Vec2::new(points[v[k]].x, points[v[k]].y)).sum::<Vec2>() / 3.0;
        let px = (c.x.round().max(0.0) as usize).min(seg.width - 1);
        let py = (c.y.round().max(0.0) as usize).min(seg.height - 1);
        let guess = seg.label(px, py) as usize;
        let region = if !skipped[guess] && point_in_loops(&c, &seg.regions[guess].loops) {
            Some(guess as u32)
        } else {
            (0..seg.regions.len()).find(|&r| !skipped[r] && point_in_loops(&c, &seg.regions[r].loops)).map(|r| r as u32)
        };
        comp_region.push(region);
    }

    let mut faces: Vec<(u32, usize)> = (0..nf)
        .filter(|&f| face_verts[f].is_some())
        .filter_map(|f| comp_region[component[f]].map(|r| (r, f)))
        .collect();
    faces.sort();

    let mut vertices = Vec::with_capacity(faces.len() * 3);
    let mut triangles = Vec::with_capacity(faces.len());
    let mut region = Vec::with_capacity(faces.len());
    let mut color = Vec::with_capacity(faces.len());
    let mut tri_verts = Vec::with_capacity(faces.len());
    for (t, &(r, f)) in faces.iter().enumerate() {
        let v = face_verts[f].unwrap();
        for &vi in &v {
            vertices.push(Vec2::new(points[vi].x, points[vi].y));
        }
        triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
        region.push(r);
        color.push(seg.regions[r as usize].color);
        tri_verts.push(v);
    }

    let mut open: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut adjacency = Vec::new();
    for (t, v) in tri_verts.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (v[k], v[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            match open.remove(&key) {
                Some((t0, k0)) => adjacency.push(AdjacencyRecord {
                    triangles: [t0, t],
                    pairs: [[3 * t0 + k0, 3 * t + (k + 1) % 3], [3 * t0 + (k0 + 1) % 3, 3 * t + k]],
                    opposite: [3 * t0 + (k0 + 2) % 3, 3 * t + (k + 2) % 3],
                }),
                None => {
                    open.insert(key, (t, k));
                }
            }
        }
    }
    adjacency.sort_by_key(|r| (r.triangles, r.pairs));

    ViewMesh {
        width: seg.width,
        height: seg.height,
        vertices,
        triangles,
        region,
        color,
        adjacency,
        skipped_regions: skipped.iter().filter(|&&s| s).count(),
    }
}

/// Uniform-grid point location over a view mesh.
#[derive(Debug, Clone)]
pub struct TriangleLocator {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
    tris: Vec<[Vec2; 3]>,
}

impl TriangleLocator {
    const CELL: f64 = 8.0;
    const INSIDE_TOL: f64 = 1e-9;

    pub fn new(mesh: &ViewMesh) -> Self {
        let cell = Self::CELL;
        let cols = ((mesh.width as f64 + 1.0) / cell).ceil() as usize + 1;
        let rows = ((mesh.height as f64 + 1.0) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        let tris: Vec<[Vec2; 3]> = (0..mesh.num_triangles()).map(|t| mesh.triangle_pixels(t)).collect();
        for (t, tri) in tris.iter().enumerate() {
            let (lo, hi) = Self::bbox(tri);
            let (c0, r0) = Self::cell_of(lo, cell, cols, rows);
            let (c1, r1) = Self::cell_of(hi, cell, cols, rows);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * cols + c].push(t);
                }
            }
        }
        Self { cell, cols, rows, buckets, tris }
    }

    fn bbox(tri: &[Vec2; 3]) -> (Vec2, Vec2) {
        let lo = tri[0].inf(&tri[1]).inf(&tri[2]);
        let hi = tri[0].sup(&tri[1]).sup(&tri[2]);
        (lo, hi)
    }

    fn cell_of(p: Vec2, cell: f64, cols: usize, rows: usize) -> (usize, usize) {
        let c = (((p.x + 0.5) / cell).floor().max(0.0) as usize).min(cols - 1);
        let r = (((p.y + 0.5) / cell).floor().max(0.0) as usize).min(rows - 1);
        (c, r)
    }

    /// Lowest-index triangle containing `p` (boundaries inclusive).
    pub fn locate(&self, p: &Vec2) -> Option<usize> {
        self.locate_where(p, |_| true)
    }

    /// Lowest-index triangle containing `p` among those accepted by `keep`.
    pub fn locate_where(&self, p: &Vec2, keep: impl Fn(usize) -> bool) -> Option<usize> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return None;
        }
        let (c, r) = Self::cell_of(*p, self.cell, self.cols, self.rows);
        self.buckets[r * self.cols + c]
            .iter()
            .copied()
            .filter(|&t| keep(t))
            .filter(|&t| barycentric_of(&self.tris[t], p).is_ok_and(|b| b.is_inside(Self::INSIDE_TOL)))
            .min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{oversegment, RgbImage, SegmentParams};

    fn seg_from(w: usize, h: usize, labels: &[u32]) -> Segmentation {
        let img = RgbImage::from_fn(w, h, |x, y| {
            let l = labels[y * w + x] as f64;
            [(l * 0.37) % 1.0, (l * 0.61) % 1.0, (l * 0.13) % 1.0]
        });
        Segmentation::from_labels(&img, labels, 1.0)
    }

    fn check_invariants(mesh: &ViewMesh) {
        let mut used = vec![0; mesh.num_slots()];
        for t in &mesh.triangles {
            for &s in t {
                used[s] += 1;
            }
        }
        assert!(used.iter().all(|&u| u == 1));
        for r in &mesh.adjacency {
            assert_ne!(r.triangles[0], r.triangles[1]);
            for p in r.pairs {
                assert_eq!(p[0] / 3, r.triangles[0]);
                assert_eq!(p[1] / 3, r.triangles[1]);
                assert_eq!(mesh.vertices[p[0]], mesh.vertices[p[1]]);
            }
            assert_eq!(r.opposite[0] / 3, r.triangles[0]);
            assert_eq!(r.opposite[1] / 3, r.triangles[1]);
        }
        for t in 0..mesh.num_triangles() {
            assert!(signed_area2(&mesh.triangle_pixels(t)) > 0.0);
        }
    }

    /// Brute force: an edge is interior when exactly two triangles use the same
    /// pair of pixel positions.
    fn brute_interior_edges(mesh: &ViewMesh) -> usize {
        let mut count = 0;
        let n = mesh.num_triangles();
        for a in 0..n {
            for b in a + 1..n {
                let pa = mesh.triangle_pixels(a);
                let pb = mesh.triangle_pixels(b);
                let shared = pa.iter().filter(|p| pb.contains(p)).count();
                if shared == 2 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn one_square_region() {
        let mesh = triangulate(&seg_from(4, 4, &[0; 16]));
        assert_eq!(mesh.num_triangles(), 2);
        assert_eq!(mesh.num_slots(), 6);
        assert_eq!(mesh.adjacency.len(), 1);
        check_invariants(&mesh);
    }

    #[test]
    fn two_square_regions() {
        let labels: Vec<u32> = (0..32).map(|i| if i % 8 < 4 { 0 } else { 1 }).collect();
        let mesh = triangulate(&seg_from(8, 4, &labels));
        assert_eq!(mesh.num_triangles(), 4);
        assert_eq!(mesh.num_slots(), 12);
        check_invariants(&mesh);
        let cross =
            mesh.adjacency.iter().filter(|r| mesh.region[r.triangles[0]] != mesh.region[r.triangles[1]]).count();
        assert_eq!(cross, 1);
    }

    #[test]
    fn random_segmentations_have_consistent_adjacency_and_area() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..12 {
            let (w, h) = (rng.gen_range(8..40), rng.gen_range(8..40));
            let img = RgbImage::from_fn(w, h, |x, y| {
                let cell = ((x / 5) * 7 + (y / 4) * 3 + case) % 5;
                let v = cell as f64 / 5.0 + rng.gen_range(-0.02..0.02);
                [v, 0.5, 1.0 - v]
            });
            let seg = oversegment(&img, &SegmentParams { target_region_size: 20, ..Default::default() });
            let mesh = triangulate(&seg);
            check_invariants(&mesh);
            assert_eq!(mesh.skipped_regions, 0);
            assert_eq!(mesh.adjacency.len(), brute_interior_edges(&mesh));
            let total: f64 = (0..mesh.num_triangles()).map(|t| mesh.triangle_area(t)).sum();
            assert!((total - (w * h) as f64).abs() < 1e-6 * (w * h) as f64);
            // Per-region area matches the polygon area.
            for (r, reg) in seg.regions.iter().enumerate() {
                let poly: f64 = reg
                    .loops
                    .iter()
                    .map(|l| {
                        let n = l.len();
                        (0..n).map(|i| l[i].x * l[(i + 1) % n].y - l[(i + 1) % n].x * l[i].y).sum::<f64>() / 2.0
                    })
                    .sum::<f64>()
                    .abs();
                let tris: f64 = (0..mesh.num_triangles())
                    .filter(|&t| mesh.region[t] == r as u32)
                    .map(|t| mesh.triangle_area(t))
                    .sum();
                assert!((poly - tris).abs() <= 1e-6 * poly.max(1.0), "region {r}: {poly} vs {tris}");
            }
        }
    }

    #[test]
    fn regions_are_connected_through_adjacency() {
        let img = RgbImage::from_fn(48, 40, |x, y| {
            if (x as i64 - 20).pow(2) + (y as i64 - 18).pow(2) < 150 {
                [0.9, 0.2, 0.2]
            } else {
                [0.2, 0.2, 0.8]
            }
        });
        let seg = oversegment(&img, &SegmentParams { target_region_size: 64, ..Default::default() });
        let mesh = triangulate(&seg);
        let per = mesh.records_per_triangle();
        for r in 0..seg.regions.len() as u32 {
            let tris: Vec<usize> = (0..mesh.num_triangles()).filter(|&t| mesh.region[t] == r).collect();
            let mut seen = HashSet::from([tris[0]]);
            let mut stack = vec![tris[0]];
            while let Some(t) = stack.pop() {
                for &ri in &per[t] {
                    let rec = mesh.adjacency[ri];
                    let o = if rec.triangles[0] == t { rec.triangles[1] } else { rec.triangles[0] };
                    if mesh.region[o] == r && seen.insert(o) {
                        stack.push(o);
                    }
                }
            }
            assert_eq!(seen.len(), tris.len(), "region {r} split");
        }
    }

    #[test]
    fn delaunay_within_convex_polygons() {
        // Regions are rectangles, so every polygon vertex is visible.
        let labels: Vec<u32> = (0..30 * 20).map(|i| ((i % 30) / 10 + 3 * ((i / 30) / 7)) as u32).collect();
        let seg = seg_from(30, 20, &labels);
        let mesh = triangulate(&seg);
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_pixels(t);
            let reg = &seg.regions[mesh.region[t] as usize];
            for p in reg.loops.iter().flatten() {
                // In-circle determinant, positive when p is strictly inside.
                let m = [a - p, b - p, c - p];
                let det = m[0].norm_squared() * (m[1].x * m[2].y - m[2].x * m[1].y)
                    - m[1].norm_squared() * (m[0].x * m[2].y - m[2].x * m[0].y)
                    + m[2].norm_squared() * (m[0].x * m[1].y - m[1].x * m[0].y);
                assert!(det <= 1e-9, "vertex inside circumcircle of triangle {t}");
            }
        }
    }

    #[test]
    fn locator_matches_linear_scan() {
        let img = RgbImage::from_fn(40, 30, |x, y| [((x / 6 + y / 5) % 3) as f64 * 0.4, 0.3, 0.3]);
        let mesh = triangulate(&oversegment(&img, &SegmentParams { target_region_size: 30, ..Default::default() }));
        let loc = mesh.locator();
        for k in 0..500 {
            let p = Vec2::new((k * 37 % 400) as f64 / 10.0 - 0.5, (k * 53 % 300) as f64 / 10.0 - 0.5);
            let brute = (0..mesh.num_triangles())
                .find(|&t| barycentric_of(&mesh.triangle_pixels(t), &p).is_ok_and(|b| b.is_inside(1e-9)));
            assert_eq!(loc.locate(&p), brute);
        }
    }

    #[test]
    fn ply_export_lists_regions() {
        let mesh = triangulate(&seg_from(4, 4, &[0; 16]));
        let mut buf = Vec::new();
        mesh.write_ply(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0"));
        assert!(text.contains("element vertex 6"));
        assert!(text.contains("element face 2"));
        assert!(text.contains("property int region"));
    }
}
