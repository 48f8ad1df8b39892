use super::{color_distance, ViewMesh};
use crate::geometry::Vec2;

/// Connected components of triangles that are reachable from a scene-point
/// observation. Unsupported triangles have no component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportClusters {
    pub component: Vec<Option<u32>>,
    pub count: usize,
}

impl SupportClusters {
    pub fn is_supported(&self, t: usize) -> bool {
        self.component[t].is_some()
    }

    pub fn num_supported(&self) -> usize {
        self.component.iter().filter(|c| c.is_some()).count()
    }
}

/// Flood fill from every triangle containing a scene-point pixel. With a
/// `link_threshold`, only adjacency records whose two triangles differ in mean
/// color by less than the threshold are traversed, so a supported surface does
/// not leak into unrelated neighbors (sky, background) through shared edges.
pub fn cluster_regions(mesh: &ViewMesh, scene_point_pixels: &[Vec2], link_threshold: Option<f64>) -> SupportClusters {
    let n = mesh.num_triangles();
    let locator = mesh.locator();
    let mut seeded = vec![false; n];
    for p in scene_point_pixels {
        if let Some(t) = locator.locate(p) {
            seeded[t] = true;
        }
    }
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &mesh.adjacency {
        let [a, b] = r.triangles;
        let linked = link_threshold.is_none_or(|tau| color_distance(&mesh.color[a], &mesh.color[b]) < tau);
        if linked {
            links[a].push(b);
            links[b].push(a);
        }
    }
    let mut component = vec![None; n];
    let mut count = 0u32;
    for start in 0..n {
        if !seeded[start] || component[start].is_some() {
            continue;
        }
        component[start] = Some(count);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for &o in &links[t] {
                if component[o].is_none() {
                    component[o] = Some(count);
                    stack.push(o);
                }
            }
        }
        count += 1;
    }
    SupportClusters { component, count: count as usize }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{triangulate, RgbImage, Segmentation};

    fn two_islands() -> ViewMesh {
        // Two red islands separated by a blue column.
        let img =
            RgbImage::from_fn(30, 10, |x, _| if (10..20).contains(&x) { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] });
        let labels: Vec<u32> = (0..300).map(|i| ((i % 30) / 10) as u32).collect();
        triangulate(&Segmentation::from_labels(&img, &labels, 1.0))
    }

    #[test]
    fn no_points_means_no_support() {
        let mesh = two_islands();
        let c = cluster_regions(&mesh, &[], Some(0.08));
        assert_eq!(c.count, 0);
        assert_eq!(c.num_supported(), 0);
    }

    #[test]
    fn full_support() {
        let mesh = two_islands();
        let centroids: Vec<Vec2> =
            (0..mesh.num_triangles()).map(|t| mesh.triangle_pixels(t).iter().sum::<Vec2>() / 3.0).collect();
        let c = cluster_regions(&mesh, &centroids, Some(0.08));
        assert_eq!(c.num_supported(), mesh.num_triangles());
        // One component per island (regions are not color-linked).
        assert_eq!(c.count, 3);
        for t in 0..mesh.num_triangles() {
            assert_eq!(c.component[t], Some(mesh.region[t]));
        }
        let all = cluster_regions(&mesh, &centroids, None);
        assert_eq!(all.count, 1);
    }

    #[test]
    fn left_points_leave_right_island_unsupported() {
        let mesh = two_islands();
        let c = cluster_regions(&mesh, &[Vec2::new(3.0, 4.0), Vec2::new(7.5, 2.0)], Some(0.08));
        for t in 0..mesh.num_triangles() {
            assert_eq!(c.is_supported(t), mesh.region[t] == 0, "triangle {t}");
        }
    }
}
