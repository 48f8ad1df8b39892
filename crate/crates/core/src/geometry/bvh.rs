//! Bounding volume hierarchy over a triangle soup: ray casting, occlusion
//! queries and exact closest-point queries.

use super::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    /// Entry distance of the ray, if it hits within `[t_min, t_max]`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for axis in 0..3 {
            let t1 = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let t2 = (self.max[axis] - origin[axis]) * inv_dir[axis];
            let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            // NaN (0 * inf) keeps the current bounds.
            if a > lo {
                lo = a;
            }
            if b < hi {
                hi = b;
            }
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for axis in 0..3 {
            let v = p[axis];
            if v < self.min[axis] {
                d += (self.min[axis] - v).powi(2);
            } else if v > self.max[axis] {
                d += (v - self.max[axis]).powi(2);
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`. Inner: index of the right child (left child is `self + 1`).
    start_or_right: u32,
    /// Number of triangles for leaves, zero for inner nodes.
    count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
    pub triangle: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Bvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut bvh = Self { order: (0..triangles.len() as u32).collect(), triangles, nodes: Vec::new() };
        if !bvh.triangles.is_empty() {
            let centroids: Vec<Vec3> = bvh.triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
            let n = bvh.order.len();
            bvh.build(&centroids, 0, n);
        }
        bvh
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    fn build(&mut self, centroids: &[Vec3], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &i in &self.order[start..end] {
            for v in &self.triangles[i as usize] {
                bounds.grow(v);
            }
            cbounds.grow(&centroids[i as usize]);
        }
        let index = self.nodes.len();
        self.nodes.push(Node { bounds, start_or_right: start as u32, count: (end - start) as u32 });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let extent = cbounds.max - cbounds.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent[axis] <= 0.0 {
            return index;
        }
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |a, b| {
            centroids[*a as usize][axis].total_cmp(&centroids[*b as usize][axis]).then(a.cmp(b))
        });
        self.build(centroids, start, mid);
        let right = self.build(centroids, mid, end);
        self.nodes[index].start_or_right = right as u32;
        self.nodes[index].count = 0;
        index
    }

    /// Closest intersection along `origin + t * dir` with `t` in `[t_min, t_max]`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        self.traverse_ray(origin, dir, t_min, t_max, |tri, t| {
            let better = match best {
                None => true,
                Some(b) => t < b.t || (t == b.t && tri < b.triangle),
            };
            if better {
                best = Some(RayHit { t, triangle: tri });
            }
            Step::Shrink
        });
        best
    }

    /// True when any triangle is hit with `t` in `[t_min, t_max]`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> bool {
        let mut hit = false;
        self.traverse_ray(origin, dir, t_min, t_max, |_, _| {
            hit = true;
            Step::Stop
        });
        hit
    }

    /// Like [`Bvh::occluded`], but only hits accepted by `blocks` count.
    pub fn occluded_by(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
        mut blocks: impl FnMut(usize, f64) -> bool,
    ) -> bool {
        let mut hit = false;
        self.traverse_ray(origin, dir, t_min, t_max, |tri, t| {
            if blocks(tri, t) {
                hit = true;
                Step::Stop
            } else {
                Step::Continue
            }
        });
        hit
    }

    /// Walks the tree; `on_hit` decides whether to stop, shrink the ray's
    /// upper bound to the hit, or keep the bound as is.
    fn traverse_ray<F: FnMut(usize, f64) -> Step>(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
        mut on_hit: F,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut t_far = t_max;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.ray_entry(origin, &inv_dir, t_min, t_far).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start_or_right as usize;
                for &tri in &self.order[s..s + node.count as usize] {
                    if let Some(t) = ray_triangle(origin, dir, &self.triangles[tri as usize]) {
                        if t >= t_min && t <= t_far {
                            match on_hit(tri as usize, t) {
                                Step::Stop => return,
                                Step::Shrink => t_far = t,
                                Step::Continue => {}
                            }
                        }
                    }
                }
            } else {
                let left = ni + 1;
                let right = node.start_or_right as usize;
                let dl = self.nodes[left].bounds.ray_entry(origin, &inv_dir, t_min, t_far);
                let dr = self.nodes[right].bounds.ray_entry(origin, &inv_dir, t_min, t_far);
                match (dl, dr) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            stack.push(right);
                            stack.push(left);
                        } else {
                            stack.push(left);
                            stack.push(right);
                        }
                    }
                    (Some(_), None) => stack.push(left),
                    (None, Some(_)) => stack.push(right),
                    (None, None) => {}
                }
            }
        }
    }

    /// Exact closest point on the soup.
    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestPoint> {
        self.closest_within(p, f64::INFINITY)
    }

    /// Closest point if it lies within `max_distance`.
    pub fn closest_within(&self, p: &Vec3, max_distance: f64) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best_d2 = max_distance * max_distance;
        let mut best: Option<ClosestPoint> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_sq(p) > best_d2 {
                continue;
            }
            if node.count > 0 {
                let s = node.start_or_right as usize;
                for &tri in &self.order[s..s + node.count as usize] {
                    let q = closest_point_on_triangle(p, &self.triangles[tri as usize]);
                    let d2 = (q - p).norm_squared();
                    let better = d2 < best_d2 || (d2 == best_d2 && best.is_none_or(|b| (tri as usize) < b.triangle));
                    if better {
                        best_d2 = d2;
                        best = Some(ClosestPoint { point: q, distance: d2.sqrt(), triangle: tri as usize });
                    }
                }
            } else {
                let left = ni + 1;
                let right = node.start_or_right as usize;
                let dl = self.nodes[left].bounds.distance_sq(p);
                let dr = self.nodes[right].bounds.distance_sq(p);
                if dl <= dr {
                    stack.push(right);
                    stack.push(left);
                } else {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }

    /// True when some triangle is strictly closer than `radius`.
    pub fn any_within(&self, p: &Vec3, radius: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_sq(p) >= r2 {
                continue;
            }
            if node.count > 0 {
                let s = node.start_or_right as usize;
                for &tri in &self.order[s..s + node.count as usize] {
                    let q = closest_point_on_triangle(p, &self.triangles[tri as usize]);
                    if (q - p).norm_squared() < r2 {
                        return true;
                    }
                }
            } else {
                stack.push(node.start_or_right as usize);
                stack.push(ni + 1);
            }
        }
        false
    }

    /// Axis-aligned bounds of the whole soup.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        self.nodes.first().map(|n| (n.bounds.min, n.bounds.max))
    }
}

/// Moller-Trumbore, two-sided. Returns the ray parameter of the hit.
pub(crate) fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qvec) * inv_det)
}

enum Step {
    Stop,
    Shrink,
    Continue,
}

/// Closest point on a triangle (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
