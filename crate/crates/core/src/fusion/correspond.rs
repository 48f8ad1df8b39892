use std::collections::HashMap;

use crate::geometry::{angle_between, Vec3};
use crate::meshing::color_distance;
use crate::view::WorldTriangle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Maximum centroid distance, meters (exclusive).
    pub space: f64,
    /// Maximum normal angle, radians (exclusive).
    pub normal: f64,
    /// Maximum mean-color distance (exclusive).
    pub color: f64,
}

/// Spatial hash over candidate triangles keyed by centroid.
#[derive(Debug, Clone)]
pub struct CorrespondenceIndex {
    cell: f64,
    grid: HashMap<(i64, i64, i64), Vec<usize>>,
    items: Vec<(usize, WorldTriangle, [f64; 3])>,
}

impl CorrespondenceIndex {
    /// `items` are `(id, triangle, color)`; `cell` should be the search radius.
    pub fn new(items: Vec<(usize, WorldTriangle, [f64; 3])>, cell: f64) -> Self {
        let cell = if cell > 0.0 && cell.is_finite() { cell } else { 1.0 };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (k, (_, t, _)) in items.iter().enumerate() {
            grid.entry(Self::key(&t.centroid, cell)).or_default().push(k);
        }
        Self { cell, grid, items }
    }

    fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id_index: usize) -> &(usize, WorldTriangle, [f64; 3]) {
        &self.items[id_index]
    }

    fn nearby(&self, p: &Vec3, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let span = (radius / self.cell).ceil().max(1.0) as i64;
        let (cx, cy, cz) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -span..=span {
            for dy in -span..=span {
                for dz in -span..=span {
                    if let Some(v) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.into_iter()
    }
}

/// Nearest qualifying candidate by centroid distance; ties go to the lower id.
/// Returns the candidate's id.
pub fn find_corresponding(
    query: &WorldTriangle,
    color: &[f64; 3],
    index: &CorrespondenceIndex,
    th: &Thresholds,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for k in index.nearby(&query.centroid, th.space) {
        let (id, t, c) = &index.items[k];
        let d = (t.centroid - query.centroid).norm();
        if !(d < th.space)
            || !(angle_between(&t.normal, &query.normal) < th.normal)
            || !(color_distance(c, color) < th.color)
        {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && *id < bid),
        };
        if better {
            best = Some((d, *id));
        }
    }
    best.map(|b| b.1)
}

/// Median edge length over a set of triangles (0 when empty).
pub fn median_edge_length<'a>(tris: impl IntoIterator<Item = &'a WorldTriangle>) -> f64 {
    let mut e: Vec<f64> =
        tris.into_iter().flat_map(|t| (0..3).map(move |k| (t.vertices[(k + 1) % 3] - t.vertices[k]).norm())).collect();
    if e.is_empty() {
        return 0.0;
    }
    e.sort_by(f64::total_cmp);
    let n = e.len();
    if n % 2 == 1 {
        e[n / 2]
    } else {
        0.5 * (e[n / 2 - 1] + e[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tri(rng: &mut rand_chacha::ChaCha8Rng) -> WorldTriangle {
        let c = Vec3::new(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..2.0));
        let v = [0, 1, 2]
            .map(|_| c + Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.05..0.05)));
        WorldTriangle::new(v, &Vec3::new(2.5, 2.5, 10.0)).unwrap()
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let items: Vec<(usize, WorldTriangle, [f64; 3])> =
            (0..400).map(|i| (i, random_tri(&mut rng), [rng.gen_range(0.0..0.3), 0.5, 0.5])).collect();
        let th = Thresholds { space: 0.4, normal: 30f64.to_radians(), color: 0.15 };
        let index = CorrespondenceIndex::new(items.clone(), th.space);
        for _ in 0..300 {
            let q = random_tri(&mut rng);
            let qc = [rng.gen_range(0.0..0.3), 0.5, 0.5];
            let brute = items
                .iter()
                .filter(|(_, t, c)| {
                    (t.centroid - q.centroid).norm() < th.space
                        && angle_between(&t.normal, &q.normal) < th.normal
                        && color_distance(c, &qc) < th.color
                })
                .min_by(|a, b| {
                    (a.1.centroid - q.centroid)
                        .norm()
                        .total_cmp(&(b.1.centroid - q.centroid).norm())
                        .then(a.0.cmp(&b.0))
                })
                .map(|x| x.0);
            assert_eq!(find_corresponding(&q, &qc, &index, &th), brute);
        }
    }

    #[test]
    fn self_match_and_empty() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let t = random_tri(&mut rng);
        let th = Thresholds { space: 0.5, normal: 0.5, color: 0.15 };
        let index = CorrespondenceIndex::new(vec![(7, t, [0.2; 3])], 0.5);
        assert_eq!(find_corresponding(&t, &[0.2; 3], &index, &th), Some(7));
        let empty = CorrespondenceIndex::new(vec![], 0.5);
        assert_eq!(find_corresponding(&t, &[0.2; 3], &empty, &th), None);
    }

    #[test]
    fn median() {
        let t = WorldTriangle::new([Vec3::zeros(), Vec3::x(), Vec3::y()], &Vec3::z()).unwrap();
        let m = median_edge_length([&t]);
        assert_eq!(m, 1.0);
    }
}
