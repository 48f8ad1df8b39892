use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CoverageError;
use crate::geometry::{triangle_area, Vec3};

/// One accepted surface sample, before labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub triangle: usize,
}

/// Hash grid with cell `r/√3`, so each cell holds at most one sample.
struct DiskGrid {
    cell: f64,
    r2: f64,
    reach: i64,
    cells: HashMap<(i64, i64, i64), usize>,
}

impl DiskGrid {
    fn new(r: f64) -> Self {
        let cell = r / 3f64.sqrt();
        Self { cell, r2: r * r, reach: (r / cell).ceil() as i64, cells: HashMap::new() }
    }

    fn key(&self, p: &Vec3) -> (i64, i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64)
    }

    fn free(&self, p: &Vec3, samples: &[SurfaceSample]) -> bool {
        let (x, y, z) = self.key(p);
        let r = self.reach;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if let Some(&k) = self.cells.get(&(x + dx, y + dy, z + dz)) {
                        if (samples[k].position - p).norm_squared() < self.r2 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn try_insert(&mut self, s: SurfaceSample, samples: &mut Vec<SurfaceSample>) -> bool {
        if !self.free(&s.position, samples) {
            return false;
        }
        self.cells.insert(self.key(&s.position), samples.len());
        samples.push(s);
        true
    }
}

/// Poisson-disk samples on a triangle soup: area-weighted dart throwing,
/// then a deterministic fill pass over a barycentric lattice on every
/// triangle (lattice spacing ≤ `r`) so that no surface point is farther than
/// about `2r` from a sample.
pub fn sample_iso_points(triangles: &[[Vec3; 3]], r: f64, seed: u64) -> Result<Vec<SurfaceSample>, CoverageError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(CoverageError::InvalidRadius(r));
    }
    let mut samples = Vec::new();
    if triangles.is_empty() {
        return Ok(samples);
    }
    let mut cumulative = Vec::with_capacity(triangles.len());
    let mut total = 0.0;
    for t in triangles {
        total += triangle_area(t);
        cumulative.push(total);
    }
    let mut grid = DiskGrid::new(r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if total > 0.0 {
        let darts = ((total / (r * r)) * 8.0).ceil().min(5e6) as usize;
        for _ in 0..darts {
            let u = rng.gen::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= u).min(triangles.len() - 1);
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let t = &triangles[k];
            let p = t[0] + (t[1] - t[0]) * a + (t[2] - t[0]) * b;
            grid.try_insert(SurfaceSample { position: p, triangle: k }, &mut samples);
        }
    }
    for (k, t) in triangles.iter().enumerate() {
        let longest = (0..3).map(|i| (t[(i + 1) % 3] - t[i]).norm()).fold(0.0, f64::max);
        let n = ((longest / r).ceil() as usize).max(1);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                let p = t[0] + (t[1] - t[0]) * a + (t[2] - t[0]) * b;
                grid.try_insert(SurfaceSample { position: p, triangle: k }, &mut samples);
            }
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[Vec3; 3]> {
        let (a, b, c, d) = (Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y());
        vec![[a, b, c], [a, c, d]]
    }

    fn min_pairwise(s: &[SurfaceSample]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                m = m.min((s[i].position - s[j].position).norm());
            }
        }
        m
    }

    #[test]
    fn unit_square_counts() {
        let s = sample_iso_points(&square(), 0.1, 1).unwrap();
        assert!((25..=100).contains(&s.len()), "{}", s.len());
        assert!(min_pairwise(&s) >= 0.1);
        for p in &s {
            assert!(p.position.z == 0.0 && (-1e-12..=1.0 + 1e-12).contains(&p.position.x));
        }
    }

    #[test]
    fn maximal_within_two_radii() {
        let tris = square();
        let s = sample_iso_points(&tris, 0.1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let q = Vec3::new(rng.gen(), rng.gen(), 0.0);
            let d = s.iter().map(|p| (p.position - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= 0.2, "{d}");
        }
    }

    #[test]
    fn tiny_triangle_gets_one() {
        let t = [Vec3::zeros(), Vec3::new(1e-3, 0.0, 0.0), Vec3::new(0.0, 1e-3, 0.0)];
        assert_eq!(sample_iso_points(&[t], 0.1, 0).unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(sample_iso_points(&square(), 0.0, 0).is_err());
        assert!(sample_iso_points(&square(), -1.0, 0).is_err());
        assert!(sample_iso_points(&[], 0.1, 0).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_separated_on_soup() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tris: Vec<[Vec3; 3]> = (0..40)
            .map(|_| {
                [0, 1, 2].map(|_| Vec3::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)))
            })
            .collect();
        let a = sample_iso_points(&tris, 0.15, 5).unwrap();
        let b = sample_iso_points(&tris, 0.15, 5).unwrap();
        assert_eq!(a, b);
        assert!(min_pairwise(&a) >= 0.15);
    }
}
