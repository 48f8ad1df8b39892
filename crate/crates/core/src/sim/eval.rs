use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Bvh, Mat3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate (collinear or coincident) correspondences")]
    Degenerate,
    #[error("distance threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// `x ↦ scale · R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

/// Least-squares similarity (or rigid, with `with_scale = false`) transform
/// taking `source` onto `target`.
pub fn umeyama(source: &[Vec3], target: &[Vec3], with_scale: bool) -> Result<Similarity, EvalError> {
    if source.len() != target.len() {
        return Err(EvalError::LengthMismatch(source.len(), target.len()));
    }
    let n = source.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints { needed: 3, got: n });
    }
    let inv = 1.0 / n as f64;
    let ms = source.iter().sum::<Vec3>() * inv;
    let mt = target.iter().sum::<Vec3>() * inv;
    let mut cov = Mat3::zeros();
    let mut scatter = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let (ds, dt) = (s - ms, t - mt);
        cov += dt * ds.transpose();
        scatter += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov *= inv;
    var_s *= inv;
    let sv = scatter.symmetric_eigenvalues();
    let (lo, hi) = (sv.iter().copied().fold(f64::INFINITY, f64::min), sv.iter().copied().fold(0.0, f64::max));
    let mid = sv.iter().sum::<f64>() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(EvalError::Degenerate);
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Mat3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    // nalgebra does not sort singular values; put the sign flip on the smallest.
    if s[(2, 2)] < 0.0 {
        let k = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
        s = Mat3::identity();
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * vt;
    let scale = if with_scale { (Mat3::from_diagonal(&svd.singular_values) * s).trace() / var_s } else { 1.0 };
    let translation = mt - rotation * ms * scale;
    Ok(Similarity { rotation, translation, scale })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcpReport {
    pub transform: Similarity,
    /// Mean squared point-to-surface distance before each update.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Point-to-surface ICP: closest points on `target`, then a Umeyama update,
/// until the relative improvement drops below 1e-6.
pub fn icp_refine(
    source: &[Vec3],
    target: &Bvh,
    init: Similarity,
    max_iters: usize,
    with_scale: bool,
) -> Result<IcpReport, EvalError> {
    if source.is_empty() || target.is_empty() {
        return Err(EvalError::TooFewPoints { needed: 1, got: source.len().min(target.len()) });
    }
    let mut t = init;
    let mut residuals = Vec::new();
    let mut iterations = 0;
    let closest = |t: &Similarity| -> (Vec<Vec3>, f64) {
        let c: Vec<Vec3> = source.iter().map(|p| target.closest_point(&t.apply(p)).expect("non-empty").point).collect();
        let r = source.iter().zip(&c).map(|(p, q)| (t.apply(p) - q).norm_squared()).sum::<f64>() / source.len() as f64;
        (c, r)
    };
    let (mut corr, mut res) = closest(&t);
    while iterations < max_iters.max(1) {
        iterations += 1;
        residuals.push(res);
        if res <= 1e-24 {
            break;
        }
        let next = umeyama(source, &corr, with_scale)?;
        let (next_corr, next_res) = closest(&next);
        if next_res > res {
            break;
        }
        let improvement = (res - next_res) / res;
        t = next;
        corr = next_corr;
        res = next_res;
        if improvement < 1e-6 {
            residuals.push(res);
            break;
        }
    }
    if residuals.last() != Some(&res) {
        residuals.push(res);
    }
    Ok(IcpReport { transform: t, residuals, iterations })
}

/// Exact nearest-vertex queries: brute force for small sets, otherwise a
/// uniform hash grid searched in growing shells.
#[derive(Debug, Clone)]
pub struct NearestVertex {
    points: Vec<Vec3>,
    grid: Option<(f64, CellMap)>,
}

type CellMap = HashMap<(i64, i64, i64), Vec<usize>>;

pub const BRUTE_FORCE_LIMIT: usize = 2000;

impl NearestVertex {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self::with_limit(points, BRUTE_FORCE_LIMIT)
    }

    pub fn with_limit(points: Vec<Vec3>, limit: usize) -> Self {
        if points.len() < limit || points.is_empty() {
            return Self { points, grid: None };
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let ext = (hi - lo).max().max(1e-9);
        let cell = ext / (points.len() as f64).cbrt().max(1.0) * 2.0;
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            grid.entry(key(p, cell)).or_default().push(k);
        }
        Self { points, grid: Some((cell, grid)) }
    }

    /// Distance to the nearest vertex (`None` when empty).
    pub fn distance(&self, q: &Vec3) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let Some((cell, grid)) = &self.grid else {
            return self.points.iter().map(|p| (p - q).norm_squared()).min_by(f64::total_cmp).map(f64::sqrt);
        };
        let c = key(q, *cell);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(v) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            for &k in v {
                                best = best.min((self.points[k] - q).norm_squared());
                            }
                        }
                    }
                }
            }
            // Everything outside the searched shells is at least `ring · cell` away.
            let reach = ring as f64 * cell;
            if best.is_finite() && best <= reach * reach {
                return Some(best.sqrt());
            }
            ring += 1;
            if ring > 1_000_000 {
                return Some(best.sqrt());
            }
        }
    }
}

fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mean: f64,
    pub rms: f64,
}

fn nearest_distances(gt: &[Vec3], recon: &NearestVertex) -> Result<Vec<f64>, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::TooFewPoints { needed: 1, got: 0 });
    }
    gt.iter().map(|p| recon.distance(p).ok_or(EvalError::TooFewPoints { needed: 1, got: 0 })).collect()
}

/// Mean and RMS distance from each ground-truth sample to its nearest
/// reconstructed vertex.
pub fn accuracy(gt: &[Vec3], recon: &NearestVertex) -> Result<Accuracy, EvalError> {
    let d = nearest_distances(gt, recon)?;
    let n = d.len() as f64;
    Ok(Accuracy { mean: d.iter().sum::<f64>() / n, rms: (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt() })
}

/// Percentage of ground-truth samples with a reconstructed vertex closer
/// than `d`.
pub fn completeness(gt: &[Vec3], recon: &NearestVertex, d: f64) -> Result<f64, EvalError> {
    if !(d > 0.0) {
        return Err(EvalError::BadThreshold(d));
    }
    let dist = nearest_distances(gt, recon)?;
    Ok(100.0 * dist.iter().filter(|&&x| x < d).count() as f64 / dist.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};

    fn random_similarity(rng: &mut rand_chacha::ChaCha8Rng, scale: f64) -> Similarity {
        let axis = Unit::new_normalize(Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let r = Rotation3::from_axis_angle(&axis, rng.gen_range(-3.0..3.0)).into_inner();
        Similarity {
            rotation: r,
            translation: Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            scale,
        }
    }

    fn cloud(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn recovers_rigid_and_similarity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in 0..50 {
            let scale = if k % 2 == 0 { 1.0 } else { rng.gen_range(0.5..3.0) };
            let truth = random_similarity(&mut rng, scale);
            let src = cloud(&mut rng, 20);
            let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
            let est = umeyama(&src, &dst, true).unwrap();
            assert!((est.rotation - truth.rotation).amax() < 1e-9);
            assert!((est.translation - truth.translation).amax() < 1e-9);
            assert!((est.scale - scale).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_scale_and_degenerate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let src = cloud(&mut rng, 10);
        let id = umeyama(&src, &src, true).unwrap();
        assert!((id.rotation - Mat3::identity()).amax() < 1e-12 && id.translation.norm() < 1e-12);
        let doubled: Vec<Vec3> = src.iter().map(|p| p * 2.0).collect();
        assert!((umeyama(&src, &doubled, true).unwrap().scale - 2.0).abs() < 1e-9);
        let rigid = umeyama(&src, &doubled, false).unwrap();
        let resid: f64 = src.iter().zip(&doubled).map(|(s, t)| (rigid.apply(s) - t).norm()).sum::<f64>() / 10.0;
        assert!(resid > 0.5);
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(umeyama(&line, &line, true), Err(EvalError::Degenerate));
        assert!(umeyama(&src[..2], &src[..2], true).is_err());
    }

    #[test]
    fn nearest_vertex_paths_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pts = cloud(&mut rng, 3000);
        let brute = NearestVertex::with_limit(pts.clone(), usize::MAX);
        let grid = NearestVertex::with_limit(pts, 0);
        for _ in 0..500 {
            let q = Vec3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            assert_eq!(brute.distance(&q), grid.distance(&q));
        }
    }

    #[test]
    fn metric_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let gt = cloud(&mut rng, 100);
        let same = NearestVertex::new(gt.clone());
        assert_eq!(accuracy(&gt, &same).unwrap(), Accuracy { mean: 0.0, rms: 0.0 });
        assert_eq!(completeness(&gt, &same, 1e-9).unwrap(), 100.0);
        let shifted = NearestVertex::new(gt.iter().map(|p| p + Vec3::new(0.0, 0.0, 0.02)).collect());
        let a = accuracy(&gt[..1], &shifted).unwrap();
        assert!((a.mean - 0.02).abs() < 1e-12 && (a.rms - 0.02).abs() < 1e-12);
        assert!(completeness(&gt, &same, 0.0).is_err());
        assert!(accuracy(&[], &same).is_err());
    }
}
