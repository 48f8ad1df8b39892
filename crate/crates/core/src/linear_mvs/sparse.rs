//! Sparse symmetric positive-definite systems: reverse Cuthill-McKee ordering,
//! envelope (skyline) Cholesky, and Jacobi-preconditioned conjugate gradient.

use std::collections::VecDeque;

/// Symmetric matrix stored as sorted lower-triangular rows (diagonal last).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    /// Sums duplicate entries; `(i, j)` and `(j, i)` address the same entry.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        for t in triplets.iter_mut() {
            if t.1 > t.0 {
                std::mem::swap(&mut t.0, &mut t.1);
            }
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            let row = &mut rows[i];
            match row.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => row.push((j, v)),
            }
        }
        Self { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_lower(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().enumerate().map(|(i, r)| r.last().filter(|e| e.0 == i).map_or(0.0, |e| e.1)).collect()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

/// Reverse Cuthill-McKee permutation (`perm[new] = old`).
pub fn rcm_order(a: &SparseSymmetric) -> Vec<usize> {
    let n = a.dim();
    let adj = a.neighbors();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |root: usize, visited: &[bool]| -> (Vec<usize>, usize) {
        // Returns the last level and the eccentricity of `root`.
        let mut dist = vec![usize::MAX; n];
        dist[root] = 0;
        let mut q = VecDeque::from([root]);
        let mut last = vec![root];
        let mut ecc = 0;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX && !visited[v] {
                    dist[v] = dist[u] + 1;
                    if dist[v] > ecc {
                        ecc = dist[v];
                        last.clear();
                    }
                    if dist[v] == ecc {
                        last.push(v);
                    }
                    q.push_back(v);
                }
            }
        }
        (last, ecc)
    };

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start node.
        let mut root = seed;
        let (mut last, mut ecc) = bfs_levels(root, &visited);
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, e2) = bfs_levels(cand, &visited);
            if e2 <= ecc {
                break;
            }
            root = cand;
            last = l2;
            ecc = e2;
        }
        visited[root] = true;
        let start = order.len();
        order.push(root);
        let mut head = start;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            next.dedup();
            for v in next {
                if !visited[v] {
                    visited[v] = true;
                    order.push(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

/// Pivot collapse relative to the original diagonal that counts as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

impl SkylineCholesky {
    /// Factors `a`; on failure returns the original index of the first pivot
    /// that collapsed.
    pub fn factor(a: &SparseSymmetric) -> Result<Self, usize> {
        let n = a.dim();
        let perm = rcm_order(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // Permuted lower entries and envelope.
        let mut first: Vec<usize> = (0..n).collect();
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i_old, row) in a.rows.iter().enumerate() {
            for &(j_old, v) in row {
                let (mut i, mut j) = (inv[i_old], inv[j_old]);
                if j > i {
                    std::mem::swap(&mut i, &mut j);
                }
                first[i] = first[i].min(j);
                entries[i].push((j, v));
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for &(j, v) in &entries[i] {
                values[offset[i] + j - first[i]] += v;
                if i == j {
                    diag[i] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let oi = offset[i];
            for j in fi..=i {
                let fj = first[j];
                let oj = offset[j];
                let k0 = fi.max(fj);
                let li = &values[oi + k0 - fi..oi + j - fi];
                let lj = &values[oj + k0 - fj..oj + j - fj];
                let dot: f64 = li.iter().zip(lj).map(|(a, b)| a * b).sum();
                let s = values[oi + j - fi] - dot;
                if j < i {
                    values[oi + j - fi] = s / values[oj + j - fj];
                } else {
                    if !(s > PIVOT_TOLERANCE * diag[i].abs()) || !s.is_finite() || diag[i] <= 0.0 {
                        return Err(perm[i]);
                    }
                    values[oi + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { perm, first, offset, values })
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let row = &self.values[oi..oi + i - fi];
            let dot: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.values[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            y[i] /= self.values[oi + i - fi];
            let yi = y[i];
            for (k, l) in self.values[oi..oi + i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient starting from `x`.
pub fn conjugate_gradient(a: &SparseSymmetric, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgReport {
    let n = a.dim();
    let diag = a.diagonal();
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let ax = a.mul(x);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] * inv[i]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut it = 0;
    let mut rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    while it < max_iter && rel > tol {
        let ap = a.mul(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    }
    CgReport { iterations: it, relative_residual: rel }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SparseSymmetric {
        // Sum of random rank-one sparse terms plus a diagonal shift.
        let mut t = Vec::new();
        for _ in 0..3 * n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            t.push((i, i, a * a));
            t.push((j, j, b * b));
            if i != j {
                t.push((i, j, a * b));
            } else {
                t.push((i, i, 2.0 * a * b));
            }
        }
        for i in 0..n {
            t.push((i, i, 0.1));
        }
        SparseSymmetric::from_triplets(n, t)
    }

    fn dense(a: &SparseSymmetric) -> nalgebra::DMatrix<f64> {
        let n = a.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, row) in a.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 7, 40, 150] {
            let a = random_spd(&mut rng, n);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = SkylineCholesky::factor(&a).unwrap().solve(&b);
            let xd = dense(&a).cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()));
            }
        }
    }

    #[test]
    fn cg_matches_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(&mut rng, 120);
        let b: Vec<f64> = (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xc = SkylineCholesky::factor(&a).unwrap().solve(&b);
        let mut x = vec![0.0; 120];
        let rep = conjugate_gradient(&a, &b, &mut x, 1e-13, 5000);
        assert!(rep.relative_residual <= 1e-13);
        for i in 0..120 {
            assert!((x[i] - xc[i]).abs() < 1e-8 * (1.0 + xc[i].abs()));
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        // Two decoupled blocks; the second is singular.
        let t = vec![(0, 0, 2.0), (1, 1, 1.0), (2, 2, 1.0), (1, 2, -1.0)];
        let a = SparseSymmetric::from_triplets(3, t);
        let bad = SkylineCholesky::factor(&a).unwrap_err();
        assert!(bad == 1 || bad == 2);
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_path() {
        let n = 60;
        let mut ids: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in (1..n).rev() {
            ids.swap(i, rng.gen_range(0..=i));
        }
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 4.0)).collect();
        for k in 0..n - 1 {
            t.push((ids[k], ids[k + 1], -1.0));
        }
        let a = SparseSymmetric::from_triplets(n, t);
        let chol = SkylineCholesky::factor(&a).unwrap();
        // A path reorders to a tridiagonal envelope.
        assert_eq!(chol.envelope_size(), 2 * n - 1);
    }
}
