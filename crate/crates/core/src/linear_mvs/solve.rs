use super::sparse::{conjugate_gradient, SkylineCholesky, SparseSymmetric};
use super::{DepthSystem, SolveError, SolveParams};

/// Ties a slot to a reference inverse depth with weight `lambda_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRow {
    pub slot: usize,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<'a> {
    /// Slots held fixed at the given value.
    pub anchors: &'a [(usize, f64)],
    pub fusion: &'a [FusionRow],
    pub lambda_u: f64,
    /// Collapse every pair of continuity slots into one unknown (a C⁰ mesh).
    pub merge_paired_slots: bool,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        Self { anchors: &[], fusion: &[], lambda_u: 1.0, merge_paired_slots: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Per-slot inverse depth; NaN for inactive slots.
    pub depths: Vec<f64>,
    pub unknowns: usize,
    /// `‖rhs − N x‖ / ‖rhs‖` of the normal equations.
    pub relative_residual: f64,
    pub used_cg: bool,
}

impl Solution {
    pub fn fusion_energy(depths: &[f64], rows: &[FusionRow], lambda_u: f64) -> f64 {
        lambda_u * rows.iter().map(|r| (depths[r.slot] - r.target).powi(2)).sum::<f64>()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Minimizes the system energy (plus fusion rows) over the active slots that
/// are not anchored.
pub fn solve(sys: &DepthSystem, params: &SolveParams, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let n = sys.num_slots;
    let mut parent: Vec<usize> = (0..n).collect();
    if opts.merge_paired_slots {
        for r in &sys.c {
            let (a, b) = (find(&mut parent, r.slots[0]), find(&mut parent, r.slots[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let root: Vec<usize> = (0..n).map(|s| find(&mut parent, s)).collect();

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(s, v) in opts.anchors {
        if s >= n || !sys.active[s] {
            return Err(SolveError::BadSlot(s));
        }
        fixed[root[s]].get_or_insert(v);
    }
    let mut unknown = vec![usize::MAX; n];
    let mut first_slot = Vec::new();
    for s in 0..n {
        let r = root[s];
        if sys.active[s] && fixed[r].is_none() && unknown[r] == usize::MAX {
            unknown[r] = first_slot.len();
            first_slot.push(s);
        }
    }
    let m = first_slot.len();
    let value_of_fixed = |s: usize| fixed[root[s]];

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; m];
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(4);
    let mut add_row = |slots: &[usize], coeffs: &[f64], target: f64, weight: f64| {
        if weight == 0.0 {
            return;
        }
        entries.clear();
        let mut t = target;
        for (&s, &c) in slots.iter().zip(coeffs) {
            if let Some(v) = value_of_fixed(s) {
                t -= c * v;
                continue;
            }
            let u = unknown[root[s]];
            match entries.iter_mut().find(|e| e.0 == u) {
                Some(e) => e.1 += c,
                None => entries.push((u, c)),
            }
        }
        for x in 0..entries.len() {
            let (ux, cx) = entries[x];
            rhs[ux] += weight * cx * t;
            for &(uy, cy) in &entries[..=x] {
                triplets.push((ux, uy, weight * cx * cy));
            }
        }
    };

    for r in &sys.a {
        add_row(&r.slots, &r.weights, r.target, 1.0);
    }
    for r in &sys.b {
        if r.slots.iter().all(|&s| sys.active[s]) {
            add_row(&r.slots, &r.coeffs, 0.0, sys.lambda_s * r.weight);
        }
    }
    for r in &sys.c {
        if r.slots.iter().all(|&s| sys.active[s]) {
            add_row(&r.slots, &[1.0, -1.0], 0.0, sys.lambda_c * r.weight);
        }
    }
    for f in opts.fusion {
        if f.slot >= n || !sys.active[f.slot] {
            return Err(SolveError::BadSlot(f.slot));
        }
        add_row(&[f.slot], &[1.0], f.target, opts.lambda_u);
    }

    let mut depths = vec![f64::NAN; n];
    for s in 0..n {
        if sys.active[s] {
            if let Some(v) = value_of_fixed(s) {
                depths[s] = v;
            }
        }
    }
    if m == 0 {
        return Ok(Solution { depths, unknowns: 0, relative_residual: 0.0, used_cg: false });
    }

    let normal = SparseSymmetric::from_triplets(m, triplets);
    let rank_error = |u: usize| {
        let slot = first_slot[u];
        SolveError::RankDeficient { component: sys.slot_component[slot], slot }
    };
    // Zero diagonal means the unknown appears in no row at all.
    if let Some(u) = normal.diagonal().iter().position(|&d| d <= 0.0) {
        return Err(rank_error(u));
    }
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = |x: &[f64]| {
        let nx = normal.mul(x);
        let r: f64 = nx.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if rhs_norm > 0.0 {
            r / rhs_norm
        } else {
            r
        }
    };

    let (x, rel, used_cg) = if m <= params.direct_limit {
        let chol = SkylineCholesky::factor(&normal).map_err(rank_error)?;
        let mut x = chol.solve(&rhs);
        let mut rel = residual(&x);
        // Iterative refinement for ill-scaled systems.
        for _ in 0..3 {
            if rel < 1e-10 {
                break;
            }
            let nx = normal.mul(&x);
            let r: Vec<f64> = rhs.iter().zip(&nx).map(|(b, a)| b - a).collect();
            let dx = chol.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            rel = residual(&x);
        }
        (x, rel, false)
    } else {
        let mut x = vec![0.0; m];
        let rep = conjugate_gradient(&normal, &rhs, &mut x, params.cg_tolerance, params.cg_max_iterations);
        if rep.relative_residual > 1e-8 {
            return Err(SolveError::NotConverged(rep.relative_residual));
        }
        (x, rep.relative_residual, true)
    };

    for s in 0..n {
        if sys.active[s] && depths[s].is_nan() {
            depths[s] = x[unknown[root[s]]];
        }
    }
    Ok(Solution { depths, unknowns: m, relative_residual: rel, used_cg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::linear_mvs::{assemble, Observation};
    use crate::meshing::{oversegment, triangulate, RgbImage, SegmentParams, Segmentation, SupportClusters, ViewMesh};
    use rand::{Rng, SeedableRng};

    fn full_support(mesh: &ViewMesh) -> SupportClusters {
        SupportClusters { component: vec![Some(0); mesh.num_triangles()], count: 1 }
    }

    fn plane(p: &Vec2) -> f64 {
        0.2 + 0.003 * p.x - 0.002 * p.y
    }

    fn mesh_and_obs(seed: u64) -> (ViewMesh, Vec<Observation>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let img = RgbImage::from_fn(48, 36, |x, y| [((x / 8 + y / 6) % 3) as f64 * 0.3, 0.5, 0.5]);
        let mesh = triangulate(&oversegment(&img, &SegmentParams { target_region_size: 36, ..Default::default() }));
        let obs = (0..300)
            .map(|_| {
                let p = Vec2::new(rng.gen_range(-0.5..47.5), rng.gen_range(-0.5..35.5));
                Observation { pixel: p, inverse_depth: plane(&p) }
            })
            .collect();
        (mesh, obs)
    }

    #[test]
    fn planar_data_is_recovered() {
        let (mesh, obs) = mesh_and_obs(1);
        let params = SolveParams::default();
        let sys = assemble(&mesh, &full_support(&mesh), &obs, &params).unwrap();
        let sol = solve(&sys, &params, &SolveOptions::default()).unwrap();
        for (s, v) in mesh.vertices.iter().enumerate() {
            let truth = plane(v);
            assert!((sol.depths[s] - truth).abs() <= 1e-6 * truth, "slot {s}");
        }
        assert!(sol.relative_residual < 1e-8);
    }

    #[test]
    fn first_order_optimality_and_scaling() {
        let (mesh, mut obs) = mesh_and_obs(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for o in obs.iter_mut() {
            o.inverse_depth += rng.gen_range(-0.01..0.01);
        }
        let params = SolveParams::default();
        let sys = assemble(&mesh, &full_support(&mesh), &obs, &params).unwrap();
        let sol = solve(&sys, &params, &SolveOptions::default()).unwrap();
        let e0 = sys.energy(&sol.depths).total();
        for _ in 0..20 {
            let mut delta: Vec<f64> = (0..sol.depths.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            delta.iter_mut().for_each(|v| *v *= 1e-3 / norm);
            let moved: Vec<f64> = sol.depths.iter().zip(&delta).map(|(a, b)| a + b).collect();
            assert!(sys.energy(&moved).total() >= e0);
        }
        let scaled_obs: Vec<Observation> =
            obs.iter().map(|o| Observation { inverse_depth: 3.0 * o.inverse_depth, ..*o }).collect();
        let sys3 = assemble(&mesh, &full_support(&mesh), &scaled_obs, &params).unwrap();
        let sol3 = solve(&sys3, &params, &SolveOptions::default()).unwrap();
        for (a, b) in sol.depths.iter().zip(&sol3.depths) {
            assert!((3.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fully_observed_triangle_interpolates() {
        let img = RgbImage::new(4, 4, [0.5; 3]);
        let mesh = triangulate(&Segmentation::from_labels(&img, &[0; 16], 1.0));
        let obs: Vec<Observation> = mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(s, p)| Observation { pixel: *p, inverse_depth: 0.1 + 0.01 * s as f64 })
            .collect();
        // With no regularization, A restricted to one triangle is square.
        let params = SolveParams { lambda_s: 0.0, lambda_c: 0.0, ..Default::default() };
        let one = ViewMesh {
            vertices: mesh.vertices[..3].to_vec(),
            triangles: vec![[0, 1, 2]],
            region: vec![0],
            color: vec![[0.5; 3]],
            adjacency: vec![],
            ..mesh.clone()
        };
        let sys = assemble(&one, &full_support(&one), &obs[..3], &params).unwrap();
        let sol = solve(&sys, &params, &SolveOptions::default()).unwrap();
        for s in 0..3 {
            assert!((sol.depths[s] - obs[s].inverse_depth).abs() < 1e-12);
        }
    }

    #[test]
    fn anchors_and_rank_deficiency() {
        let img = RgbImage::new(4, 4, [0.5; 3]);
        let mesh = triangulate(&Segmentation::from_labels(&img, &[0; 16], 1.0));
        let params = SolveParams::default();
        let obs = [Observation { pixel: Vec2::new(1.0, 1.0), inverse_depth: 0.5 }];
        let sys = assemble(&mesh, &full_support(&mesh), &obs, &params).unwrap();
        let err = solve(&sys, &params, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::RankDeficient { component: Some(0), .. }));
        // Anchoring one whole triangle fixes the gauge.
        let anchors = [(0usize, 0.4), (1usize, 0.6), (2usize, 0.5)];
        let sol = solve(&sys, &params, &SolveOptions { anchors: &anchors, ..Default::default() }).unwrap();
        assert_eq!(sol.depths[0], 0.4);
        assert_eq!(sol.depths[1], 0.6);
        assert!(sol.depths.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn merged_solve_equalizes_pairs() {
        let (mesh, obs) = mesh_and_obs(4);
        let params = SolveParams::default();
        let sys = assemble(&mesh, &full_support(&mesh), &obs, &params).unwrap();
        let sol = solve(&sys, &params, &SolveOptions { merge_paired_slots: true, ..Default::default() }).unwrap();
        for r in &sys.c {
            assert_eq!(sol.depths[r.slots[0]], sol.depths[r.slots[1]]);
        }
        let split = solve(&sys, &params, &SolveOptions::default()).unwrap();
        assert!(split.unknowns > sol.unknowns);
    }

    #[test]
    fn cg_path_agrees_with_direct() {
        let (mesh, obs) = mesh_and_obs(5);
        let params = SolveParams::default();
        let sys = assemble(&mesh, &full_support(&mesh), &obs, &params).unwrap();
        let direct = solve(&sys, &params, &SolveOptions::default()).unwrap();
        let cg = solve(&sys, &SolveParams { direct_limit: 0, ..params }, &SolveOptions::default()).unwrap();
        assert!(cg.used_cg);
        for (a, b) in direct.depths.iter().zip(&cg.depths) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
