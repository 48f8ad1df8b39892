use serde::Serialize;

use super::confidence::ViewContext;
use super::correspond::{find_corresponding, median_edge_length, CorrespondenceIndex, Thresholds};
use super::FusionParams;
use crate::geometry::barycentric_of;
use crate::linear_mvs::{solve, FusionRow, SolveError, SolveOptions, SolveParams};
use crate::view::ViewFrame;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub energy_before: f64,
    pub energy_after: f64,
    pub fusion_rows: usize,
    pub anchored_slots: usize,
    pub resolved_views: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FusionReport {
    pub sweeps: Vec<SweepReport>,
}

/// Total energy: every view's own system energy plus the fusion rows.
pub fn fusion_energy(views: &[ViewFrame], rows: &[Vec<FusionRow>], lambda_u: f64) -> f64 {
    views
        .iter()
        .zip(rows)
        .map(|(v, r)| {
            v.system.energy(&v.depths).total()
                + lambda_u * r.iter().map(|f| (v.depths[f.slot] - f.target).powi(2)).sum::<f64>()
        })
        .sum()
}

struct SweepPlan {
    anchors: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<FusionRow>>,
}

/// Anchors and fusion rows for every view, from the current state. Matches
/// are only searched among other views' high-confidence (anchored)
/// triangles, so every reference depth stays fixed for the whole sweep.
fn plan_sweep(views: &[ViewFrame], params: &FusionParams) -> SweepPlan {
    let contexts: Vec<ViewContext> = views.iter().map(ViewContext::new).collect();
    let space = params.space_factor * median_edge_length(contexts.iter().flat_map(|c| c.world.iter().flatten()));
    let th = Thresholds { space, normal: params.normal_threshold_deg.to_radians(), color: params.color_threshold };
    let high = |v: &ViewFrame, t: usize| v.support.is_supported(t) && v.confidence[t] > params.anchor_threshold;
    let indices: Vec<CorrespondenceIndex> = contexts
        .iter()
        .map(|c| {
            let items = (0..c.world.len())
                .filter(|&t| high(c.frame, t))
                .filter_map(|t| c.world[t].map(|w| (t, w, c.frame.mesh.color[t])))
                .collect();
            CorrespondenceIndex::new(items, space)
        })
        .collect();

    let mut anchors = Vec::with_capacity(views.len());
    let mut rows = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let mut a = Vec::new();
        let mut r = Vec::new();
        let cam = &v.camera;
        for t in 0..v.mesh.num_triangles() {
            if !v.support.is_supported(t) {
                continue;
            }
            if high(v, t) {
                a.extend(v.mesh.triangles[t].iter().map(|&s| (s, v.depths[s])));
                continue;
            }
            let Some(query) = contexts[i].world[t] else {
                continue;
            };
            for (j, index) in indices.iter().enumerate() {
                if j == i || i.abs_diff(j) >= params.fusion_window {
                    continue;
                }
                let Some(tj) = find_corresponding(&query, &v.mesh.color[t], index, &th) else {
                    continue;
                };
                let other = contexts[j].world[tj].expect("indexed triangles are solved");
                // Reference depths: the matched world triangle seen from this view.
                let mut px = [crate::geometry::Vec2::zeros(); 3];
                let mut inv = [0.0; 3];
                let mut ok = true;
                for k in 0..3 {
                    match cam.project(&other.vertices[k]) {
                        Ok((p, d)) => {
                            px[k] = p;
                            inv[k] = d.value();
                        }
                        Err(_) => ok = false,
                    }
                }
                if !ok {
                    continue;
                }
                for &s in &v.mesh.triangles[t] {
                    if let Ok(b) = barycentric_of(&px, &v.mesh.vertices[s]) {
                        let target = b.apply(inv);
                        if target.is_finite() && target > 0.0 {
                            r.push(FusionRow { slot: s, target });
                        }
                    }
                }
            }
        }
        anchors.push(a);
        rows.push(r);
    }
    SweepPlan { anchors, rows }
}

/// Block-coordinate fusion: each view in ascending order is re-solved with
/// its confident slots fixed and its low-confidence slots tied to matched
/// surfaces of nearby views. Views without fusion rows are left untouched.
pub fn fuse(
    views: &mut [ViewFrame],
    solve_params: &SolveParams,
    params: &FusionParams,
) -> Result<FusionReport, SolveError> {
    let mut report = FusionReport::default();
    for _ in 0..params.sweeps {
        let plan = plan_sweep(views, params);
        let before = fusion_energy(views, &plan.rows, params.lambda_u);
        let mut resolved = 0;
        for (i, view) in views.iter_mut().enumerate() {
            let rows = &plan.rows[i];
            if rows.is_empty() {
                continue;
            }
            let own = |v: &ViewFrame, d: &[f64]| {
                v.system.energy(d).total()
                    + params.lambda_u * rows.iter().map(|f| (d[f.slot] - f.target).powi(2)).sum::<f64>()
            };
            let opts = SolveOptions {
                anchors: &plan.anchors[i],
                fusion: rows,
                lambda_u: params.lambda_u,
                merge_paired_slots: false,
            };
            let sol = solve(&view.system, solve_params, &opts)?;
            // The old depths are feasible, so the exact minimizer can only be
            // lower; guard against round-off anyway.
            if own(view, &sol.depths) <= own(view, &view.depths) {
                view.depths = sol.depths;
                resolved += 1;
            }
        }
        let after = fusion_energy(views, &plan.rows, params.lambda_u);
        report.sweeps.push(SweepReport {
            energy_before: before,
            energy_after: after,
            fusion_rows: plan.rows.iter().map(Vec::len).sum(),
            anchored_slots: plan.anchors.iter().map(Vec::len).sum(),
            resolved_views: resolved,
        });
    }
    Ok(report)
}
