use std::io::Write;

use serde::Serialize;

use super::{SolveError, SolveParams};
use crate::geometry::{barycentric_of, Vec2};
use crate::meshing::{color_distance, SupportClusters, ViewMesh};

/// One scene-point observation in a view: pixel and its inverse depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pixel: Vec2,
    pub inverse_depth: f64,
}

/// `target ≈ Σ weights[k] · d[slots[k]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ARow {
    pub triangle: usize,
    pub slots: [usize; 3],
    pub weights: [f64; 3],
    pub target: f64,
}

/// `0 ≈ Σ coeffs[k] · d[slots[k]]` with `coeffs = (1, −β₁, −β₂, −β₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BRow {
    pub slots: [usize; 4],
    pub coeffs: [f64; 4],
    pub weight: f64,
}

/// `0 ≈ d[slots[0]] − d[slots[1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CRow {
    pub slots: [usize; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSystem {
    pub num_slots: usize,
    pub a: Vec<ARow>,
    pub b: Vec<BRow>,
    pub c: Vec<CRow>,
    pub lambda_s: f64,
    pub lambda_c: f64,
    /// Slots of supported triangles; only these are unknowns.
    pub active: Vec<bool>,
    pub slot_component: Vec<Option<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    pub sfm: f64,
    pub smoothness: f64,
    pub continuity: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.sfm + self.smoothness + self.continuity
    }
}

pub fn color_weight(a: &[f64; 3], b: &[f64; 3], sigma_color: f64) -> f64 {
    let d = color_distance(a, b);
    (-(d * d) / (sigma_color * sigma_color)).exp()
}

impl DepthSystem {
    /// No rows and no unknowns.
    pub fn empty(num_slots: usize) -> Self {
        Self {
            num_slots,
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
            lambda_s: 0.0,
            lambda_c: 0.0,
            active: vec![false; num_slots],
            slot_component: vec![None; num_slots],
        }
    }

    /// Evaluates each term with its weights applied (λ included).
    pub fn energy(&self, d: &[f64]) -> Energy {
        let sfm =
            self.a.iter().map(|r| (r.target - (0..3).map(|k| r.weights[k] * d[r.slots[k]]).sum::<f64>()).powi(2)).sum();
        let smoothness = self
            .b
            .iter()
            .map(|r| r.weight * (0..4).map(|k| r.coeffs[k] * d[r.slots[k]]).sum::<f64>().powi(2))
            .sum::<f64>()
            * self.lambda_s;
        let continuity =
            self.c.iter().map(|r| r.weight * (d[r.slots[0]] - d[r.slots[1]]).powi(2)).sum::<f64>() * self.lambda_c;
        Energy { sfm, smoothness, continuity }
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Matrix Market dump of the stacked, unweighted `[A; B; C]` rows.
    pub fn write_matrix_market(&self, out: &mut impl Write) -> std::io::Result<()> {
        let rows = self.a.len() + self.b.len() + self.c.len();
        let nnz: usize = self.a.len() * 3 + self.b.len() * 4 + self.c.len() * 2;
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "% rows: A then B then C; columns: vertex slots")?;
        writeln!(out, "{} {} {}", rows, self.num_slots, nnz)?;
        let mut r = 1;
        for row in &self.a {
            for k in 0..3 {
                writeln!(out, "{} {} {:e}", r, row.slots[k] + 1, row.weights[k])?;
            }
            r += 1;
        }
        for row in &self.b {
            for k in 0..4 {
                writeln!(out, "{} {} {:e}", r, row.slots[k] + 1, row.coeffs[k])?;
            }
            r += 1;
        }
        for row in &self.c {
            writeln!(out, "{} {} 1", r, row.slots[0] + 1)?;
            writeln!(out, "{} {} -1", r, row.slots[1] + 1)?;
            r += 1;
        }
        Ok(())
    }

    /// Sidecar describing the Matrix Market dump.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slots": self.num_slots,
            "active_slots": self.num_active(),
            "rows": { "a": self.a.len(), "b": self.b.len(), "c": self.c.len() },
            "lambda_s": self.lambda_s,
            "lambda_c": self.lambda_c,
            "d_sfm": self.a.iter().map(|r| r.target).collect::<Vec<_>>(),
            "w_s": self.b.iter().map(|r| r.weight).collect::<Vec<_>>(),
            "w_c": self.c.iter().map(|r| r.weight).collect::<Vec<_>>(),
        })
    }
}

/// Builds the per-view system. Observations that do not land in a supported
/// triangle are ignored.
pub fn assemble(
    mesh: &ViewMesh,
    support: &SupportClusters,
    observations: &[Observation],
    params: &SolveParams,
) -> Result<DepthSystem, SolveError> {
    let n = mesh.num_slots();
    let mut active = vec![false; n];
    let mut slot_component = vec![None; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if let Some(c) = support.component[t] {
            for &s in tri {
                active[s] = true;
                slot_component[s] = Some(c);
            }
        }
    }
    let locator = mesh.locator();
    let mut a = Vec::new();
    for o in observations {
        let Some(t) = locator.locate_where(&o.pixel, |t| support.is_supported(t)) else {
            continue;
        };
        let Ok(bary) = barycentric_of(&mesh.triangle_pixels(t), &o.pixel) else {
            continue;
        };
        a.push(ARow { triangle: t, slots: mesh.triangles[t], weights: bary.weights(), target: o.inverse_depth });
    }
    if a.is_empty() {
        return Err(SolveError::Unconstrained);
    }

    let mut b = Vec::new();
    let mut c = Vec::new();
    for rec in &mesh.adjacency {
        let [t0, t1] = rec.triangles;
        if !(support.is_supported(t0) && support.is_supported(t1)) {
            continue;
        }
        let w = color_weight(&mesh.color[t0], &mesh.color[t1], params.sigma_color);
        for p in rec.pairs {
            c.push(CRow { slots: p, weight: w });
        }
        // Each side: the neighbor's opposite vertex extends this triangle's plane.
        for (own, other_opp) in [(t0, rec.opposite[1]), (t1, rec.opposite[0])] {
            let tri = mesh.triangle_pixels(own);
            let Ok(beta) = barycentric_of(&tri, &mesh.vertices[other_opp]) else {
                continue;
            };
            let bw = beta.weights();
            let s = mesh.triangles[own];
            b.push(BRow { slots: [other_opp, s[0], s[1], s[2]], coeffs: [1.0, -bw[0], -bw[1], -bw[2]], weight: w });
        }
    }
    Ok(DepthSystem {
        num_slots: n,
        a,
        b,
        c,
        lambda_s: params.lambda_s,
        lambda_c: params.lambda_c,
        active,
        slot_component,
    })
}
