//! Per-iteration artifacts on disk. Everything is written in a fixed order
//! with deterministic formatting, so identical runs give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IterationRecord, LoopState};
use crate::geometry::{save_cameras, Vec3};
use crate::nbv::{NbvOutcome, ViewCandidate};
use crate::ply::PlyFormat;

/// Public NBV record: `{position, yaw_deg, pitch_deg, score}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbvJson {
    pub position: [f64; 3],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub score: f64,
}

impl From<&ViewCandidate> for NbvJson {
    fn from(c: &ViewCandidate) -> Self {
        Self { position: arr(&c.position), yaw_deg: c.yaw_deg, pitch_deg: c.pitch_deg, score: c.score }
    }
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn nbv_json(outcome: Option<&NbvOutcome>) -> Vec<NbvJson> {
    match outcome {
        Some(NbvOutcome::Selected { nbvs, .. }) => nbvs.iter().map(NbvJson::from).collect(),
        _ => Vec::new(),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> crate::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> crate::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

/// `cameras.json`, `fused.ply`, `coverage.ply`, `coverage.json`,
/// `nbv.json`, `path.json` and `metrics.json` under `dir`.
pub fn write_iteration(record: &IterationRecord, dir: &Path) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    save_cameras(&dir.join("cameras.json"), &record.cameras)?;
    write_with(&dir.join("fused.ply"), |o| record.surface.write_ply(o, PlyFormat::BinaryLittleEndian))?;
    write_with(&dir.join("coverage.ply"), |o| record.coverage.write_ply(o, PlyFormat::BinaryLittleEndian))?;
    let points: Vec<_> = record
        .coverage
        .points
        .iter()
        .map(|p| {
            serde_json::json!({
                "position": arr(&p.position),
                "normal": arr(&p.normal),
                "signal": p.signal,
                "label": p.label,
                "good_views": p.good_views,
            })
        })
        .collect();
    write_json(
        &dir.join("coverage.json"),
        &serde_json::json!({
            "summary": record.coverage.summary,
            "uncovered_by_face": record.uncovered_by_face,
            "points": points,
        }),
    )?;
    write_json(&dir.join("nbv.json"), &nbv_json(record.nbv.as_ref()))?;
    let waypoints = record.path.as_ref().map(|p| p.waypoints.clone()).unwrap_or_default();
    write_json(&dir.join("path.json"), &waypoints)?;
    write_json(&dir.join("metrics.json"), &record.metrics_json())?;
    Ok(())
}

/// One `iter_NN` directory per iteration plus a top-level `metrics.json`.
pub fn write_state(state: &LoopState, dir: &Path) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    for r in &state.iterations {
        write_iteration(r, &dir.join(format!("iter_{:02}", r.iteration)))?;
    }
    write_json(&dir.join("metrics.json"), &state.metrics_json())
}
