use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraModel, GeometryError, Intrinsics, Mat3, Vec3};

/// On-disk camera record. A camera set is a JSON array of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    /// World-to-camera translation.
    pub translation: [f64; 3],
}

impl From<&CameraModel> for CameraJson {
    fn from(cam: &CameraModel) -> Self {
        let k = cam.intrinsics();
        let r = cam.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let t = cam.translation();
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }
}

impl TryFrom<&CameraJson> for CameraModel {
    type Error = GeometryError;

    fn try_from(j: &CameraJson) -> Result<Self, Self::Error> {
        let k = Intrinsics { fx: j.fx, fy: j.fy, cx: j.cx, cy: j.cy, width: j.width, height: j.height };
        CameraModel::new(k, Mat3::from_row_slice(&j.rotation), Vec3::from_column_slice(&j.translation))
    }
}

pub fn save_cameras(path: &Path, cameras: &[CameraModel]) -> std::io::Result<()> {
    let records: Vec<CameraJson> = cameras.iter().map(CameraJson::from).collect();
    let text = serde_json::to_string_pretty(&records)?;
    std::fs::write(path, text)
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraModel>, crate::Error> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<CameraJson> = serde_json::from_str(&text)?;
    records.iter().map(|r| CameraModel::try_from(r).map_err(crate::Error::from)).collect()
}
