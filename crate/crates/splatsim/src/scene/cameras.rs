//! Camera-set description file: a JSON document listing one record per
//! view. Record order defines the view index. Schema:
//!
//! ```json
//! {
//!   "cameras": [
//!     {
//!       "name": "view_000",
//!       "fx": 300.0, "fy": 300.0, "cx": 100.0, "cy": 100.0,
//!       "width": 200, "height": 200,
//!       "world_to_camera": [[..4],[..4],[..4],[0,0,0,1]],
//!       "mask": "view_000.png"
//!     }
//!   ]
//! }
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Camera;

/// Serialized form of one camera record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 4×4 world-to-camera matrix.
    pub world_to_camera: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraSet {
    cameras: Vec<CameraRecord>,
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> Self {
        let mut m = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = cam.world_to_camera[(r, c)];
            }
        }
        CameraRecord {
            name: cam.name.clone(),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            world_to_camera: m,
            mask: cam.mask_file.clone(),
        }
    }

    pub fn into_camera(self) -> Result<Camera> {
        let m = Matrix4::from_fn(|r, c| self.world_to_camera[r][c]);
        Camera::new(
            self.name, self.fx, self.fy, self.cx, self.cy, self.width, self.height, m, self.mask,
        )
    }
}

/// Loads and validates a camera set; record order defines the view order.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let set: CameraSet = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let mut seen = HashSet::new();
    for rec in &set.cameras {
        if !seen.insert(rec.name.clone()) {
            return Err(Error::Data(format!(
                "{}: duplicated view name '{}'",
                path.display(),
                rec.name
            )));
        }
    }
    set.cameras
        .into_iter()
        .map(CameraRecord::into_camera)
        .collect()
}

/// Writes a camera set in the schema `load_cameras` reads.
pub fn save_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let set = CameraSet {
        cameras: cameras.iter().map(CameraRecord::from_camera).collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &set)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}
