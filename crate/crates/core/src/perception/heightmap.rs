//! Forward-facing ray-cast heightmap.
//!
//! Rays leave the optical centre through a planar 12 x 16 grid of points
//! spaced 0.03 m apart. The grid plane sits at the focal distance that makes
//! the horizontal field of view (between outermost ray centres) exactly 70
//! degrees, which gives roughly 54 degrees vertically.
//!
//! Frames are flattened row-major: row 0 is the top (farthest) row, column 0
//! the leftmost ray as seen by the camera.

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainModel;
use crate::{Error, Result};

pub const ROWS: usize = 12;
pub const COLS: usize = 16;
pub const NUM_RAYS: usize = ROWS * COLS;
pub const GRID_SPACING: f64 = 0.03;
pub const MIN_RANGE: f64 = 0.1;
pub const MAX_RANGE: f64 = 8.0;
pub const BASE_HEIGHT: f64 = 0.35;
/// Downward tilt of the optical axis for a standing robot (rad).
pub const NOMINAL_PITCH: f64 = 0.8;
/// Camera sits this far ahead of the base centre.
pub const CAMERA_FORWARD_OFFSET: f64 = 0.2;

/// Distance from the optical centre to the ray grid plane (m).
pub fn focal_distance() -> f64 {
    let half_width = 0.5 * (COLS - 1) as f64 * GRID_SPACING;
    half_width / 35f64.to_radians().tan()
}

/// Full angular extent between outermost ray centres, `(horizontal, vertical)` in degrees.
pub fn field_of_view_deg() -> (f64, f64) {
    let f = focal_distance();
    let h = 2.0 * (0.5 * (COLS - 1) as f64 * GRID_SPACING / f).atan();
    let v = 2.0 * (0.5 * (ROWS - 1) as f64 * GRID_SPACING / f).atan();
    (h.to_degrees(), v.to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    /// Downward tilt (rad).
    pub pitch: f64,
    pub yaw: f64,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, BASE_HEIGHT],
            pitch: NOMINAL_PITCH,
            yaw: 0.0,
        }
    }
}

impl CameraPose {
    /// Optical axis, left and up unit vectors in world coordinates.
    pub fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        let forward = [cp * cy, cp * sy, -sp];
        let left = [-sy, cy, 0.0];
        let up = [sp * cy, sp * sy, cp];
        (forward, left, up)
    }

    /// Grid target point for a ray, relative to the optical centre.
    pub fn grid_point(&self, row: usize, col: usize) -> [f64; 3] {
        let (f, l, u) = self.basis();
        let fd = focal_distance();
        let a = (0.5 * (COLS - 1) as f64 - col as f64) * GRID_SPACING;
        let b = (0.5 * (ROWS - 1) as f64 - row as f64) * GRID_SPACING;
        std::array::from_fn(|k| fd * f[k] + a * l[k] + b * u[k])
    }

    /// Unit direction of every ray, row-major.
    pub fn ray_directions(&self) -> Vec<[f64; 3]> {
        (0..ROWS)
            .flat_map(|r| (0..COLS).map(move |c| (r, c)))
            .map(|(r, c)| {
                let p = self.grid_point(r, c);
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                p.map(|v| v / n)
            })
            .collect()
    }
}

/// Clipped ray ranges, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightmapFrame {
    pub distances: Vec<f64>,
}

impl HeightmapFrame {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if distances.len() != NUM_RAYS {
            return Err(Error::ShapeMismatch(format!(
                "heightmap needs {NUM_RAYS} entries, got {}",
                distances.len()
            )));
        }
        Ok(Self { distances: distances.into_iter().map(clip_range).collect() })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.distances[row * COLS + col]
    }
}

pub fn clip_range(d: f64) -> f64 {
    if d.is_nan() {
        MAX_RANGE
    } else {
        d.clamp(MIN_RANGE, MAX_RANGE)
    }
}

pub fn sample_heightmap(terrain: &TerrainModel, pose: &CameraPose) -> Result<HeightmapFrame> {
    let [x, y, z] = pose.position;
    let ground = terrain.height_at(x, y);
    if !(z > ground) {
        return Err(Error::CameraBelowGround { x, y, z, ground });
    }
    let distances = pose
        .ray_directions()
        .into_iter()
        .map(|d| clip_range(terrain.raycast(pose.position, d).unwrap_or(MAX_RANGE)))
        .collect();
    Ok(HeightmapFrame { distances })
}
