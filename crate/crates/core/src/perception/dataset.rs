//! Heightmap frames captured by a camera on a hovering robot over randomised
//! terrain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::perception::heightmap::{sample_heightmap, CameraPose, HeightmapFrame, BASE_HEIGHT, NOMINAL_PITCH, NUM_RAYS};
use crate::terrain::{build_terrain, TerrainFamily, TerrainSpec};
use crate::{Error, Result};

pub const DATASET_HEADER: &str = "# perceptloco heightmap dataset v1";

pub const DATASET_FAMILIES: [TerrainFamily; 4] = [
    TerrainFamily::Platforms,
    TerrainFamily::Hurdles,
    TerrainFamily::Heightfield,
    TerrainFamily::Stairs,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFrame {
    pub family: TerrainFamily,
    pub parameter: f64,
    pub terrain_seed: u64,
    pub pose: CameraPose,
    pub frame: HeightmapFrame,
}

fn family_parameter<R: Rng + ?Sized>(family: TerrainFamily, rng: &mut R) -> f64 {
    match family {
        TerrainFamily::Flat => 0.0,
        TerrainFamily::Platforms => rng.random_range(0.02..0.10),
        TerrainFamily::Hurdles => rng.random_range(0.03..=0.06),
        TerrainFamily::Heightfield => rng.random_range(0.0..0.05),
        TerrainFamily::Stairs => rng.random_range(0.03..=0.07),
    }
}

/// One frame; each index draws from its own stream so generation order does
/// not matter.
pub fn generate_frame(seed: u64, index: usize) -> Result<DatasetFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let family = DATASET_FAMILIES[index % DATASET_FAMILIES.len()];
    let parameter = family_parameter(family, &mut rng);
    let terrain_seed: u64 = rng.random();
    let spec = TerrainSpec::with_defaults(family, parameter, terrain_seed);
    let terrain = build_terrain(&spec)?;
    let x = rng.random_range(spec.extent.x_min - 1.5..spec.extent.x_max);
    let y = rng.random_range(-0.5..0.5);
    let z = terrain.height_at(x, y) + BASE_HEIGHT + rng.random_range(-0.03..0.03);
    let pose = CameraPose {
        position: [x, y, z],
        pitch: NOMINAL_PITCH + rng.random_range(-0.05..0.05),
        yaw: rng.random_range(-0.15..0.15),
    };
    let frame = sample_heightmap(&terrain, &pose)?;
    Ok(DatasetFrame { family, parameter, terrain_seed, pose, frame })
}

/// `count` frames cycling through the four obstacle families, generated in parallel.
pub fn generate_dataset(count: usize, seed: u64) -> Result<Vec<DatasetFrame>> {
    (0..count).into_par_iter().map(|i| generate_frame(seed, i)).collect()
}

/// Checks the training preconditions: enough frames, all families present.
pub fn validate_training_set(frames: &[DatasetFrame], min_frames: usize) -> Result<()> {
    if frames.len() < min_frames {
        return Err(Error::InvalidParameter(format!(
            "training needs at least {min_frames} frames, got {}",
            frames.len()
        )));
    }
    for fam in DATASET_FAMILIES {
        if !frames.iter().any(|f| f.family == fam) {
            return Err(Error::InvalidParameter(format!("dataset has no {fam} frames")));
        }
    }
    Ok(())
}

pub fn dataset_to_csv(frames: &[DatasetFrame]) -> String {
    let mut out = String::new();
    out.push_str(DATASET_HEADER);
    out.push('\n');
    out.push_str("family,parameter,terrain_seed,x,y,z,pitch,yaw");
    for k in 0..NUM_RAYS {
        out.push_str(&format!(",r{k:03}"));
    }
    out.push('\n');
    for f in frames {
        let [x, y, z] = f.pose.position;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            f.family, f.parameter, f.terrain_seed, x, y, z, f.pose.pitch, f.pose.yaw
        ));
        for d in &f.frame.distances {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<DatasetFrame>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(DATASET_HEADER) {
        return Err(Error::Parse("missing dataset header line".into()));
    }
    let columns = lines.next().ok_or_else(|| Error::Parse("missing column line".into()))?;
    if columns.split(',').count() != 8 + NUM_RAYS {
        return Err(Error::Parse("unexpected column count".into()));
    }
    let mut frames = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 + NUM_RAYS {
            return Err(Error::Parse(format!("row {n}: expected {} cells", 8 + NUM_RAYS)));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {n}: {e}")));
        let family: TerrainFamily = cells[0].parse()?;
        let terrain_seed = cells[2].trim().parse::<u64>().map_err(|e| Error::Parse(format!("row {n}: {e}")))?;
        let distances = cells[8..].iter().map(|c| num(c)).collect::<Result<Vec<_>>>()?;
        frames.push(DatasetFrame {
            family,
            parameter: num(cells[1])?,
            terrain_seed,
            pose: CameraPose {
                position: [num(cells[3])?, num(cells[4])?, num(cells[5])?],
                pitch: num(cells[6])?,
                yaw: num(cells[7])?,
            },
            frame: HeightmapFrame::new(distances)?,
        });
    }
    Ok(frames)
}
