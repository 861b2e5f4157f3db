//! Zero-mean Gaussian sensor noise, scaled by a level multiplier.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::perception::heightmap::{clip_range, HeightmapFrame};
use crate::perception::observation::{ObservationLayout, ObservationVector};

/// Standard deviations at the 1x level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub motor_position: f64,
    pub base_rpy: f64,
    pub base_angular_velocity: f64,
    pub heightmap_ray: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            motor_position: 0.01,
            base_rpy: 0.01,
            base_angular_velocity: 0.1,
            heightmap_ray: 0.005,
        }
    }
}

pub trait AddSensorNoise: Sized + Clone {
    fn add_sensor_noise<R: Rng + ?Sized>(&self, model: &NoiseModel, multiplier: f64, rng: &mut R) -> Self;
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

impl AddSensorNoise for HeightmapFrame {
    /// Perturbs every ray and re-clips to the sensor range.
    fn add_sensor_noise<R: Rng + ?Sized>(&self, model: &NoiseModel, multiplier: f64, rng: &mut R) -> Self {
        if multiplier == 0.0 {
            return self.clone();
        }
        let std = model.heightmap_ray * multiplier;
        HeightmapFrame {
            distances: self.distances.iter().map(|&d| clip_range(d + gaussian(rng, std))).collect(),
        }
    }
}

impl AddSensorNoise for ObservationVector {
    /// Perturbs the orientation, angular-velocity and joint-angle blocks; the
    /// latent, reference window and target velocity are left untouched.
    fn add_sensor_noise<R: Rng + ?Sized>(&self, model: &NoiseModel, multiplier: f64, rng: &mut R) -> Self {
        if multiplier == 0.0 {
            return self.clone();
        }
        let l = ObservationLayout::standard();
        let mut out = self.clone();
        let mut perturb = |range: std::ops::Range<usize>, std: f64| {
            for v in &mut out.values[range] {
                *v += gaussian(rng, std * multiplier);
            }
        };
        perturb(l.roll_pitch_history.clone(), model.base_rpy);
        perturb(l.angular_velocity_history.clone(), model.base_angular_velocity);
        perturb(l.yaw_rate..l.yaw_rate + 1, model.base_angular_velocity);
        perturb(l.joint_history.clone(), model.motor_position);
        out
    }
}
