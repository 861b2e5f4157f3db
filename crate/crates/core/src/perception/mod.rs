//! Heightmap sensing, its learned compression and the policy observation.

pub mod autoencoder;
pub mod dataset;
pub mod heightmap;
pub mod noise;
pub mod observation;

pub use autoencoder::{EncoderNetwork, TrainingConfig, TrainingReport, LATENT_DIM};
pub use heightmap::{sample_heightmap, CameraPose, HeightmapFrame};
pub use noise::{AddSensorNoise, NoiseModel};
pub use observation::{assemble_observation, ObservationVector, ProprioFrame, ProprioHistory};
