//! Batches of independent episodes: the frequency x velocity grid and the
//! sensor-noise table.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::episode::{run_episode, EpisodeConfig, EpisodeSummary};
use crate::harness::schedule::{GaitCommand, TransitionSchedule};
use crate::terrain::{build_terrain, TerrainSpec};
use crate::{Error, Result};

pub const SWEEP_CSV_HEADER: &str =
    "frequency_hz,velocity_mps,trials,mean_velocity_mps,velocity_rmse,hamming_similarity";
pub const NOISE_CSV_HEADER: &str = "multiplier,trials,velocity_rmse,hamming_similarity,success_rate";
pub const DEFAULT_NOISE_CORRUPTION: f64 = 0.1;
/// Command used for the noise table.
pub const NOISE_COMMAND: GaitCommand = GaitCommand { frequency: 2.0, velocity: 0.6 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub frequency: f64,
    pub velocity: f64,
    pub trials: usize,
    pub mean_velocity: f64,
    pub velocity_rmse: f64,
    pub hamming: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub multiplier: f64,
    pub trials: usize,
    pub velocity_rmse: f64,
    pub hamming: f64,
    pub success_rate: f64,
}

/// Independent per-trial stream derived from the batch seed.
pub fn trial_rng(seed: u64, cell: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | trial as u64);
    rng
}

fn flat_trials(command: GaitCommand, config: &EpisodeConfig, trials: usize, seed: u64, cell: usize) -> Result<Vec<EpisodeSummary>> {
    let terrain = build_terrain(&TerrainSpec::flat())?;
    let schedule = TransitionSchedule::constant(command);
    (0..trials)
        .into_par_iter()
        .map(|t| run_episode(&terrain, &schedule, config, None, &mut trial_rng(seed, cell, t)).map(|l| l.summary))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Runs `trials` flat-ground episodes per (frequency, velocity) cell.
pub fn frequency_sweep(
    frequencies: &[f64],
    velocities: &[f64],
    trials: usize,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if frequencies.is_empty() || velocities.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("sweep needs frequencies, velocities and trials".into()));
    }
    let cells: Vec<(f64, f64)> = frequencies
        .iter()
        .flat_map(|&f| velocities.iter().map(move |&v| (f, v)))
        .collect();
    cells
        .iter()
        .enumerate()
        .map(|(cell, &(frequency, velocity))| {
            let runs = flat_trials(GaitCommand { frequency, velocity }, config, trials, seed, cell)?;
            Ok(SweepRow {
                frequency,
                velocity,
                trials,
                mean_velocity: mean(runs.iter().map(|r| r.mean_velocity)),
                velocity_rmse: mean(runs.iter().map(|r| r.velocity_rmse)),
                hamming: mean(runs.iter().map(|r| r.hamming)),
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.frequency, r.velocity, r.trials, r.mean_velocity, r.velocity_rmse, r.hamming
        );
    }
    out
}

/// Mock-pipeline metrics at each sensor-noise multiplier.
pub fn noise_eval(multipliers: &[f64], trials: usize, config: &EpisodeConfig, seed: u64) -> Result<Vec<NoiseRow>> {
    if multipliers.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("noise evaluation needs multipliers and trials".into()));
    }
    multipliers
        .iter()
        .enumerate()
        .map(|(cell, &m)| {
            let mut cfg = config.clone();
            cfg.sim.noise_multiplier = m;
            let runs = flat_trials(NOISE_COMMAND, &cfg, trials, seed, cell)?;
            Ok(NoiseRow {
                multiplier: m,
                trials,
                velocity_rmse: mean(runs.iter().map(|r| r.velocity_rmse)),
                hamming: mean(runs.iter().map(|r| r.hamming)),
                success_rate: mean(runs.iter().map(|r| f64::from(u8::from(r.success)))),
            })
        })
        .collect()
}

pub fn noise_to_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from(NOISE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.multiplier, r.trials, r.velocity_rmse, r.hamming, r.success_rate
        );
    }
    out
}

/// Default noise-table configuration: 10% contact corruption on top of sensor noise.
pub fn noise_config() -> EpisodeConfig {
    let mut cfg = EpisodeConfig::default();
    cfg.sim.corruption_rate = DEFAULT_NOISE_CORRUPTION;
    cfg
}
