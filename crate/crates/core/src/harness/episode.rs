//! Scheduled episodes on the mock robot and their logs.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cpg::{LEG_NAMES, NUM_LEGS};
use crate::gait::{hamming_similarity, Contact, ContactTrajectory, CONTROL_DT};
use crate::harness::schedule::TransitionSchedule;
use crate::harness::sim::{Command, Simulation, SimulationConfig};
use crate::perception::autoencoder::EncoderNetwork;
use crate::perception::observation::OBSERVATION_LEN;
use crate::reward::RewardBreakdown;
use crate::terrain::TerrainModel;
use crate::{Error, Result};

pub const MAX_EPISODE_STEPS: usize = 1000;
/// Distance past the obstacle that counts as getting across (m).
pub const GOAL_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub sim: SimulationConfig,
    pub max_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { sim: SimulationConfig::default(), max_steps: MAX_EPISODE_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub time: f64,
    pub x: f64,
    pub command_frequency: f64,
    pub command_velocity: f64,
    pub body_velocity: f64,
    pub roll: f64,
    pub pitch: f64,
    pub reference: [Contact; NUM_LEGS],
    pub executed: [Contact; NUM_LEGS],
    pub reward: RewardBreakdown,
    pub observation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub velocity_rmse: f64,
    pub hamming: f64,
    pub success: bool,
    pub steps: usize,
    pub mean_velocity: f64,
    pub final_x: f64,
    pub terminated_early: bool,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<EpisodeStep>,
    pub summary: EpisodeSummary,
}

/// Scheduled episode from the terrain's start line.
///
/// Episode failure (falling, not reaching the goal) is recorded in the
/// summary; only configuration problems are errors.
pub fn run_episode<R: Rng + ?Sized>(
    terrain: &TerrainModel,
    schedule: &TransitionSchedule,
    config: &EpisodeConfig,
    encoder: Option<&EncoderNetwork>,
    rng: &mut R,
) -> Result<EpisodeLog> {
    schedule.validate()?;
    if config.max_steps == 0 || config.max_steps > MAX_EPISODE_STEPS {
        return Err(Error::InvalidParameter(format!(
            "episode length must lie in 1..={MAX_EPISODE_STEPS}, got {}",
            config.max_steps
        )));
    }
    let command_at = |x: f64| {
        let c = schedule.command(x);
        Command { frequency: c.frequency, duty_factor: config.sim.duty_factor, velocity: [c.velocity, 0.0] }
    };
    let seed: u64 = rng.random();
    let mut sim = Simulation::new(
        terrain.clone(),
        config.sim.clone(),
        command_at(config.sim.start_x),
        encoder.cloned(),
        seed,
    )?;
    let goal = terrain.obstacle_span().map_or(config.sim.start_x, |(_, end)| end) + GOAL_MARGIN;
    let mut steps = Vec::with_capacity(config.max_steps);
    let mut reached = false;
    for _ in 0..config.max_steps {
        let x = sim.robot().position[0];
        let rec = sim.step(command_at(x))?;
        reached |= rec.position[0] >= goal;
        steps.push(EpisodeStep {
            time: rec.step as f64 * CONTROL_DT,
            x: rec.position[0],
            command_frequency: rec.command.frequency,
            command_velocity: rec.command.velocity[0],
            body_velocity: rec.velocity[0],
            roll: rec.roll,
            pitch: rec.pitch,
            reference: rec.reference,
            executed: rec.executed,
            reward: rec.reward,
            observation: rec.observation.values,
        });
        if rec.terminated {
            break;
        }
    }
    let summary = summarize(&steps, reached && !sim.is_terminated(), sim.is_terminated())?;
    Ok(EpisodeLog { steps, summary })
}

fn summarize(steps: &[EpisodeStep], success: bool, terminated_early: bool) -> Result<EpisodeSummary> {
    let n = steps.len() as f64;
    let sq: f64 = steps.iter().map(|s| (s.body_velocity - s.command_velocity).powi(2)).sum();
    let reference = ContactTrajectory::new(steps.iter().map(|s| s.reference).collect(), CONTROL_DT, 0.0)?;
    let executed = ContactTrajectory::new(steps.iter().map(|s| s.executed).collect(), CONTROL_DT, 0.0)?;
    Ok(EpisodeSummary {
        velocity_rmse: (sq / n).sqrt(),
        hamming: hamming_similarity(&reference, &executed)?,
        success,
        steps: steps.len(),
        mean_velocity: steps.iter().map(|s| s.body_velocity).sum::<f64>() / n,
        final_x: steps.last().map_or(0.0, |s| s.x),
        terminated_early,
        total_reward: steps.iter().map(|s| s.reward.total).sum(),
    })
}

pub fn episode_csv_header() -> String {
    let mut h = String::from(
        "step,t,x,cmd_frequency,cmd_velocity,body_velocity,roll,pitch",
    );
    for prefix in ["ref", "exe"] {
        for leg in LEG_NAMES {
            let _ = write!(h, ",{prefix}_{leg}");
        }
    }
    h.push_str(",r_v,r_s,r_f,r_e,r_total");
    for k in 0..OBSERVATION_LEN {
        let _ = write!(h, ",obs{k:03}");
    }
    h
}

impl EpisodeLog {
    /// Floats use the shortest representation that reads back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = episode_csv_header();
        out.push('\n');
        for (k, s) in self.steps.iter().enumerate() {
            let _ = write!(
                out,
                "{k},{},{},{},{},{},{},{}",
                s.time, s.x, s.command_frequency, s.command_velocity, s.body_velocity, s.roll, s.pitch
            );
            for c in s.reference.iter().chain(&s.executed) {
                let _ = write!(out, ",{c}");
            }
            let r = &s.reward;
            let _ = write!(out, ",{},{},{},{},{}", r.r_v, r.r_s, r.r_f, r.r_e, r.total);
            for v in &s.observation {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::schedule::GaitCommand;
    use crate::reward::RewardWeights;
    use crate::terrain::{build_terrain, TerrainSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat() -> TerrainModel {
        build_terrain(&TerrainSpec::flat()).unwrap()
    }

    fn constant(f: f64, v: f64) -> TransitionSchedule {
        TransitionSchedule::constant(GaitCommand { frequency: f, velocity: v })
    }

    #[test]
    fn clean_episode_tracks_velocity() {
        let log = run_episode(&flat(), &constant(2.0, 0.6), &EpisodeConfig::default(), None, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(log.steps.len(), MAX_EPISODE_STEPS);
        assert_eq!(log.summary.hamming, 1.0);
        let at_2s = log.steps[79].body_velocity;
        assert!((at_2s - 0.6).abs() / 0.6 < 0.01, "{at_2s}");
        assert!(log.summary.velocity_rmse < 0.1);
        for (k, s) in log.steps.iter().enumerate() {
            assert_eq!(s.time, k as f64 * 0.025);
        }
    }

    #[test]
    fn corruption_sets_similarity() {
        let cfg = EpisodeConfig {
            sim: SimulationConfig { corruption_rate: 0.2, ..Default::default() },
            ..Default::default()
        };
        let log = run_episode(&flat(), &constant(2.0, 0.6), &cfg, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((log.summary.hamming - 0.8).abs() < 0.03, "{}", log.summary.hamming);
    }

    #[test]
    fn rewards_reconstruct_from_components() {
        let cfg = EpisodeConfig {
            sim: SimulationConfig { noise_multiplier: 1.0, corruption_rate: 0.1, ..Default::default() },
            max_steps: 300,
        };
        let log = run_episode(&flat(), &constant(2.5, 0.8), &cfg, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let w = RewardWeights::default();
        for s in &log.steps {
            let r = s.reward;
            assert_eq!(r.total, RewardBreakdown::weighted_total(&w, r.r_v, r.r_s, r.r_f, r.r_e));
        }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let t = build_terrain(&TerrainSpec::stairs(0.05)).unwrap();
        let s = TransitionSchedule::for_terrain(&t);
        let cfg = EpisodeConfig {
            sim: SimulationConfig { noise_multiplier: 5.0, corruption_rate: 0.1, ..Default::default() },
            max_steps: 200,
        };
        let a = run_episode(&t, &s, &cfg, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = run_episode(&t, &s, &cfg, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = run_episode(&t, &s, &cfg, None, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn obstacle_episode_follows_schedule() {
        let t = build_terrain(&TerrainSpec::hurdles(0.05)).unwrap();
        let s = TransitionSchedule::for_terrain(&t);
        let log = run_episode(&t, &s, &EpisodeConfig::default(), None, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!(log.summary.success, "{:?}", log.summary);
        // the command logged at a step is the schedule at the position before it
        let mut prev_x = 0.0;
        for st in &log.steps {
            let c = s.command(prev_x);
            assert_eq!((st.command_frequency, st.command_velocity), (c.frequency, c.velocity));
            prev_x = st.x;
        }
        let slowest = log.steps.iter().map(|s| s.command_frequency).fold(f64::INFINITY, f64::min);
        assert_eq!(slowest, 2.0);
    }

    #[test]
    fn csv_has_documented_shape() {
        let cfg = EpisodeConfig { max_steps: 5, ..Default::default() };
        let log = run_episode(&flat(), &constant(2.0, 0.6), &cfg, None, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        let cols = lines[0].split(',').count();
        assert_eq!(cols, 8 + 8 + 5 + OBSERVATION_LEN);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
        let json: serde_json::Value = serde_json::from_str(&log.summary_json().unwrap()).unwrap();
        for key in ["velocity_rmse", "hamming", "success", "steps"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn bad_length_is_a_configuration_error() {
        let cfg = EpisodeConfig { max_steps: 1001, ..Default::default() };
        assert!(run_episode(&flat(), &constant(2.0, 0.6), &cfg, None, &mut ChaCha8Rng::seed_from_u64(8)).is_err());
    }
}
