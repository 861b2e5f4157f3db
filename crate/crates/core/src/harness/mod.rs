//! Desk-scale episodes on a mock kinematic robot.

pub mod episode;
pub mod schedule;
pub mod sim;
pub mod sweep;

pub use episode::{run_episode, EpisodeConfig, EpisodeLog, EpisodeStep, EpisodeSummary, MAX_EPISODE_STEPS};
pub use schedule::{schedule_command, GaitCommand, TransitionSchedule, Zone};
pub use sim::{Command, MockParameters, MockRobotState, Simulation, SimulationConfig, StepRecord};
pub use sweep::{frequency_sweep, noise_eval, NoiseRow, SweepRow};
