//! Mock kinematic robot driven by the CPG network.
//!
//! The robot has no dynamics beyond first-order lags. It exists so that every
//! metric pipeline (contacts, rewards, observations) runs end to end with a
//! known ground truth. Sensor noise reaches the behaviour through the policy
//! stand-in: the perceived pitch-rate error perturbs the commanded velocity and
//! each thigh channel's error perturbs the stance decision of its leg.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuation::{pd_torque, ActionPipelineConfig, ActionPipelineState, JointGains};
use crate::cpg::{GaitParameters, HopfParameters, OscillatorNetwork, OscillatorState, NUM_LEGS};
use crate::gait::{decode_contacts, inner_substeps, Contact, ReferenceWindow, CONTROL_DT, WINDOW_OFFSETS};
use crate::perception::autoencoder::{EncoderNetwork, LATENT_DIM};
use crate::perception::heightmap::{sample_heightmap, CameraPose, HeightmapFrame, BASE_HEIGHT, CAMERA_FORWARD_OFFSET, NOMINAL_PITCH};
use crate::perception::noise::{AddSensorNoise, NoiseModel};
use crate::perception::observation::{
    assemble_observation, ObservationLayout, ObservationVector, ProprioFrame, ProprioHistory, HISTORY_DEPTH,
};
use crate::reward::{total_reward, Quaternion, RewardBreakdown, RewardInputs, RewardWeights, VelocityRewardParams, NUM_JOINTS};
use crate::terrain::TerrainModel;
use crate::{Error, Result};

pub const BODY_LENGTH: f64 = 0.366;
pub const BODY_WIDTH: f64 = 0.2;
/// Standing joint angles per leg: hip, thigh, knee (rad).
pub const DEFAULT_LEG_POSE: [f64; 3] = [0.0, 0.8, -1.5];

/// Mock dynamics constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockParameters {
    /// Body velocity time constant (s).
    pub velocity_lag: f64,
    /// Joint angle time constant (s).
    pub joint_lag: f64,
    /// Velocity disturbance per rad/s of perceived pitch-rate error.
    pub velocity_noise_gain: f64,
    /// Thigh swing amplitude of the policy stand-in (rad).
    pub thigh_amplitude: f64,
    /// Knee flexion during swing (rad).
    pub knee_lift: f64,
    /// Largest distance covered per gait cycle (m); `None` disables the cap.
    pub stride_limit: Option<f64>,
    /// Early termination when |roll| or |pitch| exceeds this (rad).
    pub termination_angle: f64,
}

impl Default for MockParameters {
    fn default() -> Self {
        Self {
            velocity_lag: 0.3,
            joint_lag: 0.05,
            velocity_noise_gain: 0.5,
            thigh_amplitude: 0.3,
            knee_lift: 0.3,
            stride_limit: Some(0.45),
            termination_angle: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub duty_factor: f64,
    pub hopf: HopfParameters,
    pub coupling_gain: f64,
    pub noise_multiplier: f64,
    pub corruption_rate: f64,
    pub noise: NoiseModel,
    pub mock: MockParameters,
    pub weights: RewardWeights,
    pub velocity_params: VelocityRewardParams,
    pub gains: JointGains,
    pub pipeline: ActionPipelineConfig,
    pub start_x: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duty_factor: 0.5,
            hopf: HopfParameters::default(),
            coupling_gain: 1.0,
            noise_multiplier: 0.0,
            corruption_rate: 0.0,
            noise: NoiseModel::default(),
            mock: MockParameters::default(),
            weights: RewardWeights::default(),
            velocity_params: VelocityRewardParams::default(),
            gains: JointGains::default(),
            pipeline: ActionPipelineConfig::default(),
            start_x: 0.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.hopf.validate()?;
        self.weights.validate()?;
        GaitParameters::trot(2.0, self.duty_factor).validate()?;
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise multiplier {}", self.noise_multiplier)));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::InvalidParameter(format!("corruption rate {}", self.corruption_rate)));
        }
        let m = &self.mock;
        if !(m.velocity_lag > 0.0 && m.joint_lag > 0.0 && m.termination_angle > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid mock parameters {m:?}")));
        }
        if m.stride_limit.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("stride limit must be positive".into()));
        }
        Ok(())
    }
}

/// What the operator or the schedule asks for at one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub frequency: f64,
    pub duty_factor: f64,
    pub velocity: [f64; 2],
}

impl Command {
    pub fn gait(&self) -> GaitParameters {
        GaitParameters::trot(self.frequency, self.duty_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRobotState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub orientation: Quaternion,
    pub roll: f64,
    pub pitch: f64,
    pub joint_angles: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
}

impl MockRobotState {
    fn at_rest(x: f64, pose: [f64; NUM_JOINTS]) -> Self {
        Self {
            position: [x, 0.0],
            velocity: [0.0; 2],
            orientation: Quaternion::IDENTITY,
            roll: 0.0,
            pitch: 0.0,
            joint_angles: pose,
            joint_velocities: [0.0; NUM_JOINTS],
        }
    }
}

/// One control step as seen by loggers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub command: Command,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub roll: f64,
    pub pitch: f64,
    pub oscillators: [OscillatorState; NUM_LEGS],
    pub reference: [Contact; NUM_LEGS],
    pub executed: [Contact; NUM_LEGS],
    pub reward: RewardBreakdown,
    pub observation: ObservationVector,
    pub heightmap: Option<HeightmapFrame>,
    pub terminated: bool,
}

/// Network copy running `WINDOW_OFFSETS.last()` steps ahead under the current command.
#[derive(Debug, Clone)]
struct Lookahead {
    net: OscillatorNetwork,
    rows: VecDeque<[Contact; NUM_LEGS]>,
}

const HORIZON: usize = WINDOW_OFFSETS[WINDOW_OFFSETS.len() - 1];

impl Lookahead {
    fn build(main: &OscillatorNetwork, substeps: usize) -> Result<Self> {
        let mut s = Self { net: main.clone(), rows: VecDeque::with_capacity(HORIZON + 1) };
        s.rows.push_back(decode_contacts(&s.net.states)?);
        for _ in 0..HORIZON {
            s.push(substeps)?;
        }
        Ok(s)
    }

    fn push(&mut self, substeps: usize) -> Result<()> {
        for _ in 0..substeps {
            self.net.step(crate::cpg::INNER_DT)?;
        }
        self.rows.push_back(decode_contacts(&self.net.states)?);
        Ok(())
    }

    fn advance(&mut self, substeps: usize) -> Result<()> {
        self.rows.pop_front();
        self.push(substeps)
    }

    fn window(&self) -> ReferenceWindow {
        ReferenceWindow::from_rows(&WINDOW_OFFSETS.map(|o| self.rows[o]))
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimulationConfig,
    terrain: TerrainModel,
    encoder: Option<EncoderNetwork>,
    network: OscillatorNetwork,
    lookahead: Lookahead,
    robot: MockRobotState,
    pipeline: ActionPipelineState,
    history: ProprioHistory,
    default_pose: [f64; NUM_JOINTS],
    command: Command,
    substeps: usize,
    step: usize,
    terminated: bool,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(
        terrain: TerrainModel,
        config: SimulationConfig,
        initial: Command,
        encoder: Option<EncoderNetwork>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        validate_command(&initial)?;
        let substeps = inner_substeps(CONTROL_DT)?;
        let network = OscillatorNetwork::synchronized(config.hopf, initial.gait(), config.coupling_gain)?;
        let lookahead = Lookahead::build(&network, substeps)?;
        let default_pose: [f64; NUM_JOINTS] = std::array::from_fn(|j| DEFAULT_LEG_POSE[j % 3]);
        let pipeline = ActionPipelineState::new(default_pose, config.pipeline)?;
        let robot = MockRobotState::at_rest(config.start_x, default_pose);
        let mut sim = Self {
            config,
            terrain,
            encoder,
            network,
            lookahead,
            robot,
            pipeline,
            history: ProprioHistory::new(),
            default_pose,
            command: initial,
            substeps,
            step: 0,
            terminated: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        sim.update_attitude();
        for _ in 0..HISTORY_DEPTH {
            sim.history.push(ProprioFrame::default());
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn terrain(&self) -> &TerrainModel {
        &self.terrain
    }

    pub fn robot(&self) -> &MockRobotState {
        &self.robot
    }

    pub fn network(&self) -> &OscillatorNetwork {
        &self.network
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * CONTROL_DT
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn set_noise(&mut self, multiplier: f64, corruption: f64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.noise_multiplier = multiplier;
        cfg.corruption_rate = corruption;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Pitch from the fore/aft ground height difference, roll from left/right.
    fn update_attitude(&mut self) {
        let [x, y] = self.robot.position;
        let (hl, hw) = (0.5 * BODY_LENGTH, 0.5 * BODY_WIDTH);
        let h = |dx: f64, dy: f64| self.terrain.height_at(x + dx, y + dy);
        let front = 0.5 * (h(hl, hw) + h(hl, -hw));
        let rear = 0.5 * (h(-hl, hw) + h(-hl, -hw));
        let left = 0.5 * (h(hl, hw) + h(-hl, hw));
        let right = 0.5 * (h(hl, -hw) + h(-hl, -hw));
        // nose-up is negative pitch about +y
        self.robot.pitch = -((front - rear) / BODY_LENGTH).atan();
        self.robot.roll = ((left - right) / BODY_WIDTH).atan();
        self.robot.orientation = Quaternion::from_euler(self.robot.roll, self.robot.pitch, 0.0);
    }

    pub fn camera_pose(&self) -> CameraPose {
        let [x, y] = self.robot.position;
        let cx = x + CAMERA_FORWARD_OFFSET;
        let ground = self.terrain.height_at(x, y).max(self.terrain.height_at(cx, y));
        CameraPose {
            position: [cx, y, ground + BASE_HEIGHT],
            pitch: NOMINAL_PITCH + self.robot.pitch,
            yaw: 0.0,
        }
    }

    /// Advances one 40 Hz control step under `command`.
    pub fn step(&mut self, command: Command) -> Result<StepRecord> {
        validate_command(&command)?;
        if self.terminated {
            return Err(Error::InvalidParameter("episode already terminated".into()));
        }
        if command.gait() != self.command.gait() {
            self.network.set_gait(command.gait())?;
            self.lookahead = Lookahead::build(&self.network, self.substeps)?;
        }
        self.command = command;
        let dt = CONTROL_DT;
        let m = self.config.noise_multiplier;
        let oscillators = self.network.states;
        let reference = decode_contacts(&oscillators)?;
        let window = self.lookahead.window();

        let (heightmap, latent) = match &self.encoder {
            Some(enc) => {
                let clean = sample_heightmap(&self.terrain, &self.camera_pose())?;
                let noisy = clean.add_sensor_noise(&self.config.noise, m, &mut self.rng);
                let latent = enc.encode(&noisy)?;
                (Some(noisy), latent)
            }
            None => (None, [0.0; LATENT_DIM]),
        };

        let prev = *self.history.latest().expect("history is pre-filled");
        let frame = ProprioFrame {
            linear_velocity: [self.robot.velocity[0], self.robot.velocity[1], 0.0],
            roll: self.robot.roll,
            pitch: self.robot.pitch,
            roll_rate: (self.robot.roll - prev.roll) / dt,
            pitch_rate: (self.robot.pitch - prev.pitch) / dt,
            yaw_rate: 0.0,
            joint_angles: self.robot.joint_angles,
        };
        self.history.push(frame);
        let target_velocity = command.velocity;
        let clean = assemble_observation(&self.history, &latent, &window, target_velocity)?;
        let observation = clean.add_sensor_noise(&self.config.noise, m, &mut self.rng);
        let layout = ObservationLayout::standard();
        let newest_rates = layout.angular_velocity_history.end - 2;
        let pitch_rate_error = observation.values[newest_rates + 1] - clean.values[newest_rates + 1];
        let newest_joints = layout.joint_history.end - NUM_JOINTS;
        let thigh_error = |leg: usize| {
            let k = newest_joints + 3 * leg + 1;
            observation.values[k] - clean.values[k]
        };

        // Policy stand-in: swing the thigh with the oscillator, flex the knee in swing.
        let mp = self.config.mock;
        let mut raw = self.default_pose;
        let mut executed = [0 as Contact; NUM_LEGS];
        for leg in 0..NUM_LEGS {
            let s = oscillators[leg];
            let thigh = mp.thigh_amplitude * s.y / self.config.hopf.mu + thigh_error(leg);
            raw[3 * leg + 1] += thigh;
            raw[3 * leg + 2] -= mp.knee_lift * (-s.y / self.config.hopf.mu).max(0.0);
            let mut c: Contact = if thigh > 0.0 { 1 } else { -1 };
            if self.config.corruption_rate > 0.0 && self.rng.random_bool(self.config.corruption_rate) {
                c = -c;
            }
            executed[leg] = c;
        }
        let target = self.pipeline.process(&raw).target;
        let q = self.robot.joint_angles;
        let qdot = self.robot.joint_velocities;
        let torques = pd_torque(&target, &q, &qdot, &self.config.gains);
        let joint_blend = 1.0 - (-dt / mp.joint_lag).exp();
        for j in 0..NUM_JOINTS {
            let next = q[j] + joint_blend * (target[j] - q[j]);
            self.robot.joint_velocities[j] = (next - q[j]) / dt;
            self.robot.joint_angles[j] = next;
        }

        let cap = mp.stride_limit.map_or(f64::INFINITY, |s| s * command.frequency);
        let speed = command.velocity[0].hypot(command.velocity[1]);
        let scale = if speed > cap { cap / speed } else { 1.0 };
        let blend = 1.0 - (-dt / mp.velocity_lag).exp();
        for (axis, v) in self.robot.velocity.iter_mut().enumerate() {
            let mut goal = command.velocity[axis] * scale;
            if axis == 0 {
                goal += mp.velocity_noise_gain * pitch_rate_error;
            }
            *v += blend * (goal - *v);
        }
        for axis in 0..2 {
            self.robot.position[axis] += self.robot.velocity[axis] * dt;
        }
        self.update_attitude();

        let reward = total_reward(
            &RewardInputs {
                velocity: self.robot.velocity,
                target_velocity,
                orientation: self.robot.orientation,
                reference_contacts: reference,
                contacts: executed,
                torques,
                joint_velocities: self.robot.joint_velocities,
            },
            &self.config.weights,
            &self.config.velocity_params,
        )
        .or_else(|e| match e {
            // standing still: no velocity term
            Error::ZeroTargetVelocity => Ok(zero_velocity_reward(self, reference, executed, &torques)?),
            other => Err(other),
        })?;

        for _ in 0..self.substeps {
            self.network.step(crate::cpg::INNER_DT)?;
        }
        self.lookahead.advance(self.substeps)?;

        let limit = mp.termination_angle;
        self.terminated = self.robot.roll.abs() > limit || self.robot.pitch.abs() > limit;
        let record = StepRecord {
            step: self.step,
            time: self.step as f64 * CONTROL_DT,
            command,
            position: self.robot.position,
            velocity: self.robot.velocity,
            roll: self.robot.roll,
            pitch: self.robot.pitch,
            oscillators,
            reference,
            executed,
            reward,
            observation,
            heightmap,
            terminated: self.terminated,
        };
        self.step += 1;
        Ok(record)
    }
}

fn zero_velocity_reward(
    sim: &Simulation,
    reference: [Contact; NUM_LEGS],
    executed: [Contact; NUM_LEGS],
    torques: &[f64; NUM_JOINTS],
) -> Result<RewardBreakdown> {
    use crate::reward::{contact_reward, energy_reward, stability_reward};
    let r_s = stability_reward(&sim.robot.orientation)?;
    let r_f = contact_reward(&reference, &executed)?;
    let r_e = energy_reward(torques, &sim.robot.joint_velocities);
    Ok(RewardBreakdown::from_terms(&sim.config.weights, 0.0, r_s, r_f, r_e))
}

pub fn validate_command(c: &Command) -> Result<()> {
    c.gait().validate()?;
    if !c.velocity.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite velocity {:?}", c.velocity)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{build_terrain, TerrainSpec};

    fn flat_sim(cfg: SimulationConfig, cmd: Command) -> Simulation {
        Simulation::new(build_terrain(&TerrainSpec::flat()).unwrap(), cfg, cmd, None, 1).unwrap()
    }

    fn cmd(f: f64, v: f64) -> Command {
        Command { frequency: f, duty_factor: 0.5, velocity: [v, 0.0] }
    }

    #[test]
    fn velocity_follows_first_order_lag() {
        let mut sim = flat_sim(SimulationConfig::default(), cmd(2.0, 0.6));
        for k in 1..=80 {
            let r = sim.step(cmd(2.0, 0.6)).unwrap();
            let t = k as f64 * CONTROL_DT;
            let expected = 0.6 * (1.0 - (-t / 0.3f64).exp());
            assert!((r.velocity[0] - expected).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn window_matches_realised_future_under_constant_command() {
        let mut sim = flat_sim(SimulationConfig::default(), cmd(2.5, 0.6));
        let records: Vec<StepRecord> = (0..80).map(|_| sim.step(cmd(2.5, 0.6)).unwrap()).collect();
        let l = ObservationLayout::standard();
        for t in 0..(80 - HORIZON) {
            let w = &records[t].observation.values[l.reference_window.clone()];
            for (k, off) in WINDOW_OFFSETS.iter().enumerate() {
                for leg in 0..NUM_LEGS {
                    assert_eq!(w[k * NUM_LEGS + leg], f64::from(records[t + off].reference[leg]));
                }
            }
        }
    }

    #[test]
    fn clean_contacts_follow_reference() {
        let mut sim = flat_sim(SimulationConfig::default(), cmd(2.0, 0.6));
        for _ in 0..200 {
            let r = sim.step(cmd(2.0, 0.6)).unwrap();
            assert_eq!(r.reference, r.executed);
            assert_eq!(r.reward.r_f, 1.0);
        }
    }

    #[test]
    fn stride_cap_limits_speed() {
        let mut sim = flat_sim(SimulationConfig::default(), cmd(1.5, 1.0));
        let mut last = 0.0;
        for _ in 0..200 {
            last = sim.step(cmd(1.5, 1.0)).unwrap().velocity[0];
        }
        assert!((last - 0.675).abs() < 1e-6, "{last}");
    }

    #[test]
    fn zero_velocity_command_is_accepted() {
        let mut sim = flat_sim(SimulationConfig::default(), cmd(2.0, 0.0));
        let r = sim.step(cmd(2.0, 0.0)).unwrap();
        assert_eq!(r.reward.r_v, 0.0);
    }
}
