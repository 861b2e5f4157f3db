//! The live simulation driven by operator commands.
//!
//! A `Session` is a plain steppable value; the server wraps it in a timed
//! loop, tests drive it directly.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use perceptloco::cpg::{phase_of, wrap_angle, NUM_LEGS};
use perceptloco::gait::{Contact, CONTROL_DT};
use perceptloco::harness::{Command as SimCommand, Simulation, SimulationConfig, StepRecord};
use perceptloco::perception::heightmap::{sample_heightmap, COLS, ROWS};
use perceptloco::terrain::{build_terrain, TerrainModel, TerrainSpec};

use crate::protocol::{
    Command, DecimatedHeightmap, ErrorCode, ProtocolError, Snapshot, FREQUENCY_RANGE, PROTOCOL_VERSION,
};

pub const CONTROL_HZ: f64 = 1.0 / CONTROL_DT;
pub const DEFAULT_SNAPSHOT_HZ: f64 = 20.0;
/// Duration of the linear gait ramp (s).
pub const RAMP_SECONDS: f64 = 0.5;
/// Trailing window for the contact agreement (s).
pub const HAMMING_SECONDS: f64 = 2.0;
pub const HEIGHTMAP_STRIDE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub snapshot_hz: f64,
    pub terrain: TerrainSpec,
    pub sim: SimulationConfig,
    pub initial: SimCommand,
    pub seed: u64,
    pub heightmap: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            snapshot_hz: DEFAULT_SNAPSHOT_HZ,
            terrain: TerrainSpec::flat(),
            sim: SimulationConfig::default(),
            initial: SimCommand { frequency: 2.0, duty_factor: 0.5, velocity: [0.0, 0.0] },
            seed: 0,
            heightmap: true,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let invalid = |r: String| ProtocolError::new(ErrorCode::Invalid, r);
        if !(self.snapshot_hz > 0.0 && self.snapshot_hz <= CONTROL_HZ) {
            return Err(invalid(format!("snapshot rate must lie in (0, {CONTROL_HZ}] Hz, got {}", self.snapshot_hz)));
        }
        self.terrain.validate().map_err(|e| invalid(e.to_string()))?;
        self.sim.validate().map_err(|e| invalid(e.to_string()))?;
        perceptloco::harness::sim::validate_command(&self.initial).map_err(|e| invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Ramp {
    from: (f64, f64),
    to: (f64, f64),
    step: usize,
    steps: usize,
}

impl Ramp {
    /// Frequency and duty for the next control step, advancing the ramp.
    fn next(&mut self) -> (f64, f64) {
        self.step = (self.step + 1).min(self.steps);
        let s = self.step as f64 / self.steps as f64;
        (self.from.0 + s * (self.to.0 - self.from.0), self.from.1 + s * (self.to.1 - self.from.1))
    }

    fn done(&self) -> bool {
        self.step >= self.steps
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    terrain_spec: TerrainSpec,
    terrain: TerrainModel,
    sim: Simulation,
    /// Gait currently applied (mid-ramp values included).
    gait: (f64, f64),
    target_gait: (f64, f64),
    velocity: [f64; 2],
    ramp: Option<Ramp>,
    paused: bool,
    steps: u64,
    seq: u64,
    episode: u64,
    snapshot_credit: f64,
    contacts: VecDeque<([Contact; NUM_LEGS], [Contact; NUM_LEGS])>,
    /// Session time and unwrapped phase progress per leg.
    phase_track: VecDeque<(f64, [f64; NUM_LEGS])>,
    last_phase: Option<[f64; NUM_LEGS]>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        let terrain = build_terrain(&config.terrain).map_err(|e| ProtocolError::new(ErrorCode::Invalid, e.to_string()))?;
        let c = config.initial;
        let sim = Self::make_sim(&terrain, &config, c, config.seed)?;
        Ok(Self {
            terrain_spec: config.terrain,
            terrain,
            sim,
            gait: (c.frequency, c.duty_factor),
            target_gait: (c.frequency, c.duty_factor),
            velocity: c.velocity,
            ramp: None,
            paused: false,
            steps: 0,
            seq: 0,
            episode: 0,
            snapshot_credit: 0.0,
            contacts: VecDeque::new(),
            phase_track: VecDeque::new(),
            last_phase: None,
            config,
        })
    }

    fn make_sim(
        terrain: &TerrainModel,
        config: &SessionConfig,
        command: SimCommand,
        seed: u64,
    ) -> Result<Simulation, ProtocolError> {
        Simulation::new(terrain.clone(), config.sim.clone(), command, None, seed)
            .map_err(|e| ProtocolError::new(ErrorCode::Invalid, e.to_string()))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn terrain_spec(&self) -> &TerrainSpec {
        &self.terrain_spec
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Session time (s), monotone over the session's life.
    pub fn time(&self) -> f64 {
        self.steps as f64 * CONTROL_DT
    }

    pub fn is_ramping(&self) -> bool {
        self.ramp.is_some()
    }

    fn sim_command(&self) -> SimCommand {
        SimCommand { frequency: self.gait.0, duty_factor: self.gait.1, velocity: self.velocity }
    }

    /// Applies a validated command between control steps.
    pub fn apply(&mut self, command: &Command) -> Result<(), ProtocolError> {
        command.validate()?;
        match *command {
            Command::SetGait { frequency, duty } => {
                let target = (frequency, duty.unwrap_or(self.target_gait.1));
                self.target_gait = target;
                let steps = (RAMP_SECONDS / CONTROL_DT).round() as usize;
                self.ramp = (target != self.gait).then_some(Ramp { from: self.gait, to: target, step: 0, steps });
            }
            Command::SetVelocity { vx, vy } => self.velocity = [vx, vy],
            Command::SetTerrain { .. } => {
                let spec = command.terrain_spec().expect("set_terrain has a spec");
                let terrain = build_terrain(&spec).map_err(|e| ProtocolError::new(ErrorCode::Invalid, e.to_string()))?;
                self.terrain_spec = spec;
                self.terrain = terrain;
                self.restart()?;
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => self.restart()?,
        }
        Ok(())
    }

    /// New robot at the start line with the target gait; session time keeps going.
    fn restart(&mut self) -> Result<(), ProtocolError> {
        self.gait = self.target_gait;
        self.ramp = None;
        let seed = self.config.seed.wrapping_add(self.episode + 1);
        self.sim = Self::make_sim(&self.terrain, &self.config, self.sim_command(), seed)?;
        self.episode += 1;
        self.contacts.clear();
        self.phase_track.clear();
        self.last_phase = None;
        Ok(())
    }

    /// One control step; returns a snapshot when one is due.
    ///
    /// Nothing happens while paused. A fall restarts the robot.
    pub fn tick(&mut self) -> Result<Option<Snapshot>, ProtocolError> {
        if self.paused {
            return Ok(None);
        }
        if let Some(ramp) = &mut self.ramp {
            self.gait = ramp.next();
            if ramp.done() {
                self.gait = self.target_gait;
                self.ramp = None;
            }
        }
        let rec = self
            .sim
            .step(self.sim_command())
            .map_err(|e| ProtocolError::new(ErrorCode::Invalid, e.to_string()))?;
        self.steps += 1;
        self.track(&rec);
        self.snapshot_credit += self.config.snapshot_hz / CONTROL_HZ;
        let snapshot = if self.snapshot_credit >= 1.0 - 1e-9 {
            self.snapshot_credit -= 1.0;
            Some(self.snapshot(&rec))
        } else {
            None
        };
        if rec.terminated {
            self.restart()?;
        }
        Ok(snapshot)
    }

    fn track(&mut self, rec: &StepRecord) {
        let window = (HAMMING_SECONDS / CONTROL_DT).round() as usize;
        self.contacts.push_back((rec.reference, rec.executed));
        while self.contacts.len() > window {
            self.contacts.pop_front();
        }
        // Phase decreases as the oscillators turn clockwise.
        let phases: [f64; NUM_LEGS] = std::array::from_fn(|i| phase_of(&rec.oscillators[i]).unwrap_or(0.0));
        let progress = match (self.last_phase, self.phase_track.back()) {
            (Some(prev), Some(&(_, acc))) => std::array::from_fn(|i| acc[i] + wrap_angle(prev[i] - phases[i])),
            _ => [0.0; NUM_LEGS],
        };
        self.last_phase = Some(phases);
        // oscillator states are recorded at the start of the step
        self.phase_track.push_back((self.time() - CONTROL_DT, progress));
        let keep = (1.0 / FREQUENCY_RANGE.0 / CONTROL_DT).ceil() as usize + 2;
        while self.phase_track.len() > keep {
            self.phase_track.pop_front();
        }
    }

    /// Inverse of the time the legs took to complete their latest full cycle.
    ///
    /// The cycle start is interpolated between control steps. `None` until
    /// every leg has completed a cycle since the last restart.
    pub fn measured_frequency(&self) -> Option<f64> {
        let &(t_now, now) = self.phase_track.back()?;
        let mut sum = 0.0;
        for leg in 0..NUM_LEGS {
            let goal = now[leg] - TAU;
            let mut later = (t_now, now[leg]);
            let mut found = None;
            for &(t, p) in self.phase_track.iter().rev().skip(1) {
                if p[leg] <= goal {
                    let s = (later.1 - goal) / (later.1 - p[leg]);
                    found = Some(later.0 - s * (later.0 - t));
                    break;
                }
                later = (t, p[leg]);
            }
            sum += 1.0 / (t_now - found?);
        }
        Some(sum / NUM_LEGS as f64)
    }

    pub fn hamming(&self) -> f64 {
        if self.contacts.is_empty() {
            return 1.0;
        }
        let equal: usize = self
            .contacts
            .iter()
            .map(|(r, e)| r.iter().zip(e).filter(|(a, b)| a == b).count())
            .sum();
        equal as f64 / (self.contacts.len() * NUM_LEGS) as f64
    }

    fn heightmap(&self) -> Option<DecimatedHeightmap> {
        if !self.config.heightmap {
            return None;
        }
        let frame = sample_heightmap(&self.terrain, &self.sim.camera_pose()).ok()?;
        let s = HEIGHTMAP_STRIDE;
        let distances = (0..ROWS)
            .step_by(s)
            .flat_map(|r| (0..COLS).step_by(s).map(move |c| (r, c)))
            .map(|(r, c)| frame.distances[r * COLS + c])
            .collect();
        Some(DecimatedHeightmap { rows: ROWS.div_ceil(s), cols: COLS.div_ceil(s), stride: s, distances })
    }

    fn snapshot(&mut self, rec: &StepRecord) -> Snapshot {
        self.seq += 1;
        Snapshot {
            version: PROTOCOL_VERSION,
            seq: self.seq,
            time: self.time(),
            episode: self.episode,
            position: rec.position,
            oscillators: rec.oscillators.map(|s| [s.x, s.y]),
            reference_contacts: rec.reference,
            executed_contacts: rec.executed,
            commanded_velocity: rec.command.velocity,
            measured_velocity: rec.velocity,
            commanded_frequency: rec.command.frequency,
            commanded_duty: rec.command.duty_factor,
            measured_frequency: self.measured_frequency(),
            reward: rec.reward,
            hamming: self.hamming(),
            heightmap: self.heightmap(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(snapshot_hz: f64) -> Session {
        Session::new(SessionConfig { snapshot_hz, ..Default::default() }).unwrap()
    }

    fn run(s: &mut Session, steps: usize) -> Vec<Snapshot> {
        (0..steps).filter_map(|_| s.tick().unwrap()).collect()
    }

    #[test]
    fn snapshot_rate_follows_configuration() {
        for (hz, expected) in [(20.0, 40), (40.0, 80), (10.0, 20), (15.0, 30)] {
            let mut s = session(hz);
            assert_eq!(run(&mut s, 80).len(), expected, "{hz} Hz");
        }
    }

    #[test]
    fn ramp_is_linear_over_half_a_second() {
        let mut s = session(40.0);
        run(&mut s, 10);
        s.apply(&Command::SetGait { frequency: 3.0, duty: Some(0.6) }).unwrap();
        let snaps = run(&mut s, 30);
        for (k, snap) in snaps.iter().take(20).enumerate() {
            let a = (k + 1) as f64 / 20.0;
            assert!((snap.commanded_frequency - (2.0 + a)).abs() < 1e-12);
            assert!((snap.commanded_duty - (0.5 + 0.1 * a)).abs() < 1e-12);
        }
        assert!(snaps[19..].iter().all(|x| x.commanded_frequency == 3.0 && x.commanded_duty == 0.6));
        assert!(!s.is_ramping());
    }

    #[test]
    fn measured_frequency_settles_within_a_second() {
        let mut s = session(40.0);
        run(&mut s, 80);
        let f0 = s.measured_frequency().unwrap();
        assert!((f0 - 2.0).abs() / 2.0 < 0.01, "{f0}");
        s.apply(&Command::SetGait { frequency: 2.5, duty: None }).unwrap();
        let snaps = run(&mut s, 40);
        let f = snaps.last().unwrap().measured_frequency.unwrap();
        assert!((f - 2.5).abs() / 2.5 < 0.02, "{f}");
    }

    #[test]
    fn velocity_step_settles_after_two_seconds() {
        let mut s = session(40.0);
        s.apply(&Command::SetVelocity { vx: 0.6, vy: 0.0 }).unwrap();
        let snaps = run(&mut s, 80);
        let v = snaps.last().unwrap().measured_velocity[0];
        assert!((v - 0.6).abs() / 0.6 < 0.01, "{v}");
    }

    #[test]
    fn pause_halts_time_and_snapshots() {
        let mut s = session(20.0);
        let before = run(&mut s, 10);
        s.apply(&Command::Pause).unwrap();
        assert!(run(&mut s, 50).is_empty());
        assert_eq!(s.time(), 10.0 * CONTROL_DT);
        s.apply(&Command::Resume).unwrap();
        let after = run(&mut s, 10);
        let gap = after[0].time - before.last().unwrap().time;
        assert!(gap <= 2.0 * CONTROL_DT + 1e-12, "{gap}");
        assert!(after[0].seq == before.last().unwrap().seq + 1);
    }

    #[test]
    fn reset_and_terrain_keep_clock_and_sequence_monotone() {
        let mut s = session(40.0);
        s.apply(&Command::SetVelocity { vx: 0.5, vy: 0.0 }).unwrap();
        let mut all = run(&mut s, 40);
        s.apply(&Command::Reset).unwrap();
        all.extend(run(&mut s, 40));
        s.apply(&Command::SetTerrain {
            family: perceptloco::terrain::TerrainFamily::Stairs,
            parameter: 0.05,
            seed: 0,
        })
        .unwrap();
        all.extend(run(&mut s, 40));
        assert!(all.windows(2).all(|w| w[1].seq > w[0].seq && w[1].time > w[0].time));
        assert_eq!(all.last().unwrap().episode, 2);
        assert!(all[40].position[0] < all[39].position[0]);
        assert_eq!(s.terrain_spec().family, perceptloco::terrain::TerrainFamily::Stairs);
    }

    #[test]
    fn ramp_never_chatters_contacts() {
        let mut s = session(40.0);
        let mut rows = Vec::new();
        for target in [4.0, 0.5, 3.0, 1.0] {
            s.apply(&Command::SetGait { frequency: target, duty: None }).unwrap();
            rows.extend(run(&mut s, 60).into_iter().map(|x| x.reference_contacts));
        }
        for leg in 0..NUM_LEGS {
            let col: Vec<Contact> = rows.iter().map(|r| r[leg]).collect();
            let edges: Vec<usize> = (1..col.len()).filter(|&k| col[k] != col[k - 1]).collect();
            let shortest = edges.windows(2).map(|w| w[1] - w[0]).min().unwrap();
            assert!(shortest >= 3, "leg {leg}: run of {shortest} steps");
        }
    }

    #[test]
    fn rejected_commands_leave_state_untouched() {
        let mut s = session(20.0);
        let e = s.apply(&Command::SetGait { frequency: 9.0, duty: None }).unwrap_err();
        assert_eq!(e.code, ErrorCode::OutOfRange);
        assert!(!s.is_ramping());
        run(&mut s, 4);
        assert_eq!(s.simulation().command().frequency, 2.0);
    }

    #[test]
    fn heightmap_is_decimated() {
        let mut s = session(20.0);
        let snap = run(&mut s, 2).pop().unwrap();
        let h = snap.heightmap.unwrap();
        assert_eq!((h.rows, h.cols), (6, 8));
        assert_eq!(h.distances.len(), 48);
        assert!(h.distances.iter().all(|d| d.is_finite() && *d > 0.0));
    }

    #[test]
    fn hamming_tracks_corruption() {
        let mut cfg = SessionConfig { snapshot_hz: 40.0, ..Default::default() };
        cfg.sim.corruption_rate = 0.25;
        let mut s = Session::new(cfg).unwrap();
        let h = run(&mut s, 400).last().unwrap().hamming;
        assert!((h - 0.75).abs() < 0.06, "{h}");
    }
}
