//! Python bindings: oscillator networks, gait references, rewards, terrain
//! and heightmaps, the autoencoder, the mock harness and the steering session.

use perceptloco::actuation::{ActionPipelineConfig, ActionPipelineState};
use perceptloco::cpg::{GaitParameters, HopfParameters, OscillatorNetwork as CoreNetwork, INNER_DT, NUM_LEGS};
use perceptloco::gait::{self, Contact, ContactTrajectory, CONTROL_DT};
use perceptloco::harness::sim::{Command, Simulation as CoreSimulation, SimulationConfig, StepRecord};
use perceptloco::harness::sweep::{noise_config, noise_eval as core_noise_eval};
use perceptloco::harness::{run_episode as core_run_episode, EpisodeConfig, TransitionSchedule};
use perceptloco::perception::autoencoder::{fit, EncoderNetwork as CoreEncoder, TrainingConfig};
use perceptloco::perception::dataset::generate_dataset as core_generate_dataset;
use perceptloco::perception::heightmap::{
    sample_heightmap, CameraPose, HeightmapFrame, BASE_HEIGHT, CAMERA_FORWARD_OFFSET, NOMINAL_PITCH,
};
use perceptloco::reward::{self, Quaternion, RewardBreakdown, RewardInputs, RewardWeights, VelocityRewardParams, NUM_JOINTS};
use perceptloco::terrain::{build_terrain, TerrainFamily, TerrainModel, TerrainSpec};
use perceptloco::Error;
use perceptloco_steering::protocol::{CommandMessage, ServerMessage, PROTOCOL_VERSION};
use perceptloco_steering::session::{Session, SessionConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::ShapeMismatch(_)
        | Error::InvalidContact(_)
        | Error::OutOfRange { .. }
        | Error::Parse(_)
        | Error::ZeroTargetVelocity
        | Error::UndefinedPhase
        | Error::DegenerateQuaternion(_)
        | Error::CameraBelowGround { .. }
        | Error::InsufficientCycles(_)
        | Error::InsufficientHistory { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn trajectory(rows: Vec<[Contact; NUM_LEGS]>, dt: f64) -> PyResult<ContactTrajectory> {
    ContactTrajectory::new(rows, dt, 0.0).map_err(py_err)
}

fn breakdown<'py>(py: Python<'py>, r: &RewardBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("r_v", r.r_v)?;
    d.set_item("r_s", r.r_s)?;
    d.set_item("r_f", r.r_f)?;
    d.set_item("r_e", r.r_e)?;
    d.set_item("total", r.total)?;
    Ok(d)
}

/// Four coupled Hopf oscillators in trot order (FR, FL, RR, RL).
#[pyclass(module = "perceptloco_py")]
struct OscillatorNetwork {
    inner: CoreNetwork,
}

#[pymethods]
impl OscillatorNetwork {
    /// Starts on the limit cycle at the trot offsets, or at `states` if given.
    #[new]
    #[pyo3(signature = (frequency=2.0, duty=0.5, coupling=1.0, states=None))]
    fn new(frequency: f64, duty: f64, coupling: f64, states: Option<[(f64, f64); NUM_LEGS]>) -> PyResult<Self> {
        let hopf = HopfParameters::default();
        let gait = GaitParameters::trot(frequency, duty);
        let inner = match states {
            Some(s) => CoreNetwork::new(s.map(|(x, y)| perceptloco::cpg::OscillatorState::new(x, y)), hopf, gait, coupling),
            None => CoreNetwork::synchronized(hopf, gait, coupling),
        }
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn states(&self) -> Vec<(f64, f64)> {
        self.inner.states.iter().map(|s| (s.x, s.y)).collect()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    #[pyo3(signature = (dt=INNER_DT))]
    fn step(&mut self, dt: f64) -> PyResult<()> {
        self.inner.step(dt).map_err(py_err)
    }

    /// Integrates for `seconds` at the 1 ms inner step.
    fn advance(&mut self, seconds: f64) -> PyResult<()> {
        self.inner.advance(seconds, INNER_DT).map_err(py_err)
    }

    fn set_gait(&mut self, frequency: f64, duty: f64) -> PyResult<()> {
        self.inner.set_gait(GaitParameters::trot(frequency, duty)).map_err(py_err)
    }

    fn phases(&self) -> PyResult<[f64; NUM_LEGS]> {
        self.inner.phases().map_err(py_err)
    }

    fn contacts(&self) -> PyResult<[Contact; NUM_LEGS]> {
        gait::decode_contacts(&self.inner.states).map_err(py_err)
    }

    fn max_phase_error(&self) -> PyResult<f64> {
        self.inner.max_phase_error().map_err(py_err)
    }

    fn max_radius_error(&self) -> f64 {
        self.inner.max_radius_error()
    }
}

/// Contact rows (+1 stance, -1 swing) sampled at the control rate.
#[pyfunction]
#[pyo3(signature = (frequency, duty=0.5, horizon=200))]
fn generate_reference(frequency: f64, duty: f64, horizon: usize) -> PyResult<Vec<[Contact; NUM_LEGS]>> {
    let traj = gait::generate_reference(&GaitParameters::trot(frequency, duty), &HopfParameters::default(), horizon, CONTROL_DT)
        .map_err(py_err)?;
    Ok(traj.rows().to_vec())
}

/// Returns `(frequency_hz, duty_factor)`.
#[pyfunction]
#[pyo3(signature = (rows, dt=CONTROL_DT))]
fn measure_gait(rows: Vec<[Contact; NUM_LEGS]>, dt: f64) -> PyResult<(f64, f64)> {
    let m = gait::measure_gait(&trajectory(rows, dt)?).map_err(py_err)?;
    Ok((m.frequency, m.duty_factor))
}

#[pyfunction]
fn hamming_similarity(a: Vec<[Contact; NUM_LEGS]>, b: Vec<[Contact; NUM_LEGS]>) -> PyResult<f64> {
    gait::hamming_similarity(&trajectory(a, CONTROL_DT)?, &trajectory(b, CONTROL_DT)?).map_err(py_err)
}

/// Weighted reward terms for one step. `orientation` is `(w, x, y, z)`.
#[pyfunction]
#[pyo3(signature = (velocity, target_velocity, orientation, reference_contacts, contacts, torques, joint_velocities))]
fn total_reward<'py>(
    py: Python<'py>,
    velocity: [f64; 2],
    target_velocity: [f64; 2],
    orientation: (f64, f64, f64, f64),
    reference_contacts: [Contact; NUM_LEGS],
    contacts: [Contact; NUM_LEGS],
    torques: [f64; NUM_JOINTS],
    joint_velocities: [f64; NUM_JOINTS],
) -> PyResult<Bound<'py, PyDict>> {
    let (w, x, y, z) = orientation;
    let inputs = RewardInputs {
        velocity,
        target_velocity,
        orientation: Quaternion::new(w, x, y, z),
        reference_contacts,
        contacts,
        torques,
        joint_velocities,
    };
    let r = reward::total_reward(&inputs, &RewardWeights::default(), &VelocityRewardParams::default()).map_err(py_err)?;
    breakdown(py, &r)
}

/// Clip, rate limit and low-pass filter of raw joint offsets.
#[pyclass(module = "perceptloco_py")]
struct ActionPipeline {
    inner: ActionPipelineState,
}

#[pymethods]
impl ActionPipeline {
    #[new]
    fn new(default_pose: [f64; NUM_JOINTS]) -> PyResult<Self> {
        let inner = ActionPipelineState::new(default_pose, ActionPipelineConfig::default()).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Joint position targets for one control step.
    fn process(&mut self, raw: [f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        self.inner.process(&raw).target
    }
}

fn parse_family(name: &str) -> PyResult<TerrainFamily> {
    name.parse().map_err(py_err)
}

#[pyclass(module = "perceptloco_py", from_py_object)]
#[derive(Clone)]
struct Terrain {
    spec: TerrainSpec,
    model: TerrainModel,
}

#[pymethods]
impl Terrain {
    /// `family` is flat, platforms, hurdles, heightfield or stairs.
    #[new]
    #[pyo3(signature = (family="flat", parameter=None, seed=0))]
    fn new(family: &str, parameter: Option<f64>, seed: u64) -> PyResult<Self> {
        let fam = parse_family(family)?;
        let p = parameter.unwrap_or(if fam == TerrainFamily::Flat { 0.0 } else { 0.05 });
        let spec = TerrainSpec::with_defaults(fam, p, seed);
        let model = build_terrain(&spec).map_err(py_err)?;
        Ok(Self { spec, model })
    }

    #[getter]
    fn family(&self) -> String {
        self.spec.family.to_string()
    }

    #[getter]
    fn parameter(&self) -> f64 {
        self.spec.parameter
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        self.model.height_at(x, y)
    }

    fn obstacle_span(&self) -> Option<(f64, f64)> {
        self.model.obstacle_span()
    }

    /// 192 clipped ray distances (row-major 12 x 16) from the nominal camera
    /// of a robot standing at `(x, y)`.
    #[pyo3(signature = (x, y=0.0))]
    fn heightmap(&self, x: f64, y: f64) -> PyResult<Vec<f64>> {
        let cx = x + CAMERA_FORWARD_OFFSET;
        let ground = self.model.height_at(x, y).max(self.model.height_at(cx, y));
        let pose = CameraPose { position: [cx, y, ground + BASE_HEIGHT], pitch: NOMINAL_PITCH, yaw: 0.0 };
        Ok(sample_heightmap(&self.model, &pose).map_err(py_err)?.distances)
    }

    fn __repr__(&self) -> String {
        format!("Terrain({}, {})", self.spec.family, self.spec.parameter)
    }
}

/// Frames of a generated heightmap dataset covering all obstacle families.
#[pyfunction]
#[pyo3(signature = (count, seed=0))]
fn generate_dataset(count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let frames = core_generate_dataset(count, seed).map_err(py_err)?;
    Ok(frames.into_iter().map(|f| f.frame.distances).collect())
}

fn frame(distances: Vec<f64>) -> PyResult<HeightmapFrame> {
    HeightmapFrame::new(distances).map_err(py_err)
}

/// Heightmap autoencoder 192-128-64-32-64-128-192.
#[pyclass(module = "perceptloco_py", from_py_object)]
#[derive(Clone)]
struct EncoderNetwork {
    inner: CoreEncoder,
}

#[pymethods]
impl EncoderNetwork {
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn random(seed: u64) -> Self {
        Self { inner: CoreEncoder::random(&mut ChaCha8Rng::seed_from_u64(seed)) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreEncoder::from_json(text).map_err(py_err)?.0 })
    }

    /// Trains on `frames` and returns `(network, report)`.
    #[staticmethod]
    #[pyo3(signature = (frames, epochs=30, step_size=None, seed=0))]
    fn train<'py>(
        py: Python<'py>,
        frames: Vec<Vec<f64>>,
        epochs: usize,
        step_size: Option<f64>,
        seed: u64,
    ) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let frames = frames.into_iter().map(frame).collect::<PyResult<Vec<_>>>()?;
        let d = TrainingConfig::default();
        let config = TrainingConfig { epochs, step_size: step_size.unwrap_or(d.step_size), ..d };
        let (inner, report) = py
            .detach(|| fit(&frames, &config, &mut ChaCha8Rng::seed_from_u64(seed)))
            .map_err(py_err)?;
        let r = PyDict::new(py);
        r.set_item("train_curve", report.train_curve.clone())?;
        r.set_item("validation_curve", report.validation_curve.clone())?;
        r.set_item("final_step_size", report.final_step_size)?;
        Ok((Self { inner }, r))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json(None).map_err(py_err)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    #[getter]
    fn frozen(&self) -> bool {
        self.inner.is_frozen()
    }

    /// 32-dimensional latent code.
    fn encode(&self, distances: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.encode(&frame(distances)?).map_err(py_err)?.to_vec())
    }

    fn reconstruct(&self, distances: Vec<f64>) -> PyResult<Vec<f64>> {
        let pass = self.inner.forward(&frame(distances)?).map_err(py_err)?;
        let (mean, std) = self.inner.normalization();
        Ok(pass.reconstruction().iter().zip(mean.iter().zip(std)).map(|(r, (m, s))| r * s + m).collect())
    }

    /// Mean squared error on normalized inputs.
    fn loss(&self, distances: Vec<f64>) -> PyResult<f64> {
        self.inner.loss(&frame(distances)?).map_err(py_err)
    }
}

fn step_dict<'py>(py: Python<'py>, rec: &StepRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", rec.step)?;
    d.set_item("time", rec.time)?;
    d.set_item("position", rec.position)?;
    d.set_item("velocity", rec.velocity)?;
    d.set_item("roll", rec.roll)?;
    d.set_item("pitch", rec.pitch)?;
    d.set_item("oscillators", rec.oscillators.map(|s| (s.x, s.y)))?;
    d.set_item("reference", rec.reference)?;
    d.set_item("executed", rec.executed)?;
    d.set_item("reward", breakdown(py, &rec.reward)?)?;
    d.set_item("observation", rec.observation.values.clone())?;
    d.set_item("terminated", rec.terminated)?;
    Ok(d)
}

/// Mock robot stepped at 40 Hz under operator commands.
#[pyclass(module = "perceptloco_py")]
struct Simulation {
    inner: CoreSimulation,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (terrain=None, frequency=2.0, duty=0.5, velocity=(0.0, 0.0), noise=0.0, corruption=0.0, encoder=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        terrain: Option<Terrain>,
        frequency: f64,
        duty: f64,
        velocity: (f64, f64),
        noise: f64,
        corruption: f64,
        encoder: Option<EncoderNetwork>,
        seed: u64,
    ) -> PyResult<Self> {
        let terrain = match terrain {
            Some(t) => t.model,
            None => build_terrain(&TerrainSpec::flat()).map_err(py_err)?,
        };
        let config = SimulationConfig { noise_multiplier: noise, corruption_rate: corruption, ..Default::default() };
        let command = Command { frequency, duty_factor: duty, velocity: [velocity.0, velocity.1] };
        let inner = CoreSimulation::new(terrain, config, command, encoder.map(|e| e.inner), seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// One control step; omitted arguments keep the previous command.
    #[pyo3(signature = (frequency=None, duty=None, velocity=None))]
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        frequency: Option<f64>,
        duty: Option<f64>,
        velocity: Option<(f64, f64)>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let prev = self.inner.command();
        let command = Command {
            frequency: frequency.unwrap_or(prev.frequency),
            duty_factor: duty.unwrap_or(prev.duty_factor),
            velocity: velocity.map_or(prev.velocity, |(x, y)| [x, y]),
        };
        let rec = self.inner.step(command).map_err(py_err)?;
        step_dict(py, &rec)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn terminated(&self) -> bool {
        self.inner.is_terminated()
    }
}

/// Scheduled episode over a terrain's obstacle; returns the summary metrics.
#[pyfunction]
#[pyo3(signature = (terrain=None, steps=1000, noise=0.0, corruption=0.0, seed=0))]
fn run_episode<'py>(
    py: Python<'py>,
    terrain: Option<Terrain>,
    steps: usize,
    noise: f64,
    corruption: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let terrain = match terrain {
        Some(t) => t.model,
        None => build_terrain(&TerrainSpec::flat()).map_err(py_err)?,
    };
    let mut cfg = EpisodeConfig { max_steps: steps, ..Default::default() };
    cfg.sim.noise_multiplier = noise;
    cfg.sim.corruption_rate = corruption;
    let schedule = TransitionSchedule::for_terrain(&terrain);
    let log = py
        .detach(|| core_run_episode(&terrain, &schedule, &cfg, None, &mut ChaCha8Rng::seed_from_u64(seed)))
        .map_err(py_err)?;
    let s = log.summary;
    let d = PyDict::new(py);
    d.set_item("velocity_rmse", s.velocity_rmse)?;
    d.set_item("hamming", s.hamming)?;
    d.set_item("success", s.success)?;
    d.set_item("steps", s.steps)?;
    d.set_item("mean_velocity", s.mean_velocity)?;
    d.set_item("final_x", s.final_x)?;
    d.set_item("csv", log.to_csv())?;
    Ok(d)
}

/// Rows of `(multiplier, velocity_rmse, hamming)`.
#[pyfunction]
#[pyo3(signature = (multipliers, trials=5, steps=1000, seed=0))]
fn noise_eval(py: Python<'_>, multipliers: Vec<f64>, trials: usize, steps: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
    let cfg = EpisodeConfig { max_steps: steps, ..noise_config() };
    let rows = py.detach(|| core_noise_eval(&multipliers, trials, &cfg, seed)).map_err(py_err)?;
    Ok(rows.iter().map(|r| (r.multiplier, r.velocity_rmse, r.hamming)).collect())
}

/// Steering session driven by JSON protocol messages, without a socket.
#[pyclass(module = "perceptloco_py")]
struct SteeringSession {
    inner: Session,
}

#[pymethods]
impl SteeringSession {
    #[new]
    #[pyo3(signature = (snapshot_hz=20.0, seed=0))]
    fn new(snapshot_hz: f64, seed: u64) -> PyResult<Self> {
        let config = SessionConfig { snapshot_hz, seed, ..Default::default() };
        let inner = Session::new(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Applies one command message and returns the JSON reply.
    fn send(&mut self, message: &str) -> String {
        let reply = CommandMessage::parse(message).and_then(|m| {
            self.inner.apply(&m.command).map_err(|e| e.with_id(m.id))?;
            Ok(ServerMessage::Ack {
                version: PROTOCOL_VERSION,
                id: m.id,
                command: m.command.kind().to_string(),
                time: self.inner.time(),
            })
        });
        reply.unwrap_or_else(|e| e.to_message()).to_json()
    }

    /// One control step; a JSON snapshot when one is due.
    fn tick(&mut self) -> PyResult<Option<String>> {
        let snap = self.inner.tick().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(snap.map(|s| ServerMessage::Snapshot(s).to_json()))
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }
}

#[pymodule]
pub fn perceptloco_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CONTROL_DT", CONTROL_DT)?;
    m.add("PROTOCOL_VERSION", PROTOCOL_VERSION)?;
    m.add_class::<OscillatorNetwork>()?;
    m.add_class::<ActionPipeline>()?;
    m.add_class::<Terrain>()?;
    m.add_class::<EncoderNetwork>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<SteeringSession>()?;
    m.add_function(wrap_pyfunction!(generate_reference, m)?)?;
    m.add_function(wrap_pyfunction!(measure_gait, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(total_reward, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(noise_eval, m)?)?;
    Ok(())
}
