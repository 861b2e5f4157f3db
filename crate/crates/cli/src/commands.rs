use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use perceptloco::cpg::{GaitParameters, HopfParameters, OscillatorNetwork, OscillatorState, INNER_DT, NUM_LEGS};
use perceptloco::gait::{generate_reference, measure_gait, CONTROL_DT};
use perceptloco::harness::episode::run_episode;
use perceptloco::harness::sweep::{
    frequency_sweep, noise_config, noise_eval, noise_to_csv, sweep_to_csv, DEFAULT_NOISE_CORRUPTION,
};
use perceptloco::harness::{EpisodeConfig, GaitCommand, TransitionSchedule, MAX_EPISODE_STEPS};
use perceptloco::perception::autoencoder::{fit, EncoderNetwork, TrainingConfig};
use perceptloco::perception::dataset::{dataset_from_csv, dataset_to_csv, generate_dataset, validate_training_set};
use perceptloco::perception::heightmap::{
    sample_heightmap, CameraPose, BASE_HEIGHT, CAMERA_FORWARD_OFFSET, COLS, NOMINAL_PITCH,
};
use perceptloco::perception::AddSensorNoise;
use perceptloco::terrain::{build_terrain, Extent, TerrainFamily, TerrainModel, TerrainSpec};
use perceptloco_steering::{ServerConfig, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::output::RunDir;
use crate::settings::Settings;
use crate::{
    Cli, Cmd, CpgCmd, CpgDemoArgs, EncoderCmd, EncoderCollectArgs, EncoderEvalArgs, EncoderTrainArgs, EpisodeCmd,
    EpisodeRunArgs, GaitCmd, GaitGenerateArgs, HeightmapCmd, HeightmapSampleArgs, NoiseCmd, NoiseEvalArgs,
    ServeArgs, SweepArgs, TerrainBuildArgs, TerrainCmd, TerrainSelect,
};

/// Training precondition on dataset size.
const MIN_TRAINING_FRAMES: usize = 1000;

struct Ctx {
    settings: Settings,
    seed: u64,
    out: PathBuf,
    section: &'static str,
}

impl Ctx {
    fn run_dir(&self, command: &str, config: serde_json::Value) -> RunDir {
        RunDir::new(&self.out, command, self.seed, config)
    }

    fn pick<T: serde::de::DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        self.settings.pick(flag, self.section, key, default)
    }

    fn pick_list<T: serde::de::DeserializeOwned + Clone>(&self, flag: Vec<T>, key: &str, default: &[T]) -> Result<Vec<T>> {
        self.settings.pick_list(flag, self.section, key, default)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn terrain(&self, t: &TerrainSelect, default_family: TerrainFamily) -> Result<TerrainSpec> {
        let family = match t.family {
            Some(f) => f,
            None => match self.settings.get::<String>(Some(self.section), "family")? {
                Some(s) => s.parse()?,
                None => default_family,
            },
        };
        let parameter = self.pick(t.parameter, "parameter", default_parameter(family))?;
        let seed = self.pick(t.terrain_seed, "terrain_seed", self.seed)?;
        let spec = TerrainSpec::with_defaults(family, parameter, seed);
        spec.validate()?;
        Ok(spec)
    }
}

fn default_parameter(family: TerrainFamily) -> f64 {
    match family {
        TerrainFamily::Flat => 0.0,
        _ => 0.05,
    }
}

fn section_of(cmd: &Cmd) -> (&'static str, &'static str) {
    match cmd {
        Cmd::Cpg(_) => ("cpg", "cpg-demo"),
        Cmd::Gait(_) => ("gait", "gait-generate"),
        Cmd::Sweep(_) => ("sweep", "sweep"),
        Cmd::Terrain(_) => ("terrain", "terrain-build"),
        Cmd::Heightmap(_) => ("heightmap", "heightmap-sample"),
        Cmd::Encoder(EncoderCmd::Collect(_)) => ("encoder", "encoder-collect"),
        Cmd::Encoder(EncoderCmd::Train(_)) => ("encoder", "encoder-train"),
        Cmd::Encoder(EncoderCmd::Eval(_)) => ("encoder", "encoder-eval"),
        Cmd::Episode(_) => ("episode", "episode-run"),
        Cmd::Noise(_) => ("noise", "noise-eval"),
        Cmd::Serve(_) => ("serve", "serve"),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let (section, slug) = section_of(&cli.command);
    let env_seed = match std::env::var("PERCEPTLOCO_SEED") {
        Ok(s) => Some(s.trim().parse::<u64>().with_context(|| format!("PERCEPTLOCO_SEED=`{s}` is not a seed"))?),
        Err(_) => None,
    };
    let file_seed: Option<u64> = settings.get(None, "seed")?;
    let seed = cli.seed.or(file_seed).or(env_seed).unwrap_or(0);
    let file_out: Option<PathBuf> = settings.get(None, "out")?;
    let out = cli.out.or(file_out).unwrap_or_else(|| Path::new("out").join(slug));
    let ctx = Ctx { settings, seed, out, section };
    match cli.command {
        Cmd::Cpg(CpgCmd::Demo(a)) => cpg_demo(&ctx, a),
        Cmd::Gait(GaitCmd::Generate(a)) => gait_generate(&ctx, a),
        Cmd::Sweep(a) => sweep(&ctx, a),
        Cmd::Terrain(TerrainCmd::Build(a)) => terrain_build(&ctx, a),
        Cmd::Heightmap(HeightmapCmd::Sample(a)) => heightmap_sample(&ctx, a),
        Cmd::Encoder(EncoderCmd::Collect(a)) => encoder_collect(&ctx, a),
        Cmd::Encoder(EncoderCmd::Train(a)) => encoder_train(&ctx, a),
        Cmd::Encoder(EncoderCmd::Eval(a)) => encoder_eval(&ctx, a),
        Cmd::Episode(EpisodeCmd::Run(a)) => episode_run(&ctx, a),
        Cmd::Noise(NoiseCmd::Eval(a)) => noise(&ctx, a),
        Cmd::Serve(a) => serve(&ctx, a),
    }
}

fn done(dir: RunDir) -> Result<()> {
    let manifest = dir.finish()?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn cpg_demo(ctx: &Ctx, a: CpgDemoArgs) -> Result<()> {
    let frequency = ctx.pick(a.frequency, "frequency", 2.0)?;
    let duty = ctx.pick(a.duty, "duty", 0.5)?;
    let seconds = ctx.pick(a.seconds, "seconds", 3.0)?;
    let coupling = ctx.pick(a.coupling, "coupling", 1.0)?;
    ctx.settings.finish(ctx.section)?;
    if !(seconds > 0.0) {
        bail!("--seconds must be positive");
    }
    let hopf = HopfParameters::default();
    let gait = GaitParameters::trot(frequency, duty);
    // Random phases and radii both inside and outside the limit cycle.
    let mut rng = ctx.rng();
    let states: [OscillatorState; NUM_LEGS] = std::array::from_fn(|i| {
        let r = if i % 2 == 0 { rng.random_range(0.1..0.5) } else { rng.random_range(1.5..2.0) };
        OscillatorState::from_polar(r, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
    });
    let mut net = OscillatorNetwork::new(states, hopf, gait, coupling)?;
    let sample_every = 5;
    let steps = (seconds / INNER_DT).round() as usize;
    let mut csv = String::from("t");
    for leg in perceptloco::cpg::LEG_NAMES {
        let _ = write!(csv, ",x_{leg},y_{leg},r_{leg}");
    }
    csv.push_str(",max_radius_error,max_phase_error\n");
    for k in 0..=steps {
        if k % sample_every == 0 {
            let _ = write!(csv, "{:.3}", k as f64 * INNER_DT);
            for s in &net.states {
                let _ = write!(csv, ",{:.6},{:.6},{:.6}", s.x, s.y, s.radius());
            }
            let _ = writeln!(csv, ",{:.3e},{:.3e}", net.max_radius_error(), net.max_phase_error()?);
        }
        if k < steps {
            net.step(INNER_DT)?;
        }
    }
    let results = json!({
        "final_radius_error": net.max_radius_error(),
        "final_phase_error": net.max_phase_error()?,
    });
    println!("after {seconds} s: radius error {:.2e}, phase error {:.2e} rad", net.max_radius_error(), net.max_phase_error()?);
    let mut dir = ctx.run_dir(
        "cpg demo",
        json!({"frequency": frequency, "duty": duty, "seconds": seconds, "coupling": coupling, "hopf": hopf}),
    );
    dir.write("cpg.csv", csv)?;
    dir.set_results(results);
    done(dir)
}

fn gait_generate(ctx: &Ctx, a: GaitGenerateArgs) -> Result<()> {
    let frequencies = ctx.pick_list(a.frequency, "frequency", &[2.0])?;
    let duty = ctx.pick(a.duty, "duty", 0.5)?;
    let seconds = ctx.pick(a.seconds, "seconds", 5.0)?;
    ctx.settings.finish(ctx.section)?;
    let horizon = (seconds / CONTROL_DT).round() as usize;
    let hopf = HopfParameters::default();
    let mut dir = ctx.run_dir("gait generate", json!({"frequencies": frequencies, "duty": duty, "seconds": seconds}));
    let mut measured = Vec::new();
    for &f in &frequencies {
        let traj = generate_reference(&GaitParameters::trot(f, duty), &hopf, horizon, CONTROL_DT)?;
        let name = format!("contacts_{f}hz.csv");
        dir.write(&name, traj.to_csv())?;
        match measure_gait(&traj) {
            Ok(m) => {
                println!("{name}: {:.4} Hz, duty {:.4}", m.frequency, m.duty_factor);
                measured.push(json!({"file": name, "frequency": m.frequency, "duty": m.duty_factor}));
            }
            Err(e) => {
                println!("{name}: {e}");
                measured.push(json!({"file": name, "frequency": null, "duty": null}));
            }
        }
    }
    dir.set_results(json!({ "measured": measured }));
    done(dir)
}

fn episode_config(ctx: &Ctx, steps: Option<usize>, base: EpisodeConfig) -> Result<EpisodeConfig> {
    let max_steps = ctx.pick(steps, "steps", MAX_EPISODE_STEPS)?;
    Ok(EpisodeConfig { max_steps, ..base })
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let frequencies = ctx.pick_list(a.frequencies, "frequencies", &[1.0, 1.5, 2.0, 2.5, 3.0])?;
    let velocities = ctx.pick_list(a.velocities, "velocities", &[0.2, 0.4, 0.6, 0.8])?;
    let trials = ctx.pick(a.trials, "trials", 3)?;
    let cfg = episode_config(ctx, a.steps, EpisodeConfig::default())?;
    ctx.settings.finish(ctx.section)?;
    let rows = frequency_sweep(&frequencies, &velocities, trials, &cfg, ctx.seed)?;
    let csv = sweep_to_csv(&rows);
    print!("{csv}");
    let mut dir = ctx.run_dir(
        "sweep",
        json!({"frequencies": frequencies, "velocities": velocities, "trials": trials, "episode": cfg}),
    );
    dir.write("sweep.csv", csv)?;
    done(dir)
}

fn terrain_build(ctx: &Ctx, a: TerrainBuildArgs) -> Result<()> {
    let spec = ctx.terrain(&a.terrain, TerrainFamily::Stairs)?;
    let resolution = ctx.pick(a.resolution, "resolution", 0.05)?;
    ctx.settings.finish(ctx.section)?;
    let terrain = build_terrain(&spec)?;
    let e = spec.extent;
    let bounds = Extent::new(e.x_min - 1.0, e.x_max + 1.0, e.y_min, e.y_max);
    let mut dir = ctx.run_dir("terrain build", json!({"spec": spec, "resolution": resolution}));
    dir.write("terrain.csv", terrain.to_csv(&bounds, resolution)?)?;
    dir.write("terrain.json", serde_json::to_string_pretty(&spec)?)?;
    dir.set_results(json!({"obstacle_span": terrain.obstacle_span()}));
    done(dir)
}

fn camera_at(terrain: &TerrainModel, x: f64, y: f64) -> CameraPose {
    let cx = x + CAMERA_FORWARD_OFFSET;
    let ground = terrain.height_at(x, y).max(terrain.height_at(cx, y));
    CameraPose { position: [cx, y, ground + BASE_HEIGHT], pitch: NOMINAL_PITCH, yaw: 0.0 }
}

fn heightmap_sample(ctx: &Ctx, a: HeightmapSampleArgs) -> Result<()> {
    let spec = ctx.terrain(&a.terrain, TerrainFamily::Stairs)?;
    let x = ctx.pick(a.x, "x", spec.extent.x_min - 0.5)?;
    let y = ctx.pick(a.y, "y", 0.0)?;
    let noise = ctx.pick(a.noise, "noise", 0.0)?;
    ctx.settings.finish(ctx.section)?;
    if !(noise >= 0.0) {
        bail!("--noise must be non-negative");
    }
    let terrain = build_terrain(&spec)?;
    let pose = camera_at(&terrain, x, y);
    let mut frame = sample_heightmap(&terrain, &pose)?;
    if noise > 0.0 {
        frame = frame.add_sensor_noise(&Default::default(), noise, &mut ctx.rng());
    }
    let mut csv = String::new();
    for row in frame.distances.chunks(COLS) {
        let line: Vec<String> = row.iter().map(|d| format!("{d:.6}")).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    let mut dir = ctx.run_dir("heightmap sample", json!({"spec": spec, "x": x, "y": y, "noise": noise, "pose": pose}));
    dir.write("heightmap.csv", csv)?;
    done(dir)
}

fn encoder_collect(ctx: &Ctx, a: EncoderCollectArgs) -> Result<()> {
    let frames = ctx.pick(a.frames, "frames", 5000)?;
    ctx.settings.finish(ctx.section)?;
    let data = generate_dataset(frames, ctx.seed)?;
    let mut dir = ctx.run_dir("encoder collect", json!({"frames": frames}));
    dir.write("dataset.csv", dataset_to_csv(&data))?;
    done(dir)
}

fn load_dataset(path: &Path) -> Result<Vec<perceptloco::perception::dataset::DatasetFrame>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(dataset_from_csv(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn encoder_train(ctx: &Ctx, a: EncoderTrainArgs) -> Result<()> {
    let dataset: Option<PathBuf> = match a.dataset {
        Some(p) => Some(p),
        None => ctx.settings.get(Some(ctx.section), "dataset")?,
    };
    let frames = ctx.pick(a.frames, "frames", 5000)?;
    let d = TrainingConfig::default();
    let config = TrainingConfig {
        epochs: ctx.pick(a.epochs, "epochs", d.epochs)?,
        step_size: ctx.pick(a.step_size, "step_size", d.step_size)?,
        batch_size: ctx.pick(a.batch_size, "batch_size", d.batch_size)?,
        momentum: ctx.pick(a.momentum, "momentum", d.momentum)?,
        ..d
    };
    ctx.settings.finish(ctx.section)?;
    let data = match &dataset {
        Some(p) => load_dataset(p)?,
        None => generate_dataset(frames, ctx.seed)?,
    };
    validate_training_set(&data, MIN_TRAINING_FRAMES)?;
    let heightmaps: Vec<_> = data.into_iter().map(|f| f.frame).collect();
    let (net, report) = fit(&heightmaps, &config, &mut ctx.rng())?;
    let ratio = report.final_validation() / report.baseline_validation();
    println!(
        "validation MSE {:.4} -> {:.4} ({:.1}% of baseline)",
        report.baseline_validation(),
        report.final_validation(),
        100.0 * ratio
    );
    let mut curve = String::from("epoch,train_loss,validation_loss\n");
    let _ = writeln!(curve, "0,,{}", report.validation_curve[0]);
    for (e, (t, v)) in report.train_curve.iter().zip(&report.validation_curve[1..]).enumerate() {
        let _ = writeln!(curve, "{},{t},{v}", e + 1);
    }
    let mut dir = ctx.run_dir(
        "encoder train",
        json!({"training": config, "dataset": dataset, "frames": heightmaps.len()}),
    );
    dir.write("encoder.json", net.to_json(Some(&report))?)?;
    dir.write("training.csv", curve)?;
    dir.set_results(json!({
        "baseline_validation": report.baseline_validation(),
        "final_validation": report.final_validation(),
        "ratio": ratio,
        "final_step_size": report.final_step_size,
    }));
    done(dir)
}

fn load_encoder(path: &Path) -> Result<EncoderNetwork> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (net, _) = EncoderNetwork::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    Ok(net)
}

fn encoder_eval(ctx: &Ctx, a: EncoderEvalArgs) -> Result<()> {
    let encoder: Option<PathBuf> = match a.encoder {
        Some(p) => Some(p),
        None => ctx.settings.get(Some(ctx.section), "encoder")?,
    };
    let dataset: Option<PathBuf> = match a.dataset {
        Some(p) => Some(p),
        None => ctx.settings.get(Some(ctx.section), "dataset")?,
    };
    let frames = ctx.pick(a.frames, "frames", 1000)?;
    ctx.settings.finish(ctx.section)?;
    let Some(encoder) = encoder else {
        bail!("--encoder is required");
    };
    let net = load_encoder(&encoder)?;
    let data = match &dataset {
        Some(p) => load_dataset(p)?,
        None => generate_dataset(frames, ctx.seed)?,
    };
    let heightmaps: Vec<_> = data.into_iter().map(|f| f.frame).collect();
    let loss = net.mean_loss(&heightmaps)?;
    // Predicting the stored mean: the loss an untrained-but-normalized network aims to beat.
    let mut mean_only = EncoderNetwork::zeros();
    let (m, s) = net.normalization();
    mean_only.set_normalization(m.to_vec(), s.to_vec())?;
    let baseline = mean_only.mean_loss(&heightmaps)?;
    println!("mean reconstruction MSE {loss:.5} (mean predictor {baseline:.5}, ratio {:.4})", loss / baseline);
    let mut dir = ctx.run_dir("encoder eval", json!({"encoder": encoder, "dataset": dataset, "frames": heightmaps.len()}));
    let results = json!({"mse": loss, "mean_predictor_mse": baseline, "ratio": loss / baseline});
    dir.write("eval.json", serde_json::to_string_pretty(&results)?)?;
    dir.set_results(results);
    done(dir)
}

fn gait_pair(v: Vec<f64>, default: GaitCommand) -> GaitCommand {
    match v.as_slice() {
        [f, vel] => GaitCommand { frequency: *f, velocity: *vel },
        _ => default,
    }
}

fn episode_run(ctx: &Ctx, a: EpisodeRunArgs) -> Result<()> {
    let spec = ctx.terrain(&a.terrain, TerrainFamily::Hurdles)?;
    let mut cfg = episode_config(ctx, a.steps, EpisodeConfig::default())?;
    cfg.sim.noise_multiplier = ctx.pick(a.noise, "noise", 0.0)?;
    cfg.sim.corruption_rate = ctx.pick(a.corruption, "corruption", 0.0)?;
    let flat = gait_pair(ctx.pick_list(a.flat_command, "flat_command", &[])?, GaitCommand::FLAT);
    let obstacle = gait_pair(ctx.pick_list(a.obstacle_command, "obstacle_command", &[])?, GaitCommand::OBSTACLE);
    let encoder: Option<PathBuf> = match a.encoder {
        Some(p) => Some(p),
        None => ctx.settings.get(Some(ctx.section), "encoder")?,
    };
    ctx.settings.finish(ctx.section)?;
    let net = encoder.as_deref().map(load_encoder).transpose()?;
    let terrain = build_terrain(&spec)?;
    let mut schedule = TransitionSchedule::for_terrain(&terrain);
    schedule.flat = flat;
    schedule.obstacle = obstacle;
    let log = run_episode(&terrain, &schedule, &cfg, net.as_ref(), &mut ctx.rng())?;
    let s = &log.summary;
    println!(
        "{} steps, x = {:.2} m, velocity RMSE {:.4}, Hamming {:.4}, success {}",
        s.steps, s.final_x, s.velocity_rmse, s.hamming, s.success
    );
    let mut dir = ctx.run_dir(
        "episode run",
        json!({"terrain": spec, "schedule": schedule, "episode": cfg, "encoder": encoder}),
    );
    dir.write("episode.csv", log.to_csv())?;
    dir.write("summary.json", log.summary_json()?)?;
    dir.set_results(serde_json::to_value(log.summary)?);
    done(dir)
}

fn noise(ctx: &Ctx, a: NoiseEvalArgs) -> Result<()> {
    let multipliers = ctx.pick_list(a.multipliers, "multipliers", &[1.0, 5.0, 10.0, 25.0])?;
    let trials = ctx.pick(a.trials, "trials", 5)?;
    let mut cfg = episode_config(ctx, a.steps, noise_config())?;
    cfg.sim.corruption_rate = ctx.pick(a.corruption, "corruption", DEFAULT_NOISE_CORRUPTION)?;
    ctx.settings.finish(ctx.section)?;
    let rows = noise_eval(&multipliers, trials, &cfg, ctx.seed)?;
    println!("{:>10}  {:>13}  {:>10}", "multiplier", "velocity_rmse", "hamming");
    for r in &rows {
        println!("{:>10}  {:>13.4}  {:>10.4}", format!("{}x", r.multiplier), r.velocity_rmse, r.hamming);
    }
    let mut dir = ctx.run_dir("noise eval", json!({"multipliers": multipliers, "trials": trials, "episode": cfg}));
    dir.write("noise.csv", noise_to_csv(&rows))?;
    done(dir)
}

fn parse_terrain_arg(s: &str) -> Result<TerrainSpec> {
    let (family, parameter) = match s.split_once(':') {
        Some((f, p)) => {
            let family: TerrainFamily = f.parse()?;
            (family, p.parse::<f64>().with_context(|| format!("bad terrain parameter `{p}`"))?)
        }
        None => {
            let family: TerrainFamily = s.parse()?;
            (family, default_parameter(family))
        }
    };
    let spec = TerrainSpec::with_defaults(family, parameter, 0);
    spec.validate()?;
    Ok(spec)
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let listen = ctx.pick(a.listen, "listen", "127.0.0.1:8765".to_string())?;
    let snapshot_hz = ctx.pick(a.snapshot_hz, "snapshot_hz", perceptloco_steering::session::DEFAULT_SNAPSHOT_HZ)?;
    let terrain = ctx.pick(a.terrain, "terrain", "flat".to_string())?;
    let speed = ctx.pick(a.speed, "speed", 1.0)?;
    ctx.settings.finish(ctx.section)?;
    let mut spec = parse_terrain_arg(&terrain)?;
    spec.seed = ctx.seed;
    let config = ServerConfig {
        listen,
        speed,
        session: SessionConfig { snapshot_hz, terrain: spec, seed: ctx.seed, ..Default::default() },
    };
    let handle = perceptloco_steering::spawn(config)?;
    println!("listening on ws://{}", handle.local_addr());
    handle.wait();
    Ok(())
}
