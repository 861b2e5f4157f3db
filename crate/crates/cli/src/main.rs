//! `perceptloco` command-line entry point.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perceptloco::terrain::TerrainFamily;

#[derive(Debug, Parser)]
#[command(
    name = "perceptloco",
    version,
    about = "CPG gait references, terrain perception and a mock locomotion harness",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Random seed [default: $PERCEPTLOCO_SEED, else the config file, else 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: out/<subcommand>]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Oscillator network traces
    #[command(subcommand)]
    Cpg(CpgCmd),
    /// Reference contact sequences
    #[command(subcommand)]
    Gait(GaitCmd),
    /// Frequency x velocity table on flat ground
    Sweep(SweepArgs),
    /// Terrain height exports
    #[command(subcommand)]
    Terrain(TerrainCmd),
    /// Single camera heightmaps
    #[command(subcommand)]
    Heightmap(HeightmapCmd),
    /// Heightmap autoencoder data, training and evaluation
    #[command(subcommand)]
    Encoder(EncoderCmd),
    /// Scheduled episodes on the mock robot
    #[command(subcommand)]
    Episode(EpisodeCmd),
    /// Gait metrics against sensor-noise level
    #[command(subcommand)]
    Noise(NoiseCmd),
    /// Live steering server
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CpgCmd {
    /// Convergence to the limit cycle and to the trot phase offsets
    Demo(CpgDemoArgs),
}

#[derive(Debug, Args)]
pub struct CpgDemoArgs {
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long)]
    pub duty: Option<f64>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum GaitCmd {
    /// One contact CSV per frequency
    Generate(GaitGenerateArgs),
}

#[derive(Debug, Args)]
pub struct GaitGenerateArgs {
    /// Comma-separated list (Hz)
    #[arg(long, value_delimiter = ',')]
    pub frequency: Vec<f64>,
    #[arg(long)]
    pub duty: Option<f64>,
    #[arg(long)]
    pub seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub velocities: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Control steps per episode
    #[arg(long)]
    pub steps: Option<usize>,
}

fn parse_family(s: &str) -> Result<TerrainFamily, String> {
    s.parse().map_err(|e: perceptloco::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TerrainSelect {
    /// flat, platforms, hurdles, heightfield or stairs
    #[arg(long, value_parser = parse_family)]
    pub family: Option<TerrainFamily>,
    /// Height, rise or perturbation (m)
    #[arg(long)]
    pub parameter: Option<f64>,
    /// Terrain seed [default: --seed]
    #[arg(long)]
    pub terrain_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum TerrainCmd {
    /// Height samples over the terrain extent
    Build(TerrainBuildArgs),
}

#[derive(Debug, Args)]
pub struct TerrainBuildArgs {
    #[command(flatten)]
    pub terrain: TerrainSelect,
    /// Sample spacing (m)
    #[arg(long)]
    pub resolution: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum HeightmapCmd {
    /// Camera frame at a body position
    Sample(HeightmapSampleArgs),
}

#[derive(Debug, Args)]
pub struct HeightmapSampleArgs {
    #[command(flatten)]
    pub terrain: TerrainSelect,
    /// Body x position (m)
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    /// Sensor-noise multiplier
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum EncoderCmd {
    /// Generate a heightmap dataset
    Collect(EncoderCollectArgs),
    /// Train the autoencoder
    Train(EncoderTrainArgs),
    /// Reconstruction error of a trained encoder
    Eval(EncoderEvalArgs),
}

#[derive(Debug, Args)]
pub struct EncoderCollectArgs {
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncoderTrainArgs {
    /// Dataset CSV [default: generate --frames frames]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EncoderEvalArgs {
    /// Trained network JSON
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Dataset CSV [default: generate --frames fresh frames]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EpisodeCmd {
    /// One scheduled episode with full per-step logs
    Run(EpisodeRunArgs),
}

#[derive(Debug, Args)]
pub struct EpisodeRunArgs {
    #[command(flatten)]
    pub terrain: TerrainSelect,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sensor-noise multiplier
    #[arg(long)]
    pub noise: Option<f64>,
    /// Probability of flipping each executed contact
    #[arg(long)]
    pub corruption: Option<f64>,
    /// Trained encoder JSON for the terrain latent
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Command on flat stretches, as frequency,velocity
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub flat_command: Vec<f64>,
    /// Command over obstacles, as frequency,velocity
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub obstacle_command: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum NoiseCmd {
    /// Velocity RMSE and Hamming similarity per noise multiplier
    Eval(NoiseEvalArgs),
}

#[derive(Debug, Args)]
pub struct NoiseEvalArgs {
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub corruption: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on
    #[arg(long, value_name = "ADDR:PORT")]
    pub listen: Option<String>,
    #[arg(long)]
    pub snapshot_hz: Option<f64>,
    /// Terrain as family[:parameter], e.g. stairs:0.05
    #[arg(long)]
    pub terrain: Option<String>,
    /// Simulated seconds per wall-clock second
    #[arg(long)]
    pub speed: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
