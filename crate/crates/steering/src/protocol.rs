//! Message schema shared by the server and its clients.
//!
//! Every message is one JSON object carrying `version` and a `kind` tag.
//! Clients send commands; the server answers each with `ack` or `error` and
//! broadcasts `snapshot` messages while the simulation runs.
//!
//! ```json
//! {"version":1,"id":7,"kind":"set_gait","frequency":2.5,"duty":0.5}
//! {"version":1,"kind":"set_velocity","vx":0.6,"vy":0.0}
//! {"version":1,"kind":"set_terrain","family":"stairs","parameter":0.05,"seed":3}
//! {"version":1,"kind":"pause"}
//! ```

use perceptloco::cpg::NUM_LEGS;
use perceptloco::gait::Contact;
use perceptloco::reward::RewardBreakdown;
use perceptloco::terrain::{TerrainFamily, TerrainSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

pub const FREQUENCY_RANGE: (f64, f64) = (0.5, 4.0);
pub const DUTY_RANGE: (f64, f64) = (0.2, 0.8);
/// Applies to each velocity component (m/s).
pub const VELOCITY_LIMIT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// `duty` keeps its current value when omitted.
    SetGait {
        frequency: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duty: Option<f64>,
    },
    SetVelocity { vx: f64, vy: f64 },
    SetTerrain {
        family: TerrainFamily,
        #[serde(default)]
        parameter: f64,
        #[serde(default)]
        seed: u64,
    },
    Pause,
    Resume,
    /// Restarts the robot at the start line; time keeps running forward.
    Reset,
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SetGait { .. } => "set_gait",
            Self::SetVelocity { .. } => "set_velocity",
            Self::SetTerrain { .. } => "set_terrain",
            Self::Pause => "pause",
            Self::Resume => "resume",
            Self::Reset => "reset",
        }
    }

    /// Range checks; nothing is clamped.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(ProtocolError::new(ErrorCode::OutOfRange, format!("{name} {v} outside [{lo}, {hi}]")))
            }
        };
        match *self {
            Self::SetGait { frequency, duty } => {
                check("frequency", frequency, FREQUENCY_RANGE)?;
                if let Some(d) = duty {
                    check("duty", d, DUTY_RANGE)?;
                }
                Ok(())
            }
            Self::SetVelocity { vx, vy } => {
                check("vx", vx, (-VELOCITY_LIMIT, VELOCITY_LIMIT))?;
                check("vy", vy, (-VELOCITY_LIMIT, VELOCITY_LIMIT))
            }
            Self::SetTerrain { .. } => self
                .terrain_spec()
                .expect("set_terrain has a spec")
                .validate()
                .map_err(|e| ProtocolError::new(ErrorCode::OutOfRange, e.to_string())),
            Self::Pause | Self::Resume | Self::Reset => Ok(()),
        }
    }

    pub fn terrain_spec(&self) -> Option<TerrainSpec> {
        match *self {
            Self::SetTerrain { family, parameter, seed } => Some(TerrainSpec::with_defaults(family, parameter, seed)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandMessage {
    pub version: u32,
    pub id: Option<u64>,
    pub command: Command,
}

#[derive(Serialize)]
struct CommandWire<'a> {
    version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    #[serde(flatten)]
    command: &'a Command,
}

impl CommandMessage {
    pub fn new(command: Command) -> Self {
        Self { version: PROTOCOL_VERSION, id: None, command }
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = Some(id);
        self
    }

    pub fn to_json(&self) -> String {
        let wire = CommandWire { version: self.version, id: self.id, command: &self.command };
        serde_json::to_string(&wire).expect("command messages always serialize")
    }

    /// Parses and range-checks one client message.
    ///
    /// The error carries the message id whenever it could be read, so the
    /// reply can be matched to the request.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let malformed = |reason: String| ProtocolError::new(ErrorCode::Malformed, reason);
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(malformed("expected a JSON object".into()));
        };
        let id = match map.remove("id") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| malformed("id must be a non-negative integer".into()))?),
        };
        let with_id = |e: ProtocolError| e.with_id(id);
        let version = map
            .remove("version")
            .ok_or_else(|| with_id(malformed("missing version field".into())))?;
        let version = version
            .as_u64()
            .ok_or_else(|| with_id(malformed("version must be an integer".into())))?;
        if version != u64::from(PROTOCOL_VERSION) {
            return Err(with_id(ProtocolError::new(
                ErrorCode::UnsupportedVersion,
                format!("server speaks version {PROTOCOL_VERSION}, got {version}"),
            )));
        }
        let command: Command =
            serde_json::from_value(Value::Object(map)).map_err(|e| with_id(malformed(e.to_string())))?;
        command.validate().map_err(with_id)?;
        Ok(Self { version: PROTOCOL_VERSION, id, command })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, missing fields, unknown kind or unknown fields.
    Malformed,
    UnsupportedVersion,
    OutOfRange,
    /// Well-formed and in range but could not be carried out.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code:?}: {reason}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub reason: String,
    pub id: Option<u64>,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, reason: impl Into<String>) -> Self {
        Self { code, reason: reason.into(), id: None }
    }

    pub fn with_id(mut self, id: Option<u64>) -> Self {
        self.id = id;
        self
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Error {
            version: PROTOCOL_VERSION,
            id: self.id,
            code: self.code,
            reason: self.reason.clone(),
        }
    }
}

/// Every `stride`-th ray of every `stride`-th row of the camera heightmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimatedHeightmap {
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub seq: u64,
    /// Session time (s); keeps increasing across resets and terrain changes.
    pub time: f64,
    /// Restarts since the session began.
    pub episode: u64,
    pub position: [f64; 2],
    pub oscillators: [[f64; 2]; NUM_LEGS],
    pub reference_contacts: [Contact; NUM_LEGS],
    pub executed_contacts: [Contact; NUM_LEGS],
    pub commanded_velocity: [f64; 2],
    pub measured_velocity: [f64; 2],
    /// Frequency and duty in effect this step, including any ramp.
    pub commanded_frequency: f64,
    pub commanded_duty: f64,
    /// Oscillator cycle rate over the most recent full cycle.
    pub measured_frequency: Option<f64>,
    pub reward: RewardBreakdown,
    /// Reference vs executed contact agreement over the trailing window.
    pub hamming: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heightmap: Option<DecimatedHeightmap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello { version: u32, snapshot_hz: f64, paused: bool, time: f64 },
    /// `time` is the session time at which the command took effect.
    Ack { version: u32, id: Option<u64>, command: String, time: f64 },
    Error { version: u32, id: Option<u64>, code: ErrorCode, reason: String },
    Snapshot(Snapshot),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn version(&self) -> u32 {
        match self {
            Self::Hello { version, .. } | Self::Ack { version, .. } | Self::Error { version, .. } => *version,
            Self::Snapshot(s) => s.version,
        }
    }
}

/// Splits a text frame into messages; blank lines are skipped.
pub fn split_messages(frame: &str) -> impl Iterator<Item = &str> {
    frame.lines().map(str::trim).filter(|l| !l.is_empty())
}
