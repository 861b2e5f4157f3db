//! Action post-processing (clip, rate limit, low-pass) and joint PD control.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::reward::NUM_JOINTS;
use crate::{Error, Result};

pub const CLIP_RADIUS: f64 = 0.5;
pub const MAX_STEP_CHANGE: f64 = 0.15;
pub const FILTER_CUTOFF_HZ: f64 = 5.0;
pub const CONTROL_RATE_HZ: f64 = 40.0;

/// Per-leg (hip, thigh, knee) gains repeated over the four legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
}

impl JointGains {
    pub fn per_leg(kp: [f64; 3], kd: [f64; 3]) -> Result<Self> {
        if kp.iter().chain(&kd).any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParameter("joint gains must be positive".into()));
        }
        Ok(Self {
            kp: std::array::from_fn(|j| kp[j % 3]),
            kd: std::array::from_fn(|j| kd[j % 3]),
        })
    }
}

impl Default for JointGains {
    fn default() -> Self {
        Self::per_leg([100.0, 100.0, 100.0], [1.0, 2.0, 2.0]).expect("default gains are positive")
    }
}

/// `tau = kp * (q_target - q) - kd * qdot` (target joint velocity is zero).
pub fn pd_torque(
    q_target: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qdot: &[f64; NUM_JOINTS],
    gains: &JointGains,
) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|j| gains.kp[j] * (q_target[j] - q[j]) - gains.kd[j] * qdot[j])
}

/// First-order Butterworth low-pass, bilinear transform, unity DC gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterworthLowPass {
    b0: f64,
    b1: f64,
    a1: f64,
}

impl ButterworthLowPass {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate_hz) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {cutoff_hz} Hz must lie below Nyquist of {sample_rate_hz} Hz"
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        Ok(Self {
            b0: k / (1.0 + k),
            b1: k / (1.0 + k),
            a1: (k - 1.0) / (k + 1.0),
        })
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.b0, self.b1, self.a1)
    }

    /// One sample: `y = b0*x + b1*x_prev - a1*y_prev`.
    pub fn apply(&self, x: f64, x_prev: f64, y_prev: f64) -> f64 {
        self.b0 * x + self.b1 * x_prev - self.a1 * y_prev
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionPipelineConfig {
    pub clip_radius: f64,
    pub max_step_change: f64,
    pub cutoff_hz: f64,
    pub control_rate_hz: f64,
}

impl Default for ActionPipelineConfig {
    fn default() -> Self {
        Self {
            clip_radius: CLIP_RADIUS,
            max_step_change: MAX_STEP_CHANGE,
            cutoff_hz: FILTER_CUTOFF_HZ,
            control_rate_hz: CONTROL_RATE_HZ,
        }
    }
}

/// Intermediate values of one post-processing pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessedAction {
    pub clipped: [f64; NUM_JOINTS],
    pub rate_limited: [f64; NUM_JOINTS],
    pub target: [f64; NUM_JOINTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPipelineState {
    pub default_pose: [f64; NUM_JOINTS],
    /// Last rate-limited (pre-filter) target.
    pub previous_target: [f64; NUM_JOINTS],
    filter_input: [f64; NUM_JOINTS],
    filter_output: [f64; NUM_JOINTS],
    filter: ButterworthLowPass,
    config: ActionPipelineConfig,
}

impl ActionPipelineState {
    /// Pipeline at rest on the default pose.
    pub fn new(default_pose: [f64; NUM_JOINTS], config: ActionPipelineConfig) -> Result<Self> {
        if !(config.clip_radius > 0.0 && config.max_step_change > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid pipeline limits: {config:?}")));
        }
        Ok(Self {
            default_pose,
            previous_target: default_pose,
            filter_input: default_pose,
            filter_output: default_pose,
            filter: ButterworthLowPass::new(config.cutoff_hz, config.control_rate_hz)?,
            config,
        })
    }

    pub fn filter_output(&self) -> &[f64; NUM_JOINTS] {
        &self.filter_output
    }

    /// Clip around the default pose, rate-limit against the previous target,
    /// then low-pass each channel.
    pub fn process(&mut self, raw: &[f64; NUM_JOINTS]) -> ProcessedAction {
        let cfg = self.config;
        let clipped: [f64; NUM_JOINTS] = std::array::from_fn(|j| {
            let d = self.default_pose[j];
            raw[j].clamp(d - cfg.clip_radius, d + cfg.clip_radius)
        });
        let rate_limited: [f64; NUM_JOINTS] = std::array::from_fn(|j| {
            let p = self.previous_target[j];
            clipped[j].clamp(p - cfg.max_step_change, p + cfg.max_step_change)
        });
        let target: [f64; NUM_JOINTS] = std::array::from_fn(|j| {
            self.filter
                .apply(rate_limited[j], self.filter_input[j], self.filter_output[j])
        });
        self.previous_target = rate_limited;
        self.filter_input = rate_limited;
        self.filter_output = target;
        ProcessedAction {
            clipped,
            rate_limited,
            target,
        }
    }
}

pub fn postprocess_action(raw: &[f64; NUM_JOINTS], state: &mut ActionPipelineState) -> [f64; NUM_JOINTS] {
    state.process(raw).target
}
