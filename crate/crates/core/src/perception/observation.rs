//! Policy observation: proprioception, heightmap latent, reference window and
//! target velocity, concatenated in that order.

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::gait::{ReferenceWindow, WINDOW_LEN};
use crate::perception::autoencoder::LATENT_DIM;
use crate::reward::NUM_JOINTS;
use crate::{Error, Result};

pub const HISTORY_DEPTH: usize = 3;

/// Block boundaries inside the flat observation vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub linear_velocity: Range<usize>,
    pub roll_pitch_history: Range<usize>,
    pub angular_velocity_history: Range<usize>,
    pub yaw_rate: usize,
    pub joint_history: Range<usize>,
    pub latent: Range<usize>,
    pub reference_window: Range<usize>,
    pub target_velocity: Range<usize>,
    pub len: usize,
}

impl ObservationLayout {
    pub fn standard() -> Self {
        let lin = 0..3;
        let rp = lin.end..lin.end + 2 * HISTORY_DEPTH;
        let av = rp.end..rp.end + 2 * HISTORY_DEPTH;
        let yaw = av.end;
        let joints = yaw + 1..yaw + 1 + NUM_JOINTS * HISTORY_DEPTH;
        let latent = joints.end..joints.end + LATENT_DIM;
        let window = latent.end..latent.end + WINDOW_LEN;
        let target = window.end..window.end + 2;
        let len = target.end;
        Self {
            linear_velocity: lin,
            roll_pitch_history: rp,
            angular_velocity_history: av,
            yaw_rate: yaw,
            joint_history: joints.clone(),
            latent,
            reference_window: window,
            target_velocity: target,
            len,
        }
    }

    pub fn proprio_len(&self) -> usize {
        self.joint_history.end
    }
}

pub const PROPRIO_LEN: usize = 3 + 2 * HISTORY_DEPTH + 2 * HISTORY_DEPTH + 1 + NUM_JOINTS * HISTORY_DEPTH;
pub const OBSERVATION_LEN: usize = PROPRIO_LEN + LATENT_DIM + WINDOW_LEN + 2;

/// Proprioceptive readings for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProprioFrame {
    pub linear_velocity: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
    pub joint_angles: [f64; NUM_JOINTS],
}

/// Last [`HISTORY_DEPTH`] proprioceptive frames, oldest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProprioHistory {
    frames: VecDeque<ProprioFrame>,
}

impl ProprioHistory {
    pub fn new() -> Self {
        Self { frames: VecDeque::with_capacity(HISTORY_DEPTH) }
    }

    /// Buffer pre-filled with zero frames, as at episode start.
    pub fn zeros() -> Self {
        let mut h = Self::new();
        for _ in 0..HISTORY_DEPTH {
            h.push(ProprioFrame::default());
        }
        h
    }

    pub fn push(&mut self, frame: ProprioFrame) {
        if self.frames.len() == HISTORY_DEPTH {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn latest(&self) -> Option<&ProprioFrame> {
        self.frames.back()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub values: Vec<f64>,
}

impl ObservationVector {
    pub fn latent(&self) -> &[f64] {
        &self.values[PROPRIO_LEN..PROPRIO_LEN + LATENT_DIM]
    }

    pub fn target_velocity(&self) -> [f64; 2] {
        [self.values[OBSERVATION_LEN - 2], self.values[OBSERVATION_LEN - 1]]
    }
}

pub fn assemble_observation(
    history: &ProprioHistory,
    latent: &[f64; LATENT_DIM],
    window: &ReferenceWindow,
    target_velocity: [f64; 2],
) -> Result<ObservationVector> {
    if history.len() < HISTORY_DEPTH {
        return Err(Error::InsufficientHistory { needed: HISTORY_DEPTH, have: history.len() });
    }
    let frames = &history.frames;
    let current = frames[HISTORY_DEPTH - 1];
    let mut v = Vec::with_capacity(OBSERVATION_LEN);
    v.extend_from_slice(&current.linear_velocity);
    for f in frames {
        v.extend_from_slice(&[f.roll, f.pitch]);
    }
    for f in frames {
        v.extend_from_slice(&[f.roll_rate, f.pitch_rate]);
    }
    v.push(current.yaw_rate);
    for f in frames {
        v.extend_from_slice(&f.joint_angles);
    }
    v.extend_from_slice(latent);
    v.extend(window.as_f64());
    v.extend_from_slice(&target_velocity);
    debug_assert_eq!(v.len(), OBSERVATION_LEN);
    Ok(ObservationVector { values: v })
}
