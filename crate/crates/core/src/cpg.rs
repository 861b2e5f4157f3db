//! Coupled Hopf oscillators used as the gait engine.
//!
//! Each leg owns one planar oscillator `(x, y)` that is attracted to a circle
//! of radius `mu`. The angular rate is blended between a stance rate and a
//! swing rate by a steep sigmoid on `y`, so that the upper half-plane (stance)
//! is traversed in `duty * T` seconds and the lower half-plane (swing) in
//! `(1 - duty) * T` seconds. Oscillators rotate clockwise: phase decreases.
//!
//! Legs are ordered `(FR, FL, RR, RL)` everywhere in this crate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_LEGS: usize = 4;

/// Leg names in storage order.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["fr", "fl", "rr", "rl"];

/// Trot: diagonal pairs (FR, RL) and (FL, RR) in anti-phase.
pub const TROT_OFFSETS: [f64; NUM_LEGS] = [0.0, PI, PI, 0.0];

/// Default inner integration step (1000 Hz).
pub const INNER_DT: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub x: f64,
    pub y: f64,
}

impl OscillatorState {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// State on a circle of the given radius at the given angle.
    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self {
            x: radius * angle.cos(),
            y: radius * angle.sin(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfParameters {
    /// Convergence gain toward the limit cycle (1/s).
    pub alpha: f64,
    /// Limit-cycle radius.
    pub mu: f64,
    /// Fixed angular rate (rad/s), only used by [`hopf_fixed_rate_step`].
    pub gamma_fixed: f64,
    /// Steepness of the stance/swing blend.
    pub sigmoid_steepness: f64,
}

impl Default for HopfParameters {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            mu: 1.0,
            gamma_fixed: 50.0,
            sigmoid_steepness: 50.0,
        }
    }
}

impl HopfParameters {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.alpha) || !ok(self.mu) || !ok(self.sigmoid_steepness) {
            return Err(Error::InvalidParameter(format!(
                "hopf parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParameters {
    /// Gait frequency in Hz.
    pub frequency: f64,
    /// Stance fraction of the cycle.
    pub duty_factor: f64,
    /// Desired phase lead of each leg (rad), in leg order.
    pub phase_offsets: [f64; NUM_LEGS],
}

impl GaitParameters {
    pub fn trot(frequency: f64, duty_factor: f64) -> Self {
        Self {
            frequency,
            duty_factor,
            phase_offsets: TROT_OFFSETS,
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gait frequency must be positive, got {}",
                self.frequency
            )));
        }
        if !(0.1..=0.9).contains(&self.duty_factor) {
            return Err(Error::InvalidParameter(format!(
                "duty factor must lie in [0.1, 0.9], got {}",
                self.duty_factor
            )));
        }
        if self.phase_offsets.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite phase offset".into()));
        }
        Ok(())
    }
}

impl Default for GaitParameters {
    fn default() -> Self {
        Self::trot(2.0, 0.5)
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Duty-modulated angular rate at the given state.
///
/// `w(y) = pi/(duty*T) * s(b*y) + pi/((1-duty)*T) * s(-b*y)` with `s` the
/// logistic function.
pub fn angular_drive(state: &OscillatorState, gait: &GaitParameters, hopf: &HopfParameters) -> f64 {
    let period = gait.period();
    let stance_rate = PI / (gait.duty_factor * period);
    let swing_rate = PI / ((1.0 - gait.duty_factor) * period);
    let u = hopf.sigmoid_steepness * state.y;
    stance_rate * sigmoid(u) + swing_rate * sigmoid(-u)
}

/// Intrinsic Hopf vector field at a given angular rate.
pub fn hopf_derivative(state: &OscillatorState, hopf: &HopfParameters, omega: f64) -> (f64, f64) {
    let r2 = state.x * state.x + state.y * state.y;
    let radial = hopf.alpha * (hopf.mu * hopf.mu - r2);
    (
        radial * state.x + omega * state.y,
        radial * state.y - omega * state.x,
    )
}

/// Quadrant-aware phase in `(-pi, pi]`.
pub fn phase_of(state: &OscillatorState) -> Result<f64> {
    if state.x == 0.0 && state.y == 0.0 {
        return Err(Error::UndefinedPhase);
    }
    Ok(state.y.atan2(state.x))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One classical RK4 step of a two-dimensional autonomous system.
pub fn rk4_step<F>(state: OscillatorState, dt: f64, mut field: F) -> OscillatorState
where
    F: FnMut(&OscillatorState) -> (f64, f64),
{
    let add = |s: &OscillatorState, k: (f64, f64), h: f64| OscillatorState {
        x: s.x + h * k.0,
        y: s.y + h * k.1,
    };
    let k1 = field(&state);
    let k2 = field(&add(&state, k1, 0.5 * dt));
    let k3 = field(&add(&state, k2, 0.5 * dt));
    let k4 = field(&add(&state, k3, dt));
    OscillatorState {
        x: state.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y: state.y + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    }
}

/// Single uncoupled oscillator step at the fixed rate `gamma_fixed`.
pub fn hopf_fixed_rate_step(state: OscillatorState, hopf: &HopfParameters, dt: f64) -> OscillatorState {
    rk4_step(state, dt, |s| hopf_derivative(s, hopf, hopf.gamma_fixed))
}

/// Single uncoupled oscillator step with the duty-modulated drive.
pub fn hopf_gait_step(
    state: OscillatorState,
    gait: &GaitParameters,
    hopf: &HopfParameters,
    dt: f64,
) -> OscillatorState {
    rk4_step(state, dt, |s| hopf_derivative(s, hopf, angular_drive(s, gait, hopf)))
}

/// Four coupled oscillators, one per leg.
///
/// The coupling on leg `i` is `lambda * sum_{j != i} (R(phi_j - phi_i) rho_j - rho_i)`,
/// which vanishes once every leg sits at its desired offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorNetwork {
    pub states: [OscillatorState; NUM_LEGS],
    pub hopf: HopfParameters,
    gait: GaitParameters,
    pub coupling_gain: f64,
    pub time: f64,
    #[serde(skip, default)]
    rotations: [[(f64, f64); NUM_LEGS]; NUM_LEGS],
}

impl OscillatorNetwork {
    pub fn new(
        states: [OscillatorState; NUM_LEGS],
        hopf: HopfParameters,
        gait: GaitParameters,
        coupling_gain: f64,
    ) -> Result<Self> {
        hopf.validate()?;
        gait.validate()?;
        if !(coupling_gain.is_finite() && coupling_gain >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling gain must be non-negative, got {coupling_gain}"
            )));
        }
        Ok(Self {
            states,
            hopf,
            gait,
            coupling_gain,
            time: 0.0,
            rotations: rotation_table(&gait.phase_offsets),
        })
    }

    /// Network already on its limit cycle at the desired offsets.
    pub fn synchronized(hopf: HopfParameters, gait: GaitParameters, coupling_gain: f64) -> Result<Self> {
        let states = gait
            .phase_offsets
            .map(|phi| OscillatorState::from_polar(hopf.mu, PI / 2.0 - phi));
        Self::new(states, hopf, gait, coupling_gain)
    }

    pub fn gait(&self) -> &GaitParameters {
        &self.gait
    }

    /// Replaces the gait parameters; the oscillator states are kept.
    pub fn set_gait(&mut self, gait: GaitParameters) -> Result<()> {
        gait.validate()?;
        if gait.phase_offsets != self.gait.phase_offsets {
            self.rotations = rotation_table(&gait.phase_offsets);
        }
        self.gait = gait;
        Ok(())
    }

    fn ensure_rotations(&mut self) {
        // Deserialized networks arrive with an empty table.
        if self.rotations[0][0] != (1.0, 0.0) {
            self.rotations = rotation_table(&self.gait.phase_offsets);
        }
    }

    fn derivative(&self, states: &[OscillatorState; NUM_LEGS]) -> [(f64, f64); NUM_LEGS] {
        let mut out = [(0.0, 0.0); NUM_LEGS];
        for (i, s) in states.iter().enumerate() {
            let omega = angular_drive(s, &self.gait, &self.hopf);
            let (mut dx, mut dy) = hopf_derivative(s, &self.hopf, omega);
            let mut cx = 0.0;
            let mut cy = 0.0;
            for (j, other) in states.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (c, sn) = self.rotations[i][j];
                cx += c * other.x - sn * other.y - s.x;
                cy += sn * other.x + c * other.y - s.y;
            }
            dx += self.coupling_gain * cx;
            dy += self.coupling_gain * cy;
            out[i] = (dx, dy);
        }
        out
    }

    /// Advances all oscillators by one RK4 step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(Error::InvalidParameter(format!(
                "integration step must lie in (0, 0.01] s, got {dt}"
            )));
        }
        self.ensure_rotations();
        let shift = |base: &[OscillatorState; NUM_LEGS], k: &[(f64, f64); NUM_LEGS], h: f64| {
            let mut s = *base;
            for (st, d) in s.iter_mut().zip(k) {
                st.x += h * d.0;
                st.y += h * d.1;
            }
            s
        };
        let s0 = self.states;
        let k1 = self.derivative(&s0);
        let k2 = self.derivative(&shift(&s0, &k1, 0.5 * dt));
        let k3 = self.derivative(&shift(&s0, &k2, 0.5 * dt));
        let k4 = self.derivative(&shift(&s0, &k3, dt));
        let mut next = s0;
        for i in 0..NUM_LEGS {
            next[i].x += dt / 6.0 * (k1[i].0 + 2.0 * k2[i].0 + 2.0 * k3[i].0 + k4[i].0);
            next[i].y += dt / 6.0 * (k1[i].1 + 2.0 * k2[i].1 + 2.0 * k3[i].1 + k4[i].1);
        }
        if next.iter().any(|s| !s.is_finite()) {
            return Err(Error::NumericalBlowUp(format!(
                "oscillator state diverged at t = {:.4} s",
                self.time
            )));
        }
        self.states = next;
        self.time += dt;
        Ok(())
    }

    /// Steps repeatedly until `duration` seconds have elapsed.
    pub fn advance(&mut self, duration: f64, dt: f64) -> Result<()> {
        let steps = (duration / dt).round() as usize;
        for _ in 0..steps {
            self.step(dt)?;
        }
        Ok(())
    }

    pub fn phases(&self) -> Result<[f64; NUM_LEGS]> {
        let mut out = [0.0; NUM_LEGS];
        for (o, s) in out.iter_mut().zip(&self.states) {
            *o = phase_of(s)?;
        }
        Ok(out)
    }

    /// Largest wrapped deviation of any pair from its desired relative phase.
    pub fn max_phase_error(&self) -> Result<f64> {
        let phases = self.phases()?;
        let offsets = self.gait.phase_offsets;
        let mut worst: f64 = 0.0;
        for i in 0..NUM_LEGS {
            for j in (i + 1)..NUM_LEGS {
                // At lock: phase_i - phase_j = phi_j - phi_i.
                let err = wrap_angle((phases[i] - phases[j]) - (offsets[j] - offsets[i]));
                worst = worst.max(err.abs());
            }
        }
        Ok(worst)
    }

    pub fn max_radius_error(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.radius() - self.hopf.mu).abs())
            .fold(0.0, f64::max)
    }
}

fn rotation_table(offsets: &[f64; NUM_LEGS]) -> [[(f64, f64); NUM_LEGS]; NUM_LEGS] {
    let mut table = [[(1.0, 0.0); NUM_LEGS]; NUM_LEGS];
    for i in 0..NUM_LEGS {
        for j in 0..NUM_LEGS {
            let theta = offsets[j] - offsets[i];
            table[i][j] = (theta.cos(), theta.sin());
        }
    }
    table
}
