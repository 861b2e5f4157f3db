//! Position-keyed gait commands: a flat-ground command, a slower command over
//! obstacles, and linear ramps between them.

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainModel;
use crate::{Error, Result};

pub const DEFAULT_RAMP_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitCommand {
    pub frequency: f64,
    pub velocity: f64,
}

impl GaitCommand {
    pub const FLAT: Self = Self { frequency: 3.0, velocity: 0.8 };
    pub const OBSTACLE: Self = Self { frequency: 2.0, velocity: 0.4 };

    fn lerp(a: Self, b: Self, s: f64) -> Self {
        Self {
            frequency: a.frequency + s * (b.frequency - a.frequency),
            velocity: a.velocity + s * (b.velocity - a.velocity),
        }
    }
}

/// Obstacle stretch `[x_start, x_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub x_start: f64,
    pub x_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSchedule {
    pub flat: GaitCommand,
    pub obstacle: GaitCommand,
    pub zones: Vec<Zone>,
    /// Length of the linear ramp on either side of each zone (m).
    pub ramp_width: f64,
}

impl TransitionSchedule {
    pub fn new(flat: GaitCommand, obstacle: GaitCommand, zones: Vec<Zone>, ramp_width: f64) -> Result<Self> {
        let s = Self { flat, obstacle, zones, ramp_width };
        s.validate()?;
        Ok(s)
    }

    /// Same command everywhere.
    pub fn constant(command: GaitCommand) -> Self {
        Self { flat: command, obstacle: command, zones: Vec::new(), ramp_width: DEFAULT_RAMP_WIDTH }
    }

    /// Default commands with one zone over the terrain's obstacle, if any.
    pub fn for_terrain(terrain: &TerrainModel) -> Self {
        Self {
            flat: GaitCommand::FLAT,
            obstacle: GaitCommand::OBSTACLE,
            zones: terrain
                .obstacle_span()
                .map(|(x_start, x_end)| vec![Zone { x_start, x_end }])
                .unwrap_or_default(),
            ramp_width: DEFAULT_RAMP_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in [self.flat, self.obstacle] {
            if !(c.frequency > 0.0 && c.frequency.is_finite() && c.velocity.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid command {c:?}")));
            }
        }
        if !(self.ramp_width >= 0.0 && self.ramp_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid ramp width {}", self.ramp_width)));
        }
        for z in &self.zones {
            if !(z.x_start < z.x_end) {
                return Err(Error::InvalidParameter(format!("zone {z:?} has x_start >= x_end")));
            }
        }
        let mut sorted = self.zones.clone();
        sorted.sort_by(|a, b| a.x_start.total_cmp(&b.x_start));
        for w in sorted.windows(2) {
            if w[0].x_end + self.ramp_width > w[1].x_start - self.ramp_width {
                return Err(Error::InvalidParameter(format!("zones {:?} and {:?} overlap", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Fraction of the way from the flat to the obstacle command at `x`.
    pub fn blend(&self, x: f64) -> f64 {
        let w = self.ramp_width;
        self.zones
            .iter()
            .map(|z| {
                if x >= z.x_start && x <= z.x_end {
                    1.0
                } else if w > 0.0 && x < z.x_start && x > z.x_start - w {
                    (x - (z.x_start - w)) / w
                } else if w > 0.0 && x > z.x_end && x < z.x_end + w {
                    (z.x_end + w - x) / w
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn command(&self, x: f64) -> GaitCommand {
        GaitCommand::lerp(self.flat, self.obstacle, self.blend(x))
    }
}

pub fn schedule_command(schedule: &TransitionSchedule, x: f64) -> (f64, f64) {
    let c = schedule.command(x);
    (c.frequency, c.velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sched() -> TransitionSchedule {
        TransitionSchedule::new(GaitCommand::FLAT, GaitCommand::OBSTACLE, vec![Zone { x_start: 2.0, x_end: 4.0 }], 0.5)
            .unwrap()
    }

    #[test]
    fn commands_before_inside_and_midway() {
        let s = sched();
        assert_eq!(schedule_command(&s, 0.0), (3.0, 0.8));
        assert_eq!(schedule_command(&s, 3.0), (2.0, 0.4));
        let (f, v) = schedule_command(&s, 1.75);
        assert_abs_diff_eq!(f, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-12);
        let (f, v) = schedule_command(&s, 4.25);
        assert_abs_diff_eq!(f, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-12);
        assert_eq!(schedule_command(&s, 5.0), (3.0, 0.8));
    }

    #[test]
    fn invalid_zones_are_rejected() {
        let z = |a, b| Zone { x_start: a, x_end: b };
        assert!(TransitionSchedule::new(GaitCommand::FLAT, GaitCommand::OBSTACLE, vec![z(3.0, 2.0)], 0.5).is_err());
        assert!(
            TransitionSchedule::new(GaitCommand::FLAT, GaitCommand::OBSTACLE, vec![z(1.0, 2.0), z(2.5, 3.0)], 0.5)
                .is_err()
        );
        assert!(
            TransitionSchedule::new(GaitCommand::FLAT, GaitCommand::OBSTACLE, vec![z(1.0, 2.0), z(3.5, 4.0)], 0.5)
                .is_ok()
        );
    }

    proptest! {
        #[test]
        fn command_is_continuous(x in -1.0f64..7.0) {
            let s = sched();
            let h = 1e-7;
            let (f0, v0) = schedule_command(&s, x);
            let (f1, v1) = schedule_command(&s, x + h);
            // ramp slopes are 2 Hz/m and 0.8 (m/s)/m
            prop_assert!((f1 - f0).abs() <= 2.0 * h + 1e-12);
            prop_assert!((v1 - v0).abs() <= 0.8 * h + 1e-12);
            prop_assert!((2.0..=3.0).contains(&f0));
        }
    }
}
