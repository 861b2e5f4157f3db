//! Gait-reference generation, reward model, terrain perception and a mock
//! kinematics harness for CPG-guided quadruped locomotion.

pub mod actuation;
pub mod cpg;
mod error;
pub mod gait;
pub mod harness;
pub mod io;
pub mod perception;
pub mod reward;
pub mod terrain;

pub use error::{Error, Result};
