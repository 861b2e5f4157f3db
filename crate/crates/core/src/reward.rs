//! Per-step locomotion reward: velocity tracking, stability, contact imitation
//! and energy.

use serde::{Deserialize, Serialize};

use crate::cpg::NUM_LEGS;
use crate::gait::Contact;
use crate::{Error, Result};

pub const NUM_JOINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_v: f64,
    pub w_f: f64,
    pub w_s: f64,
    pub w_e: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_v: 1.0,
            w_f: 2.0,
            w_s: 1.5,
            w_e: 0.0001,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_v, self.w_f, self.w_s, self.w_e]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidParameter(format!("reward weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityRewardParams {
    pub c_alpha: f64,
    pub c_beta: f64,
}

impl Default for VelocityRewardParams {
    fn default() -> Self {
        Self {
            c_alpha: 16.0,
            c_beta: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_v: f64,
    pub r_s: f64,
    pub r_f: f64,
    pub r_e: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Weighted sum, always evaluated in this fixed order.
    pub fn weighted_total(weights: &RewardWeights, r_v: f64, r_s: f64, r_f: f64, r_e: f64) -> f64 {
        weights.w_v * r_v + weights.w_f * r_f + weights.w_s * r_s + weights.w_e * r_e
    }

    pub fn from_terms(weights: &RewardWeights, r_v: f64, r_s: f64, r_f: f64, r_e: f64) -> Self {
        Self {
            r_v,
            r_s,
            r_f,
            r_e,
            total: Self::weighted_total(weights, r_v, r_s, r_f, r_e),
        }
    }
}

/// Gaussian below the target speed, compact bump above it.
///
/// The tracking error is `eps = (v_ref . v) / |v_ref|^2 - 1`; the bump is
/// supported on `0 <= eps < 1/sqrt(c_beta)`.
pub fn velocity_reward(v: [f64; 2], v_ref: [f64; 2], params: &VelocityRewardParams) -> Result<f64> {
    let norm2 = v_ref[0] * v_ref[0] + v_ref[1] * v_ref[1];
    if norm2 == 0.0 {
        return Err(Error::ZeroTargetVelocity);
    }
    let ratio = (v_ref[0] * v[0] + v_ref[1] * v[1]) / norm2;
    Ok(velocity_reward_from_error(ratio - 1.0, params))
}

pub fn velocity_reward_from_error(eps: f64, params: &VelocityRewardParams) -> f64 {
    if eps < 0.0 {
        (-params.c_alpha * eps * eps).exp()
    } else if eps < 1.0 / params.c_beta.sqrt() {
        (1.0 - 1.0 / (1.0 - params.c_beta * eps * eps)).exp()
    } else {
        0.0
    }
}

/// Scalar-first unit quaternion `(w, x, y, z)`, body to world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Intrinsic Z-Y-X (yaw, pitch, roll) composition.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], yaw)
            * Self::from_axis_angle([0.0, 1.0, 0.0], pitch)
            * Self::from_axis_angle([1.0, 0.0, 0.0], roll)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }
}

pub type Matrix3 = [[f64; 3]; 3];

/// Rotation matrix of a quaternion; inputs off the unit sphere by more than
/// 1e-6 are renormalized first.
pub fn quaternion_to_rotation(q: &Quaternion) -> Result<Matrix3> {
    let n = q.norm();
    if !(n.is_finite() && n > 1e-9) {
        return Err(Error::DegenerateQuaternion(n));
    }
    let q = if (n - 1.0).abs() > 1e-6 {
        Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n)
    } else {
        *q
    };
    let Quaternion { w, x, y, z } = q;
    Ok([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Negative norm of the tilt entries `(R31, R32)`.
pub fn stability_reward(q: &Quaternion) -> Result<f64> {
    let r = quaternion_to_rotation(q)?;
    Ok(-r[2][0].hypot(r[2][1]))
}

pub fn contact_reward(f_ref: &[Contact; NUM_LEGS], f: &[Contact; NUM_LEGS]) -> Result<f64> {
    for &v in f_ref.iter().chain(f) {
        if v != 1 && v != -1 {
            return Err(Error::InvalidContact(v as f64));
        }
    }
    let dot: i32 = f_ref.iter().zip(f).map(|(&a, &b)| a as i32 * b as i32).sum();
    Ok(dot as f64 / 4.0)
}

pub fn energy_reward(tau: &[f64; NUM_JOINTS], qdot: &[f64; NUM_JOINTS]) -> f64 {
    let power: f64 = tau.iter().zip(qdot).map(|(t, w)| t * w).sum();
    -power.abs()
}

/// Everything one step of reward accounting needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub velocity: [f64; 2],
    pub target_velocity: [f64; 2],
    pub orientation: Quaternion,
    pub reference_contacts: [Contact; NUM_LEGS],
    pub contacts: [Contact; NUM_LEGS],
    pub torques: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
}

pub fn total_reward(
    inputs: &RewardInputs,
    weights: &RewardWeights,
    params: &VelocityRewardParams,
) -> Result<RewardBreakdown> {
    let r_v = velocity_reward(inputs.velocity, inputs.target_velocity, params)?;
    let r_s = stability_reward(&inputs.orientation)?;
    let r_f = contact_reward(&inputs.reference_contacts, &inputs.contacts)?;
    let r_e = energy_reward(&inputs.torques, &inputs.joint_velocities);
    Ok(RewardBreakdown::from_terms(weights, r_v, r_s, r_f, r_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params() -> VelocityRewardParams {
        VelocityRewardParams::default()
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(velocity_reward([0.6, 0.0], [0.6, 0.0], &params()).unwrap(), 1.0);
        let r = velocity_reward([0.45, 0.0], [0.6, 0.0], &params()).unwrap();
        assert_abs_diff_eq!(r, (-1.0f64).exp(), epsilon = 1e-12);
        let r = velocity_reward([0.72, 0.0], [0.6, 0.0], &params()).unwrap();
        assert!(r.abs() < 1e-9, "{r}");
        assert!(matches!(
            velocity_reward([0.1, 0.0], [0.0, 0.0], &params()),
            Err(Error::ZeroTargetVelocity)
        ));
    }

    #[test]
    fn velocity_continuity_at_zero() {
        let p = params();
        let left = velocity_reward_from_error(-1e-9, &p);
        let right = velocity_reward_from_error(1e-9, &p);
        assert!((left - 1.0).abs() < 1e-12 && (right - 1.0).abs() < 1e-12);
        assert_eq!(velocity_reward_from_error(0.0, &p), 1.0);
    }

    #[test]
    fn rotation_examples() {
        let id = quaternion_to_rotation(&Quaternion::IDENTITY).unwrap();
        assert_eq!(id, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let rx = quaternion_to_rotation(&Quaternion::from_axis_angle([1.0, 0.0, 0.0], PI / 2.0)).unwrap();
        for (a, b) in rx[2].iter().zip([0.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(quaternion_to_rotation(&Quaternion::new(0.0, 0.0, 0.0, 0.0)).is_err());
        // non-unit input is renormalized
        let scaled = quaternion_to_rotation(&Quaternion::new(2.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(scaled, id);
    }

    #[test]
    fn stability_examples() {
        assert_eq!(stability_reward(&Quaternion::IDENTITY).unwrap(), 0.0);
        let roll = Quaternion::from_euler(PI / 6.0, 0.0, 0.0);
        assert_abs_diff_eq!(stability_reward(&roll).unwrap(), -0.5, epsilon = 1e-12);
        for yaw in [-2.0, 0.3, 1.0, 3.0] {
            let q = Quaternion::from_euler(0.0, 0.0, yaw);
            assert!(stability_reward(&q).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn contact_and_energy_examples() {
        assert_eq!(contact_reward(&[1, -1, -1, 1], &[1, -1, -1, 1]).unwrap(), 1.0);
        assert_eq!(contact_reward(&[1, -1, -1, 1], &[1, -1, -1, -1]).unwrap(), 0.5);
        assert_eq!(contact_reward(&[1, -1, -1, 1], &[-1, 1, 1, -1]).unwrap(), -1.0);
        assert!(contact_reward(&[1, 0, -1, 1], &[1, 1, 1, 1]).is_err());

        let tau = [1.0; NUM_JOINTS];
        assert_eq!(energy_reward(&tau, &[0.0; NUM_JOINTS]), 0.0);
        let mut qdot = [0.0; NUM_JOINTS];
        qdot[0] = 2.0;
        qdot[5] = 3.0;
        assert_eq!(energy_reward(&tau, &qdot), -5.0);
        assert_eq!(energy_reward(&tau, &qdot.map(|v| -v)), -5.0);
    }

    fn perfect() -> RewardInputs {
        RewardInputs {
            velocity: [0.6, 0.0],
            target_velocity: [0.6, 0.0],
            orientation: Quaternion::IDENTITY,
            reference_contacts: [1, -1, -1, 1],
            contacts: [1, -1, -1, 1],
            torques: [3.0; NUM_JOINTS],
            joint_velocities: [0.0; NUM_JOINTS],
        }
    }

    #[test]
    fn total_examples() {
        let w = RewardWeights::default();
        let b = total_reward(&perfect(), &w, &params()).unwrap();
        assert_eq!(b.total, 3.0);
        let mut mismatch = perfect();
        mismatch.contacts = [-1, 1, 1, -1];
        assert_eq!(total_reward(&mismatch, &w, &params()).unwrap().total, -1.0);
        let zero = RewardWeights { w_v: 0.0, w_f: 0.0, w_s: 0.0, w_e: 0.0 };
        assert_eq!(total_reward(&mismatch, &zero, &params()).unwrap().total, 0.0);
        assert!(RewardWeights { w_v: -1.0, ..w }.validate().is_err());
    }

    fn arb_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
            .prop_map(|(w, x, y, z)| {
                let n = (w * w + x * x + y * y + z * z).sqrt();
                Quaternion::new(w / n, x / n, y / n, z / n)
            })
    }

    fn matmul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    proptest! {
        #[test]
        fn rotation_is_homomorphism(q1 in arb_quat(), q2 in arb_quat()) {
            let lhs = quaternion_to_rotation(&(q1 * q2)).unwrap();
            let rhs = matmul(&quaternion_to_rotation(&q1).unwrap(), &quaternion_to_rotation(&q2).unwrap());
            for i in 0..3 { for j in 0..3 { prop_assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-9); } }
            let det = lhs[0][0] * (lhs[1][1] * lhs[2][2] - lhs[1][2] * lhs[2][1])
                - lhs[0][1] * (lhs[1][0] * lhs[2][2] - lhs[1][2] * lhs[2][0])
                + lhs[0][2] * (lhs[1][0] * lhs[2][1] - lhs[1][1] * lhs[2][0]);
            prop_assert!((det - 1.0).abs() < 1e-9);
        }

        #[test]
        fn stability_is_yaw_invariant(q in arb_quat(), yaw in -PI..PI) {
            let yawed = Quaternion::from_axis_angle([0.0, 0.0, 1.0], yaw) * q;
            let a = stability_reward(&q).unwrap();
            let b = stability_reward(&yawed).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(a <= 0.0 && a >= -std::f64::consts::SQRT_2);
        }

        #[test]
        fn velocity_rotation_invariant(vx in -2.0..2.0f64, vy in -2.0..2.0f64, rx in 0.1..1.5f64, ry in -1.0..1.0f64, angle in -PI..PI) {
            let rot = |v: [f64; 2]| [angle.cos() * v[0] - angle.sin() * v[1], angle.sin() * v[0] + angle.cos() * v[1]];
            let a = velocity_reward([vx, vy], [rx, ry], &params()).unwrap();
            let b = velocity_reward(rot([vx, vy]), rot([rx, ry]), &params()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn velocity_monotone_in_error(e1 in 0.0..0.3f64, e2 in 0.0..0.3f64) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let p = params();
            prop_assert!(velocity_reward_from_error(hi, &p) <= velocity_reward_from_error(lo, &p));
            prop_assert!(velocity_reward_from_error(-hi, &p) <= velocity_reward_from_error(-lo, &p));
        }

        #[test]
        fn contact_self_and_complement(bits in prop::array::uniform4(prop::bool::ANY)) {
            let f = bits.map(|b| if b { 1 } else { -1 });
            prop_assert_eq!(contact_reward(&f, &f).unwrap(), 1.0);
            prop_assert_eq!(contact_reward(&f, &f.map(|v| -v)).unwrap(), -1.0);
        }
    }
}
