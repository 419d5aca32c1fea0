//! Tracking rewards evaluated on pairs of trajectories.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::rotation_angle_between;
use crate::labels::ContactLabels;
use crate::motion::HOIFrame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("skeleton mismatch: {0}")]
    SkeletonMismatch(String),
    #[error("missing {0}")]
    MissingData(String),
    #[error("unknown joint {0:?}")]
    UnknownJoint(String),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda_p: f64,
    pub lambda_r: f64,
    pub lambda_v: f64,
    pub lambda_omega: f64,
    pub lambda_reg: f64,
    pub lambda_acc: f64,
    pub lambda_contact: f64,
    /// Object term weights; `None` reuses the body weight.
    pub object_lambda_p: Option<f64>,
    pub object_lambda_r: Option<f64>,
    pub object_lambda_v: Option<f64>,
    pub object_lambda_omega: Option<f64>,
    /// Force magnitude (N) at or above which a joint is in contact.
    pub force_threshold: f64,
    pub key_joints: Vec<String>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_p: -1.0,
            lambda_r: -0.3,
            lambda_v: -0.02,
            lambda_omega: -0.02,
            lambda_reg: -0.01,
            lambda_acc: -0.01,
            lambda_contact: -3.0,
            object_lambda_p: None,
            object_lambda_r: None,
            object_lambda_v: None,
            object_lambda_omega: None,
            force_threshold: 1.0,
            key_joints: ["L_Wrist", "R_Wrist", "L_Ankle", "R_Ankle"].map(String::from).to_vec(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [
            ("lambda_p", Some(self.lambda_p)),
            ("lambda_r", Some(self.lambda_r)),
            ("lambda_v", Some(self.lambda_v)),
            ("lambda_omega", Some(self.lambda_omega)),
            ("lambda_reg", Some(self.lambda_reg)),
            ("lambda_acc", Some(self.lambda_acc)),
            ("lambda_contact", Some(self.lambda_contact)),
            ("object_lambda_p", self.object_lambda_p),
            ("object_lambda_r", self.object_lambda_r),
            ("object_lambda_v", self.object_lambda_v),
            ("object_lambda_omega", self.object_lambda_omega),
        ];
        for (name, v) in all {
            if let Some(v) = v {
                if !(v.is_finite() && v <= 0.0) {
                    return Err(RewardError::InvalidConfig(format!("{name} = {v} must be finite and <= 0")));
                }
            }
        }
        if !(self.force_threshold.is_finite() && self.force_threshold >= 0.0) {
            return Err(RewardError::InvalidConfig(format!("force_threshold = {}", self.force_threshold)));
        }
        Ok(())
    }

    fn object_lambdas(&self) -> [f64; 4] {
        [
            self.object_lambda_p.unwrap_or(self.lambda_p),
            self.object_lambda_r.unwrap_or(self.lambda_r),
            self.object_lambda_v.unwrap_or(self.lambda_v),
            self.object_lambda_omega.unwrap_or(self.lambda_omega),
        ]
    }
}

pub fn joint_indices(skeleton: &[String], names: &[String]) -> Result<Vec<usize>, RewardError> {
    names
        .iter()
        .map(|n| skeleton.iter().position(|j| j == n).ok_or_else(|| RewardError::UnknownJoint(n.clone())))
        .collect()
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T, RewardError> {
    v.as_ref().ok_or_else(|| RewardError::MissingData(what.to_string()))
}

fn sum_sq_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

/// Body tracking reward. Positions are compared on the configured key
/// joints; rotations and velocities on every joint. Rotation error is the
/// geodesic angle between simulated and reference local rotations.
pub fn body_reward(sim: &HOIFrame, reference: &HOIFrame, skeleton: &[String], cfg: &RewardConfig) -> Result<f64, RewardError> {
    let n = skeleton.len();
    if sim.joint_rotations.len() != n || reference.joint_rotations.len() != n {
        return Err(RewardError::SkeletonMismatch(format!(
            "{} and {} rotations for {n} joints",
            sim.joint_rotations.len(),
            reference.joint_rotations.len()
        )));
    }
    let keys = joint_indices(skeleton, &cfg.key_joints)?;
    let mut pos = 0.0;
    if !keys.is_empty() {
        let ps = need(&sim.joint_positions, "simulated joint positions")?;
        let pr = need(&reference.joint_positions, "reference joint positions")?;
        for &k in &keys {
            pos += (ps[k] - pr[k]).norm_squared();
        }
    }
    let rot: f64 = sim
        .joint_rotations
        .iter()
        .zip(&reference.joint_rotations)
        .map(|(a, b)| rotation_angle_between(a, b).powi(2))
        .sum();
    let vel = sum_sq_diff(
        need(&sim.joint_velocities, "simulated joint velocities")?,
        need(&reference.joint_velocities, "reference joint velocities")?,
    );
    let ang = sum_sq_diff(
        need(&sim.joint_angular_velocities, "simulated joint angular velocities")?,
        need(&reference.joint_angular_velocities, "reference joint angular velocities")?,
    );
    Ok((cfg.lambda_p * pos + cfg.lambda_r * rot + cfg.lambda_v * vel + cfg.lambda_omega * ang).exp())
}

/// Object tracking reward: position, rotation angle, linear and angular
/// velocity of the single object.
pub fn object_reward(sim: &HOIFrame, reference: &HOIFrame, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let [lp, lr, lv, lw] = cfg.object_lambdas();
    let pos = (sim.object.translation() - reference.object.translation()).norm_squared();
    let rot = sim.object.rotation_error(&reference.object).powi(2);
    let vel = (need(&sim.object_velocity, "simulated object velocity")?
        - need(&reference.object_velocity, "reference object velocity")?)
    .norm_squared();
    let ang = (need(&sim.object_angular_velocity, "simulated object angular velocity")?
        - need(&reference.object_angular_velocity, "reference object angular velocity")?)
    .norm_squared();
    Ok((lp * pos + lr * rot + lv * vel + lw * ang).exp())
}

/// Penalizes the action norm and the change of joint velocities between
/// consecutive frames.
pub fn regularization_reward(frame: &HOIFrame, previous: &HOIFrame, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let a = need(&frame.action, "action")?;
    let v1 = need(&frame.joint_velocities, "joint velocities")?;
    let v0 = need(&previous.joint_velocities, "previous joint velocities")?;
    if v0.len() != v1.len() {
        return Err(RewardError::SkeletonMismatch("velocity counts differ".into()));
    }
    let action = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let acc: f64 = v1.iter().zip(v0).map(|(x, y)| (x - y).norm()).sum();
    Ok((cfg.lambda_reg * action + cfg.lambda_acc * acc).exp())
}

pub fn imitation_reward(body: f64, object: f64, regularization: f64) -> f64 {
    body * object * regularization
}

/// Contact reward over labeled joints. A joint counts as not in contact when
/// its force magnitude is strictly below the threshold; joints labeled
/// `contact` should touch, joints labeled `separate` should not.
pub fn contact_reward(
    forces: &[Vector3<f64>],
    skeleton: &[String],
    labels: &ContactLabels,
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    if forces.len() != skeleton.len() {
        return Err(RewardError::SkeletonMismatch(format!("{} forces for {} joints", forces.len(), skeleton.len())));
    }
    let mut mismatches = 0.0;
    for (names, expected) in [(&labels.contact, 0.0), (&labels.separate, 1.0)] {
        for j in joint_indices(skeleton, names)? {
            let free = if forces[j].norm() < cfg.force_threshold { 1.0 } else { 0.0 };
            mismatches += f64::abs(free - expected);
        }
    }
    Ok((cfg.lambda_contact * mismatches).exp())
}
