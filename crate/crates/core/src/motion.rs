//! HOI milestone sequences: containers, keyframe extraction, interpolation
//! and the motion JSON format.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_log, slerp, Pose6DoF};

/// Body parts that contact labels may name.
pub const LABELED_PARTS: [&str; 17] = [
    "Pelvis", "L_Knee", "L_Ankle", "L_Toe", "R_Knee", "R_Ankle", "R_Toe", "Torso", "Chest", "Neck", "Head",
    "L_Shoulder", "L_Elbow", "L_Wrist", "R_Shoulder", "R_Elbow", "R_Wrist",
];

/// Milestone times closer than this are treated as equal to a grid time.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid sequence: {0}")]
    Invalid(String),
    #[error("keyframe count {k} out of range 1..={n}")]
    KeyframeCount { k: usize, n: usize },
    #[error("duplicate or decreasing timestamp at milestone {0}")]
    DuplicateTimestamp(usize),
    #[error("time {0} outside the sequence")]
    OutOfRange(f64),
    #[error("motion json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HOIFrame {
    pub time: f64,
    pub root_position: Vector3<f64>,
    pub root_rotation: UnitQuaternion<f64>,
    /// Local joint rotations, one per skeleton joint.
    pub joint_rotations: Vec<UnitQuaternion<f64>>,
    pub object: Pose6DoF,
    /// World joint positions, meters.
    pub joint_positions: Option<Vec<Vector3<f64>>>,
    pub joint_velocities: Option<Vec<Vector3<f64>>>,
    pub joint_angular_velocities: Option<Vec<Vector3<f64>>>,
    pub object_velocity: Option<Vector3<f64>>,
    pub object_angular_velocity: Option<Vector3<f64>>,
    pub action: Option<Vec<f64>>,
    /// Contact force per joint, newtons.
    pub forces: Option<Vec<Vector3<f64>>>,
}

impl HOIFrame {
    /// Frame with identity rotations and no optional data.
    pub fn rest(time: f64, joints: usize) -> Self {
        Self {
            time,
            root_position: Vector3::zeros(),
            root_rotation: UnitQuaternion::identity(),
            joint_rotations: vec![UnitQuaternion::identity(); joints],
            object: Pose6DoF::identity(),
            joint_positions: None,
            joint_velocities: None,
            joint_angular_velocities: None,
            object_velocity: None,
            object_angular_velocity: None,
            action: None,
            forces: None,
        }
    }

    fn check(&self, joints: usize, i: usize) -> Result<(), MotionError> {
        let bad = |what: &str| Err(MotionError::Invalid(format!("frame {i}: {what}")));
        if !self.time.is_finite() {
            return bad("non-finite time");
        }
        if self.joint_rotations.len() != joints {
            return bad("joint count differs from skeleton");
        }
        let per_joint = [
            ("positions", self.joint_positions.as_ref().map(Vec::len)),
            ("velocities", self.joint_velocities.as_ref().map(Vec::len)),
            ("angular velocities", self.joint_angular_velocities.as_ref().map(Vec::len)),
            ("forces", self.forces.as_ref().map(Vec::len)),
        ];
        for (name, len) in per_joint {
            if len.is_some_and(|l| l != joints) {
                return bad(&format!("{name} count differs from skeleton"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HOISequence {
    pub fps: f64,
    pub skeleton: Vec<String>,
    pub frames: Vec<HOIFrame>,
    /// Source frame indices when the sequence came from keyframe extraction.
    pub keyframe_indices: Option<Vec<usize>>,
}

impl HOISequence {
    pub fn new(fps: f64, skeleton: Vec<String>, frames: Vec<HOIFrame>) -> Result<Self, MotionError> {
        let s = Self { fps, skeleton, frames, keyframe_indices: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MotionError::Invalid(format!("fps {}", self.fps)));
        }
        let n = self.skeleton.len();
        for (i, f) in self.frames.iter().enumerate() {
            f.check(n, i)?;
            if i > 0 && f.time < self.frames[i - 1].time {
                return Err(MotionError::Invalid(format!("time decreases at frame {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.skeleton.iter().position(|j| j == name)
    }

    pub fn from_json(text: &str) -> Result<Self, MotionError> {
        let file: MotionFile = serde_json::from_str(text)?;
        let seq = file.into_sequence()?;
        seq.validate()?;
        Ok(seq)
    }

    pub fn to_json(&self) -> Result<String, MotionError> {
        Ok(serde_json::to_string_pretty(&MotionFile::from_sequence(self))?)
    }
}

/// Indices `round(i (N-1) / (k-1))`, rounding halves up; `k = 1` gives `[0]`.
pub fn keyframe_indices(n: usize, k: usize) -> Result<Vec<usize>, MotionError> {
    if k == 0 || k > n {
        return Err(MotionError::KeyframeCount { k, n });
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    let (m, d) = (n - 1, k - 1);
    Ok((0..k).map(|i| (2 * i * m + d) / (2 * d)).collect())
}

pub fn extract_keyframes(seq: &HOISequence, k: usize) -> Result<HOISequence, MotionError> {
    let idx = keyframe_indices(seq.len(), k)?;
    Ok(HOISequence {
        fps: seq.fps,
        skeleton: seq.skeleton.clone(),
        frames: idx.iter().map(|&i| seq.frames[i].clone()).collect(),
        keyframe_indices: Some(idx),
    })
}

fn check_milestones(m: &HOISequence) -> Result<(), MotionError> {
    m.validate()?;
    if m.len() < 2 {
        return Err(MotionError::Invalid("need at least two milestones".into()));
    }
    for i in 1..m.len() {
        if m.frames[i].time <= m.frames[i - 1].time {
            return Err(MotionError::DuplicateTimestamp(i));
        }
    }
    Ok(())
}

fn lerp3(a: &Vector3<f64>, b: &Vector3<f64>, u: f64) -> Vector3<f64> {
    a + (b - a) * u
}

fn blend(a: &HOIFrame, b: &HOIFrame, time: f64) -> HOIFrame {
    let u = (time - a.time) / (b.time - a.time);
    let object = Pose6DoF::from_parts(
        slerp(a.object.rotation(), b.object.rotation(), u),
        lerp3(a.object.translation(), b.object.translation(), u),
        a.object.scale() + (b.object.scale() - a.object.scale()) * u,
    );
    let joint_positions = match (&a.joint_positions, &b.joint_positions) {
        (Some(pa), Some(pb)) => Some(pa.iter().zip(pb).map(|(p, q)| lerp3(p, q, u)).collect()),
        _ => None,
    };
    HOIFrame {
        time,
        root_position: lerp3(&a.root_position, &b.root_position, u),
        root_rotation: slerp(&a.root_rotation, &b.root_rotation, u),
        joint_rotations: a.joint_rotations.iter().zip(&b.joint_rotations).map(|(p, q)| slerp(p, q, u)).collect(),
        object,
        joint_positions,
        ..HOIFrame::rest(time, 0)
    }
}

fn milestone_copy(m: &HOIFrame) -> HOIFrame {
    HOIFrame {
        joint_velocities: None,
        joint_angular_velocities: None,
        object_velocity: None,
        object_angular_velocity: None,
        ..m.clone()
    }
}

/// Pose at time `t`: a milestone's pose exactly when `t` hits its timestamp,
/// otherwise lerp of positions and slerp of rotations between neighbours.
/// Velocities are left empty.
pub fn sample_at(milestones: &HOISequence, t: f64) -> Result<HOIFrame, MotionError> {
    check_milestones(milestones)?;
    sample_unchecked(&milestones.frames, t)
}

fn sample_unchecked(frames: &[HOIFrame], t: f64) -> Result<HOIFrame, MotionError> {
    let first = frames[0].time;
    let last = frames[frames.len() - 1].time;
    if !(t >= first - TIME_EPS && t <= last + TIME_EPS) {
        return Err(MotionError::OutOfRange(t));
    }
    if let Some(m) = frames.iter().find(|f| (f.time - t).abs() <= TIME_EPS) {
        return Ok(milestone_copy(m));
    }
    let j = frames.partition_point(|f| f.time <= t);
    Ok(blend(&frames[j - 1], &frames[j], t))
}

/// Dense motion at `fps` spanning the milestones, with velocities filled by
/// central differences (one-sided at the ends).
pub fn interpolate(milestones: &HOISequence, fps: f64) -> Result<HOISequence, MotionError> {
    check_milestones(milestones)?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(MotionError::Invalid(format!("fps {fps}")));
    }
    let frames = &milestones.frames;
    let t0 = frames[0].time;
    let span = frames[frames.len() - 1].time - t0;
    let count = (span * fps + TIME_EPS).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(sample_unchecked(frames, t0 + i as f64 / fps)?);
    }
    fill_velocities(&mut out, fps);
    Ok(HOISequence { fps, skeleton: milestones.skeleton.clone(), frames: out, keyframe_indices: None })
}

/// Finite-difference velocities over uniformly spaced frames.
pub fn fill_velocities(frames: &mut [HOIFrame], fps: f64) {
    let n = frames.len();
    if n < 2 {
        return;
    }
    let have_positions = frames.iter().all(|f| f.joint_positions.is_some());
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let rate = fps / (b - a) as f64;
        let (fa, fb) = (&frames[a], &frames[b]);
        let joint_angular: Vec<Vector3<f64>> = fa
            .joint_rotations
            .iter()
            .zip(&fb.joint_rotations)
            .map(|(qa, qb)| rotation_log(&(qb * qa.inverse())) * rate)
            .collect();
        let joint_linear: Option<Vec<Vector3<f64>>> = if have_positions {
            let (pa, pb) = (fa.joint_positions.as_ref().unwrap(), fb.joint_positions.as_ref().unwrap());
            Some(pa.iter().zip(pb).map(|(p, q)| (q - p) * rate).collect())
        } else {
            None
        };
        let ov = (fb.object.translation() - fa.object.translation()) * rate;
        let ow = rotation_log(&(fb.object.rotation() * fa.object.rotation().inverse())) * rate;
        let f = &mut frames[i];
        f.joint_angular_velocities = Some(joint_angular);
        f.joint_velocities = joint_linear;
        f.object_velocity = Some(ov);
        f.object_angular_velocity = Some(ow);
    }
}

type Q = [f64; 4];
type P = [f64; 3];

#[derive(Serialize, Deserialize)]
struct ObjectJson {
    rot: Q,
    pos: P,
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vel: Option<P>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angvel: Option<P>,
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    t: f64,
    root_pos: P,
    root_rot: Q,
    joints: Vec<Q>,
    object: ObjectJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<P>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vel: Option<Vec<P>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angvel: Option<Vec<P>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forces: Option<Vec<P>>,
}

#[derive(Serialize, Deserialize)]
struct MotionFile {
    fps: f64,
    skeleton: Vec<String>,
    frames: Vec<FrameJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keyframe_indices: Option<Vec<usize>>,
}

fn q_to(q: &UnitQuaternion<f64>) -> Q {
    [q.w, q.i, q.j, q.k]
}

/// Unit quaternion from `(w, x, y, z)`; inputs already unit to 1e-12 are
/// kept bit-for-bit.
fn q_from(q: Q) -> Result<UnitQuaternion<f64>, MotionError> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = raw.norm();
    if !(n.is_finite() && n > 1e-12) {
        return Err(MotionError::Invalid(format!("quaternion {q:?}")));
    }
    if (n - 1.0).abs() <= 1e-12 {
        Ok(UnitQuaternion::new_unchecked(raw))
    } else {
        Ok(UnitQuaternion::from_quaternion(raw))
    }
}

fn v_to(v: &Vector3<f64>) -> P {
    [v.x, v.y, v.z]
}

fn vs_to(v: &[Vector3<f64>]) -> Vec<P> {
    v.iter().map(v_to).collect()
}

fn vs_from(v: Vec<P>) -> Vec<Vector3<f64>> {
    v.into_iter().map(Vector3::from).collect()
}

impl MotionFile {
    fn from_sequence(s: &HOISequence) -> Self {
        let frames = s
            .frames
            .iter()
            .map(|f| FrameJson {
                t: f.time,
                root_pos: v_to(&f.root_position),
                root_rot: q_to(&f.root_rotation),
                joints: f.joint_rotations.iter().map(q_to).collect(),
                object: ObjectJson {
                    rot: f.object.wxyz(),
                    pos: v_to(f.object.translation()),
                    scale: f.object.scale(),
                    vel: f.object_velocity.as_ref().map(v_to),
                    angvel: f.object_angular_velocity.as_ref().map(v_to),
                },
                positions: f.joint_positions.as_deref().map(vs_to),
                vel: f.joint_velocities.as_deref().map(vs_to),
                angvel: f.joint_angular_velocities.as_deref().map(vs_to),
                action: f.action.clone(),
                forces: f.forces.as_deref().map(vs_to),
            })
            .collect();
        Self { fps: s.fps, skeleton: s.skeleton.clone(), frames, keyframe_indices: s.keyframe_indices.clone() }
    }

    fn into_sequence(self) -> Result<HOISequence, MotionError> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for f in self.frames {
            let o = f.object;
            if !(o.scale.is_finite() && o.scale > 0.0) {
                return Err(MotionError::Invalid(format!("object scale {}", o.scale)));
            }
            frames.push(HOIFrame {
                time: f.t,
                root_position: Vector3::from(f.root_pos),
                root_rotation: q_from(f.root_rot)?,
                joint_rotations: f.joints.into_iter().map(q_from).collect::<Result<_, _>>()?,
                object: Pose6DoF::from_parts(q_from(o.rot)?, Vector3::from(o.pos), o.scale),
                joint_positions: f.positions.map(vs_from),
                joint_velocities: f.vel.map(vs_from),
                joint_angular_velocities: f.angvel.map(vs_from),
                object_velocity: o.vel.map(Vector3::from),
                object_angular_velocity: o.angvel.map(Vector3::from),
                action: f.action,
                forces: f.forces.map(vs_from),
            });
        }
        Ok(HOISequence { fps: self.fps, skeleton: self.skeleton, frames, keyframe_indices: self.keyframe_indices })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle_between;
    use std::f64::consts::FRAC_PI_2;

    fn skeleton() -> Vec<String> {
        LABELED_PARTS.iter().map(|s| s.to_string()).collect()
    }

    fn moving(n: usize, fps: f64) -> HOISequence {
        let frames = (0..n)
            .map(|i| {
                let t = i as f64 / fps;
                let mut f = HOIFrame::rest(t, 17);
                f.object = Pose6DoF::from_parts(
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1 * i as f64),
                    Vector3::new(0.02 * i as f64, -0.01 * i as f64, 1.0),
                    1.0,
                );
                f.root_position = Vector3::new(0.0, 0.0, 0.01 * i as f64);
                f.joint_rotations[3] = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.05 * i as f64);
                f
            })
            .collect();
        HOISequence::new(fps, skeleton(), frames).unwrap()
    }

    #[test]
    fn keyframe_index_formula() {
        assert_eq!(keyframe_indices(9, 3).unwrap(), vec![0, 4, 8]);
        assert_eq!(keyframe_indices(9, 1).unwrap(), vec![0]);
        assert_eq!(keyframe_indices(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        // 10 frames, 4 keys: 0, 3, 6, 9
        assert_eq!(keyframe_indices(10, 4).unwrap(), vec![0, 3, 6, 9]);
        // 6 frames, 3 keys: 2.5 rounds up
        assert_eq!(keyframe_indices(6, 3).unwrap(), vec![0, 3, 5]);
        assert!(keyframe_indices(4, 0).is_err());
        assert!(keyframe_indices(4, 5).is_err());
    }

    #[test]
    fn extracting_all_frames_is_identity() {
        let s = moving(7, 30.0);
        let k = extract_keyframes(&s, 7).unwrap();
        assert_eq!(k.frames, s.frames);
        assert_eq!(k.keyframe_indices, Some((0..7).collect()));
    }

    #[test]
    fn midpoint_slerps_and_lerps() {
        let mut a = HOIFrame::rest(0.0, 17);
        let mut b = HOIFrame::rest(1.0, 17);
        a.object = Pose6DoF::from_parts(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 1.0), 1.0);
        b.object = Pose6DoF::from_parts(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(1.0, 2.0, 3.0),
            1.0,
        );
        let m = HOISequence::new(10.0, skeleton(), vec![a, b]).unwrap();
        let mid = sample_at(&m, 0.5).unwrap();
        let oracle = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(rotation_angle_between(mid.object.rotation(), &oracle) < 1e-9);
        assert!((mid.object.translation() - Vector3::new(0.5, 1.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn milestones_reproduced_bitwise() {
        let dense = moving(31, 30.0);
        let keys = extract_keyframes(&dense, 4).unwrap();
        let out = interpolate(&keys, 30.0).unwrap();
        assert_eq!(out.len(), 31);
        for m in &keys.frames {
            let f = out.frames.iter().find(|f| f.time == m.time).expect("milestone time on grid");
            assert_eq!(f.object, m.object);
            assert_eq!(f.joint_rotations, m.joint_rotations);
            assert_eq!(f.root_position, m.root_position);
            assert_eq!(f.root_rotation, m.root_rotation);
            assert_eq!(sample_at(&keys, m.time).unwrap(), milestone_copy(m));
        }
    }

    #[test]
    fn interior_velocities_of_linear_translation() {
        let s = moving(2, 1.0);
        let out = interpolate(&s, 50.0).unwrap();
        let dp = (s.frames[1].object.translation() - s.frames[0].object.translation()) / 50.0;
        for f in &out.frames[1..out.len() - 1] {
            let v = f.object_velocity.unwrap();
            assert!((v - dp * 50.0).norm() < 1e-6);
        }
    }

    #[test]
    fn frame_count_and_unit_quaternions() {
        let mut s = moving(3, 1.0);
        s.frames[2].time = 2.05;
        let out = interpolate(&s, 7.0).unwrap();
        assert_eq!(out.len(), (2.05f64 * 7.0).floor() as usize + 1);
        for f in &out.frames {
            assert!((f.object.rotation().quaternion().norm() - 1.0).abs() < 1e-9);
            for q in &f.joint_rotations {
                assert!((q.quaternion().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_duplicate_timestamps() {
        let mut s = moving(3, 10.0);
        s.frames[2].time = s.frames[1].time;
        assert!(matches!(interpolate(&s, 10.0), Err(MotionError::DuplicateTimestamp(2))));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut s = interpolate(&moving(4, 3.0), 12.0).unwrap();
        s.frames[0].action = Some(vec![0.5, -1.25]);
        s.frames[1].forces = Some(vec![Vector3::new(0.0, 0.0, 2.0); 17]);
        s.keyframe_indices = Some(vec![0, 4]);
        let text = s.to_json().unwrap();
        let back = HOISequence::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn json_rejects_wrong_joint_count() {
        let mut s = moving(2, 3.0);
        s.frames[1].joint_rotations.pop();
        let text = serde_json::to_string(&MotionFile::from_sequence(&s)).unwrap();
        assert!(HOISequence::from_json(&text).is_err());
    }
}
