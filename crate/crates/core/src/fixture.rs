//! Synthetic planted-pose scenes and a deterministic descriptor extractor.
//!
//! A scene places an asymmetric L-shaped prism at a random pose, puts a
//! cuboid "human" beside it with a hand whose palm lies flat on one of the
//! object's faces, renders everything with the z-buffer and emits masks, an
//! affinely distorted depth map and descriptors.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::correspondence::{features_from_surface, FeatureExtractor, FeatureMap};
use crate::geometry::{Pose6DoF, TriangleMesh, VertexSelection};
use crate::losses::{mean_human_depth, ContactSpec};
use crate::render::{rasterize_hard, Grid};

/// Descriptors `sin(W · [p; n] + b)` of object-space point and normal.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticExtractor {
    w_object: Vec<[f64; 6]>,
    b_object: Vec<f64>,
    w_other: Vec<[f64; 3]>,
    b_other: Vec<f64>,
}

impl SyntheticExtractor {
    pub fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let w_object = (0..channels)
            .map(|_| {
                let mut w = [0.0; 6];
                for (k, x) in w.iter_mut().enumerate() {
                    *x = normal() * if k < 3 { 12.0 } else { 1.5 };
                }
                w
            })
            .collect();
        let w_other = (0..channels).map(|_| [normal() * 12.0, normal() * 12.0, normal() * 12.0]).collect();
        let b_object = (0..channels).map(|_| normal() * 3.0).collect();
        let b_other = (0..channels).map(|_| normal() * 3.0).collect();
        Self { w_object, b_object, w_other, b_other }
    }
}

impl FeatureExtractor for SyntheticExtractor {
    fn channels(&self) -> usize {
        self.w_object.len()
    }

    fn object_feature(&self, p: &Point3<f64>, n: &Vector3<f64>, out: &mut [f32]) {
        let x = [p.x, p.y, p.z, n.x, n.y, n.z];
        for ((o, w), b) in out.iter_mut().zip(&self.w_object).zip(&self.b_object) {
            let s: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            *o = (s + b).sin() as f32;
        }
    }

    fn other_feature(&self, p: &Point3<f64>, out: &mut [f32]) {
        for ((o, w), b) in out.iter_mut().zip(&self.w_other).zip(&self.b_other) {
            *o = (w[0] * p.x + w[1] * p.y + w[2] * p.z + b).sin() as f32;
        }
    }
}

/// L-shaped prism, 0.32 × 0.26 × 0.10 m, centered on its bounding box.
pub fn l_prism() -> TriangleMesh {
    let outline = [[0.0, 0.0], [0.32, 0.0], [0.32, 0.1], [0.11, 0.1], [0.11, 0.26], [0.0, 0.26]];
    let shifted: Vec<[f64; 2]> = outline.iter().map(|p| [p[0] - 0.16, p[1] - 0.13]).collect();
    TriangleMesh::extrude_polygon(&shifted, -0.05, 0.05).expect("valid outline")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub camera: Camera,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Maximum lateral offset of the object from the optical axis, meters.
    pub lateral: f64,
    pub channels: usize,
    pub feature_seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { camera: Camera::desk(), depth_min: 1.6, depth_max: 2.0, lateral: 0.08, channels: 24, feature_seed: 7 }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub template: TriangleMesh,
    /// Human proxy in camera coordinates.
    pub human: TriangleMesh,
    pub contact: ContactSpec,
    pub true_pose: Pose6DoF,
    pub camera: Camera,
    pub features: FeatureMap,
    pub silhouette: Grid<f64>,
    pub object_silhouette: Grid<f64>,
    /// `a · depth + b` on the foreground, `0` elsewhere.
    pub depth: Grid<f64>,
    pub depth_affine: [f64; 2],
    pub confidence: f64,
    pub human_depth: f64,
}

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        }
    }
}

/// Hand box of depth 3 cm whose palm face lies on object face `face`
/// (camera coordinates). Returns the box and the indices of its palm vertices.
fn hand_on_face(object: &TriangleMesh, face: usize) -> (TriangleMesh, Vec<usize>) {
    let [a, b, c] = object.triangle(face);
    let n = object.face_normal(face);
    let la = (c - b).norm();
    let lb = (a - c).norm();
    let lc = (b - a).norm();
    let area = (b - a).cross(&(c - a)).norm() * 0.5;
    let inradius = 2.0 * area / (la + lb + lc);
    let incenter = Point3::from((a.coords * la + b.coords * lb + c.coords * lc) / (la + lb + lc));
    let h = 0.6 * inradius / std::f64::consts::SQRT_2;
    let u = (b - a).normalize();
    let v = n.cross(&u);
    let depth = 0.03;
    let mut verts = Vec::new();
    for &sz in &[0.0, depth] {
        for &(su, sv) in &[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            verts.push(incenter + u * (su * h) + v * (sv * h) + n * sz);
        }
    }
    // bottom (palm) ring 0..4 faces -n, top ring 4..8 faces +n
    let tris = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    (TriangleMesh::new(verts, tris).expect("hand box"), vec![0, 1, 2, 3])
}

fn pick_contact_face(object: &TriangleMesh) -> usize {
    // prefer a large face turned toward -x so the torso can sit on that side
    (0..object.triangles().len())
        .max_by(|&i, &j| {
            let score = |k: usize| {
                let [a, b, c] = object.triangle(k);
                let area = (b - a).cross(&(c - a)).norm();
                let n = object.face_normal(k);
                area * (0.2 - n.x).max(0.0) * (0.3 - n.z).max(0.0)
            };
            score(i).total_cmp(&score(j))
        })
        .expect("non-empty mesh")
}

/// Builds the scene for `seed`.
pub fn synthetic_scene(seed: u64, params: &FixtureParams) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = l_prism();
    let camera = params.camera;
    let rotation = random_rotation(&mut rng);
    let t = Vector3::new(
        rng.random_range(-params.lateral..=params.lateral),
        rng.random_range(-params.lateral..=params.lateral),
        rng.random_range(params.depth_min..=params.depth_max),
    );
    let true_pose = Pose6DoF::from_rotation_translation(rotation, t);
    let posed = template.transformed(&true_pose);
    let face = pick_contact_face(&posed);
    let (hand, palm) = hand_on_face(&posed, face);
    let (lo, hi) = posed.aabb();

    let object_only = rasterize_hard(&[(&template, &true_pose)], &camera);
    let obj_depth = object_only.depth();
    let object_mean = {
        let v: Vec<f64> = obj_depth.data().iter().copied().filter(|d| *d > 0.0).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };

    // torso to the left of the object; its depth is tuned so the human's
    // mean rendered depth equals the object's
    let torso_half = [0.12, 0.3, 0.1];
    let torso_x = lo.x - 0.06 - torso_half[0];
    let torso_y = 0.5 * (lo.y + hi.y);
    let mut torso_z = object_mean + torso_half[2];
    let mut human = hand.clone();
    let mut human_depth = object_mean;
    for _ in 0..6 {
        let torso = TriangleMesh::cuboid([torso_x, torso_y, torso_z], torso_half);
        human = TriangleMesh::merge(&[torso, hand.clone()]).expect("disjoint parts");
        let buf = rasterize_hard(&[(&human, &Pose6DoF::identity())], &camera);
        human_depth = mean_human_depth(&buf.depth(), &buf.silhouette()).unwrap_or(object_mean);
        torso_z += object_mean - human_depth;
    }
    let torso_vertices = 8;
    let palm_left = VertexSelection::new(palm.iter().map(|i| i + torso_vertices).collect(), human.vertices().len())
        .expect("palm indices");
    let contact = ContactSpec { left_hand: true, right_hand: false, palm_left, palm_right: VertexSelection::empty() };

    let identity = Pose6DoF::identity();
    let scene = rasterize_hard(&[(&template, &true_pose), (&human, &identity)], &camera);
    let silhouette = scene.silhouette();
    let object_silhouette = scene.mesh_mask(0);
    let a = rng.random_range(0.5..2.0);
    let b = rng.random_range(0.0..1.0);
    let depth = scene.depth().map(|d| if *d > 0.0 { a * d + b } else { 0.0 });
    let extractor = SyntheticExtractor::new(params.channels, params.feature_seed);
    let features = features_from_surface(&scene, &[&template, &human], 0, true, &extractor);
    SyntheticScene {
        template,
        human,
        contact,
        true_pose,
        camera,
        features,
        silhouette,
        object_silhouette,
        depth,
        depth_affine: [a, b],
        confidence: 1.0,
        human_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{signed_point_mesh_distance, unsigned_distance};

    #[test]
    fn template_is_closed_and_asymmetric() {
        let m = l_prism();
        assert!(m.is_watertight());
        let area = 0.32 * 0.1 + 0.11 * 0.16;
        assert!((m.volume() - area * 0.1).abs() < 1e-12);
    }

    #[test]
    fn scene_is_consistent() {
        let s = synthetic_scene(3, &FixtureParams::default());
        let posed = s.template.transformed(&s.true_pose);
        for &j in s.contact.palm_left.indices() {
            assert!(unsigned_distance(&s.human.vertices()[j], &posed) < 1e-9);
        }
        for v in posed.vertices() {
            assert!(signed_point_mesh_distance(v, &s.human).value >= -1e-12);
        }
        assert!(s.human.is_watertight());
        assert!(s.object_silhouette.count_above(0.5) > 100);
        assert!(s.silhouette.count_above(0.5) > s.object_silhouette.count_above(0.5));
        assert_eq!(s.features.valid_count(), s.silhouette.count_above(0.5));
    }

    #[test]
    fn scenes_are_deterministic() {
        let a = synthetic_scene(11, &FixtureParams::default());
        let b = synthetic_scene(11, &FixtureParams::default());
        assert_eq!(a.true_pose, b.true_pose);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.features, b.features);
    }
}

/// Rest offsets of the labeled parts from the pelvis, z up.
const REST_OFFSETS: [[f64; 3]; 17] = [
    [0.0, 0.0, 0.0],
    [0.1, 0.0, -0.45],
    [0.1, 0.0, -0.88],
    [0.1, 0.12, -0.9],
    [-0.1, 0.0, -0.45],
    [-0.1, 0.0, -0.88],
    [-0.1, 0.12, -0.9],
    [0.0, 0.0, 0.2],
    [0.0, 0.0, 0.4],
    [0.0, 0.0, 0.55],
    [0.0, 0.0, 0.7],
    [0.18, 0.0, 0.5],
    [0.22, 0.15, 0.3],
    [0.22, 0.35, 0.25],
    [-0.18, 0.0, 0.5],
    [-0.22, 0.15, 0.3],
    [-0.22, 0.35, 0.25],
];

/// A person on the spot swaying and carrying an object in the right hand,
/// over the labeled-part skeleton. Feet stay planted; the right wrist
/// carries a contact force and all other joints none.
pub fn synthetic_motion(seed: u64, frames: usize, fps: f64) -> crate::motion::HOISequence {
    use crate::motion::{HOIFrame, HOISequence, LABELED_PARTS};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let amp: f64 = rng.random_range(0.1..0.3);
    let freq: f64 = rng.random_range(0.3..0.8);
    let axes: Vec<Vector3<f64>> = (0..LABELED_PARTS.len())
        .map(|_| Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)).normalize())
        .collect();
    let joints = LABELED_PARTS.len();
    let wrist = 16;
    let pelvis_height = 0.92;
    let frames = (0..frames)
        .map(|i| {
            let t = i as f64 / fps;
            let s = (std::f64::consts::TAU * freq * t + phase).sin();
            let mut f = HOIFrame::rest(t, joints);
            f.root_position = Vector3::new(0.05 * s, 0.0, pelvis_height);
            f.root_rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), amp * s);
            f.joint_rotations = axes.iter().map(|a| UnitQuaternion::from_scaled_axis(a * (amp * s))).collect();
            let positions: Vec<Vector3<f64>> = REST_OFFSETS
                .iter()
                .enumerate()
                .map(|(j, o)| {
                    let o = Vector3::from(*o);
                    if [2, 3, 5, 6].contains(&j) {
                        Vector3::new(o.x, o.y, o.z + pelvis_height)
                    } else {
                        f.root_rotation * o + f.root_position
                    }
                })
                .collect();
            let hand = positions[wrist];
            f.object = Pose6DoF::from_rotation_translation(f.root_rotation, hand + Vector3::new(0.0, 0.06, 0.0));
            f.joint_positions = Some(positions);
            let mut forces = vec![Vector3::zeros(); joints];
            forces[wrist] = Vector3::new(0.0, 0.0, 9.81 * (1.5 + 0.5 * s));
            f.forces = Some(forces);
            f.action = Some((0..joints * 3).map(|k| 0.1 * (s * (k as f64 + 1.0)).sin()).collect());
            f
        })
        .collect();
    let mut seq = HOISequence::new(fps, LABELED_PARTS.iter().map(|s| s.to_string()).collect(), frames)
        .expect("well-formed synthetic motion");
    crate::motion::fill_velocities(&mut seq.frames, fps);
    seq
}

/// Copy of `seq` with Gaussian noise of `sigma` on joint positions, object
/// translation and root position, and `sigma` radians on rotations.
pub fn perturb_motion(seq: &crate::motion::HOISequence, seed: u64, sigma: f64) -> crate::motion::HOISequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng| Vector3::from_fn(|_, _| sigma * Distribution::<f64>::sample(&StandardNormal, rng));
    let mut out = seq.clone();
    for f in &mut out.frames {
        f.root_position += noise(&mut rng);
        f.root_rotation = UnitQuaternion::from_scaled_axis(noise(&mut rng)) * f.root_rotation;
        for q in &mut f.joint_rotations {
            *q = UnitQuaternion::from_scaled_axis(noise(&mut rng)) * *q;
        }
        if let Some(p) = &mut f.joint_positions {
            for v in p {
                *v += noise(&mut rng);
            }
        }
        let dt = noise(&mut rng);
        let dr = UnitQuaternion::from_scaled_axis(noise(&mut rng));
        f.object = Pose6DoF::from_parts(dr * f.object.rotation(), f.object.translation() + dt, f.object.scale());
    }
    let fps = out.fps;
    crate::motion::fill_velocities(&mut out.frames, fps);
    out
}
