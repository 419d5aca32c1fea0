//! Commands composing the modules: estimate, interpolate, score,
//! render-debug and make-fixture. Each returns data and writes its files;
//! errors carry the exit code the CLI reports.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Camera;
use crate::correspondence::{coarse_pose, CoarseResult, CorrespondenceError, FeatureMap};
use crate::fixture::{synthetic_scene, FixtureParams, SyntheticExtractor};
use crate::geometry::{Pose6DoF, TriangleMesh, VertexSelection};
use crate::io::{
    read_depth, read_feature_map, read_mask, read_text, write_bytes, write_depth, write_feature_map, write_pgm,
    write_silhouette, Config, ContactFile, IoError, SceneBundle,
};
use crate::labels::{ContactLabels, HandFlags};
use crate::losses::{mean_human_depth, ContactSpec, LossBreakdown, Observations};
use crate::metrics::{contact_percentage, foot_sliding, intersection_volume};
use crate::motion::{extract_keyframes, fill_velocities, interpolate, HOISequence, MotionError};
use crate::optimizer::{refine_pose, trace_to_csv, RefineResult, RefineScene};
use crate::render::{rasterize_hard, render_soft, Grid};
use crate::rewards::{body_reward, contact_reward, imitation_reward, object_reward, regularization_reward};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: invalid input: {message}")]
    Input { stage: &'static str, message: String },
    #[error("{stage}: format error: {message}")]
    Format { stage: &'static str, message: String },
    #[error("coarse: {0}")]
    Coarse(String),
    #[error("refine: optimization diverged")]
    Diverged(Box<EstimateOutcome>),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input { .. } => 2,
            PipelineError::Coarse(_) => 3,
            PipelineError::Diverged(_) => 4,
            PipelineError::Format { .. } => 5,
        }
    }

    fn input(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError::Input { stage, message: message.into() }
    }

    fn io(stage: &'static str, e: IoError) -> Self {
        match e {
            IoError::Format(m) => PipelineError::Format { stage, message: m },
            IoError::Invalid(m) => PipelineError::Input { stage, message: m },
            other => PipelineError::Input { stage, message: other.to_string() },
        }
    }
}

/// Everything a bundle points to, loaded and validated.
pub struct LoadedScene {
    pub template: TriangleMesh,
    pub human: Option<TriangleMesh>,
    pub features: FeatureMap,
    pub silhouette: Grid<f64>,
    pub object_silhouette: Grid<f64>,
    pub depth: Option<Grid<f64>>,
    pub human_depth: Option<f64>,
    pub contact: Option<ContactSpec>,
    pub camera: Camera,
    pub confidence: Option<f64>,
    pub extractor: SyntheticExtractor,
}

fn read_mesh(stage: &'static str, path: &Path) -> Result<TriangleMesh, PipelineError> {
    TriangleMesh::read_obj(path).map_err(|e| match e {
        crate::geometry::GeometryError::Io(m) => PipelineError::input(stage, m),
        other => PipelineError::Format { stage, message: format!("{}: {other}", path.display()) },
    })
}

pub fn load_scene(bundle: &SceneBundle, config: &Config) -> Result<LoadedScene, PipelineError> {
    const S: &str = "load";
    let io = |e| PipelineError::io(S, e);
    let camera = match bundle.camera.as_deref() {
        None => config.camera,
        Some("desk") => Camera::desk(),
        Some("reference") => Camera::reference(),
        Some(other) => return Err(PipelineError::input(S, format!("unknown camera preset {other:?}"))),
    };
    let max_stage = config.schedule.stages.iter().map(|s| s.0).max().unwrap_or(1);
    if max_stage >= 2 && bundle.depth.is_none() {
        return Err(PipelineError::input(S, "stage 2 needs a depth map"));
    }
    if max_stage >= 3 && (bundle.human.is_none() || bundle.contact.is_none()) {
        return Err(PipelineError::input(S, "stage 3 needs a human mesh and a contact file"));
    }
    let template = read_mesh(S, &bundle.object)?;
    let human = bundle.human.as_deref().map(|p| read_mesh(S, p)).transpose()?;
    let features = read_feature_map(&bundle.features).map_err(io)?;
    let silhouette = read_mask(&bundle.silhouette).map_err(io)?;
    let object_silhouette = read_mask(&bundle.object_silhouette).map_err(io)?;
    let depth = bundle.depth.as_deref().map(read_depth).transpose().map_err(io)?;
    let dims = (camera.width, camera.height);
    let mut shapes = vec![
        ("features", (features.width(), features.height())),
        ("silhouette", (silhouette.width(), silhouette.height())),
        ("object_silhouette", (object_silhouette.width(), object_silhouette.height())),
    ];
    if let Some(d) = &depth {
        shapes.push(("depth", (d.width(), d.height())));
    }
    for (name, shape) in shapes {
        if shape != dims {
            return Err(PipelineError::input(S, format!("{name} is {}x{}, camera is {}x{}", shape.0, shape.1, dims.0, dims.1)));
        }
    }
    if features.channels() != bundle.features_channels {
        return Err(PipelineError::input(
            S,
            format!("feature map has {} channels, bundle says {}", features.channels(), bundle.features_channels),
        ));
    }
    let contact = match (&bundle.contact, &human) {
        (Some(p), Some(h)) => {
            let c = ContactFile::parse(&read_text(p).map_err(io)?).map_err(io)?;
            let n = h.vertices().len();
            let sel = |v: &[usize]| VertexSelection::new(v.to_vec(), n).map_err(|e| PipelineError::input(S, e.to_string()));
            Some(ContactSpec {
                left_hand: c.hands.left,
                right_hand: c.hands.right,
                palm_left: sel(&c.palm_left)?,
                palm_right: sel(&c.palm_right)?,
            })
        }
        (Some(_), None) => return Err(PipelineError::input(S, "contact file given without a human mesh")),
        _ => None,
    };
    let human_depth = match (bundle.human_depth, &human) {
        (Some(d), _) => Some(d),
        (None, Some(h)) => {
            let buf = rasterize_hard(&[(h, &Pose6DoF::identity())], &camera);
            Some(mean_human_depth(&buf.depth(), &buf.silhouette()).map_err(|e| PipelineError::input(S, format!("human depth: {e}")))?)
        }
        (None, None) => None,
    };
    if max_stage >= 2 && human_depth.is_none() {
        return Err(PipelineError::input(S, "stage 2 needs human_depth or a human mesh"));
    }
    Ok(LoadedScene {
        template,
        human,
        features,
        silhouette,
        object_silhouette,
        depth,
        human_depth,
        contact,
        camera,
        confidence: bundle.confidence,
        extractor: SyntheticExtractor::new(bundle.features_channels, bundle.features_seed),
    })
}

#[derive(Clone, Debug)]
pub struct EstimateOutcome {
    pub pose: Pose6DoF,
    pub coarse: CoarseResult,
    pub refine: RefineResult,
    pub final_losses: LossBreakdown<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossesJson {
    pub silhouette: f64,
    pub depth_rel: f64,
    pub depth_abs: f64,
    pub contact: f64,
    pub penetration: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsJson {
    pub coarse_view: usize,
    pub coarse_view_score: f64,
    pub coarse_matches: usize,
    pub coarse_reprojection_px: f64,
    pub coarse_rotation: [f64; 4],
    pub coarse_translation: [f64; 3],
    pub best_iteration: Option<usize>,
    pub iterations: usize,
    pub skipped_steps: usize,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    /// `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
    pub coarse_inliers: usize,
    pub final_losses: LossesJson,
    pub diagnostics: DiagnosticsJson,
}

impl PoseJson {
    pub fn pose(&self) -> Result<Pose6DoF, PipelineError> {
        Pose6DoF::new(self.rotation, self.translation, self.scale).map_err(|e| PipelineError::Format {
            stage: "pose",
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = read_text(path).map_err(|e| PipelineError::io("pose", e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format { stage: "pose", message: e.to_string() })
    }
}

impl EstimateOutcome {
    pub fn to_json(&self) -> PoseJson {
        let t = self.pose.translation();
        let ct = self.coarse.pose.translation();
        let l = &self.final_losses;
        PoseJson {
            rotation: self.pose.wxyz(),
            translation: [t.x, t.y, t.z],
            scale: self.pose.scale(),
            coarse_inliers: self.coarse.inliers,
            final_losses: LossesJson {
                silhouette: l.silhouette,
                depth_rel: l.depth_rel,
                depth_abs: l.depth_abs,
                contact: l.contact,
                penetration: l.penetration,
                total: l.total,
            },
            diagnostics: DiagnosticsJson {
                coarse_view: self.coarse.view_index,
                coarse_view_score: self.coarse.view_score,
                coarse_matches: self.coarse.matches,
                coarse_reprojection_px: self.coarse.reprojection_error,
                coarse_rotation: self.coarse.pose.wxyz(),
                coarse_translation: [ct.x, ct.y, ct.z],
                best_iteration: self.refine.best_iteration,
                iterations: self.refine.trace.len(),
                skipped_steps: self.refine.skipped_steps,
                diverged: self.refine.diverged,
            },
        }
    }
}

/// Coarse pose from features, then staged refinement. A diverged
/// refinement is reported as an error that still carries the outcome.
pub fn estimate(scene: &LoadedScene, config: &Config, seed: u64) -> Result<EstimateOutcome, PipelineError> {
    let mask: Vec<bool> = scene.object_silhouette.data().iter().map(|v| *v > 0.5).collect();
    let coarse = coarse_pose(
        &scene.template,
        &scene.features,
        &mask,
        scene.human.as_ref(),
        &scene.camera,
        &scene.extractor,
        &config.coarse,
        seed,
    )
    .map_err(|e| match e {
        CorrespondenceError::ChannelMismatch { .. } | CorrespondenceError::InvalidFeatures(_) => {
            PipelineError::input("coarse", e.to_string())
        }
        other => PipelineError::Coarse(other.to_string()),
    })?;
    log::info!(
        "coarse pose from view {} with {} inliers of {} matches",
        coarse.view_index,
        coarse.inliers,
        coarse.matches
    );
    let mut weights = config.weights;
    if let Some(c) = scene.confidence {
        weights.lambda_object = c;
    }
    let obs = Observations {
        silhouette: &scene.silhouette,
        object_silhouette: &scene.object_silhouette,
        depth: scene.depth.as_ref(),
        human_depth: scene.human_depth,
        human: scene.human.as_ref(),
        contact: scene.contact.as_ref(),
    };
    let refine_scene = RefineScene::new(&scene.template, scene.camera, config.soft, obs)
        .map_err(|e| PipelineError::input("refine", e.to_string()))?;
    let refine = refine_pose(&coarse.pose, &refine_scene, &weights, &config.schedule)
        .map_err(|e| PipelineError::input("refine", e.to_string()))?;
    let final_stage = config.schedule.stages.iter().map(|s| s.0).max().unwrap_or(1);
    let mut final_losses = refine_scene
        .evaluate(&refine.pose, &weights, final_stage)
        .map_err(|e| PipelineError::input("refine", e.to_string()))?;
    final_losses.total = final_losses.weighted(&weights, final_stage);
    let outcome = EstimateOutcome { pose: refine.pose, coarse, refine, final_losses };
    if outcome.refine.diverged {
        return Err(PipelineError::Diverged(Box::new(outcome)));
    }
    Ok(outcome)
}

fn write_estimate(out_dir: &Path, outcome: &EstimateOutcome) -> Result<(), PipelineError> {
    let io = |e| PipelineError::io("write", e);
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::input("write", format!("{}: {e}", out_dir.display())))?;
    let json = serde_json::to_string_pretty(&outcome.to_json()).expect("plain data") + "\n";
    write_bytes(&out_dir.join("pose.json"), json.as_bytes()).map_err(io)?;
    write_bytes(&out_dir.join("trace.csv"), trace_to_csv(&outcome.refine.trace).as_bytes()).map_err(io)?;
    Ok(())
}

/// Runs one bundle and writes `pose.json` and `trace.csv` into `out_dir`.
/// On divergence the best-so-far outputs are still written.
pub fn cmd_estimate(bundle: &Path, config: &Config, seed: u64, out_dir: &Path) -> Result<EstimateOutcome, PipelineError> {
    let b = SceneBundle::read(bundle).map_err(|e| PipelineError::io("load", e))?;
    let scene = load_scene(&b, config)?;
    match estimate(&scene, config, seed) {
        Ok(o) => {
            write_estimate(out_dir, &o)?;
            Ok(o)
        }
        Err(PipelineError::Diverged(o)) => {
            write_estimate(out_dir, &o)?;
            Err(PipelineError::Diverged(o))
        }
        Err(e) => Err(e),
    }
}

/// Runs several bundles on `jobs` worker threads. Each bundle writes into
/// its own directory under `out_dir`, named after the bundle file stem.
pub fn cmd_estimate_many(
    bundles: &[PathBuf],
    config: &Config,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Vec<(PathBuf, Result<EstimateOutcome, PipelineError>)> {
    let run = |b: &PathBuf| {
        let dir = if bundles.len() == 1 {
            out_dir.to_path_buf()
        } else {
            let stem = b.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let parent = b.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            out_dir.join(format!("{parent}_{stem}"))
        };
        (b.clone(), cmd_estimate(b, config, seed, &dir))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build();
    match pool {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            bundles.par_iter().map(run).collect()
        }),
        Err(_) => bundles.iter().map(run).collect(),
    }
}

pub enum KeyframeSelection {
    Count(usize),
    Times(Vec<f64>),
}

fn motion_err(stage: &'static str, e: MotionError) -> PipelineError {
    match e {
        MotionError::Json(j) => PipelineError::Format { stage, message: j.to_string() },
        other => PipelineError::input(stage, other.to_string()),
    }
}

pub fn read_motion(path: &Path) -> Result<HOISequence, PipelineError> {
    let text = read_text(path).map_err(|e| PipelineError::io("motion", e))?;
    HOISequence::from_json(&text).map_err(|e| motion_err("motion", e))
}

/// Selects milestones from a motion and interpolates them at `fps`. The
/// output records the selected source frame indices.
pub fn cmd_interpolate(
    input: &Path,
    selection: &KeyframeSelection,
    fps: f64,
    output: &Path,
) -> Result<HOISequence, PipelineError> {
    let seq = read_motion(input)?;
    let milestones = match selection {
        KeyframeSelection::Count(k) => extract_keyframes(&seq, *k).map_err(|e| motion_err("interpolate", e))?,
        KeyframeSelection::Times(ts) => {
            let mut idx = Vec::with_capacity(ts.len());
            for t in ts {
                let i = seq
                    .frames
                    .iter()
                    .position(|f| (f.time - t).abs() <= 1e-9)
                    .ok_or_else(|| PipelineError::input("interpolate", format!("no frame at time {t}")))?;
                idx.push(i);
            }
            HOISequence {
                fps: seq.fps,
                skeleton: seq.skeleton.clone(),
                frames: idx.iter().map(|&i| seq.frames[i].clone()).collect(),
                keyframe_indices: Some(idx),
            }
        }
    };
    let mut out = interpolate(&milestones, fps).map_err(|e| motion_err("interpolate", e))?;
    out.keyframe_indices = milestones.keyframe_indices.clone();
    let text = out.to_json().map_err(|e| motion_err("interpolate", e))? + "\n";
    write_bytes(output, text.as_bytes()).map_err(|e| PipelineError::io("interpolate", e))?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub time: f64,
    pub body: f64,
    pub object: f64,
    pub regularization: f64,
    pub imitation: f64,
    pub contact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub frames: usize,
    pub r_body: f64,
    pub r_obj: f64,
    pub r_reg: f64,
    pub r_imitate: f64,
    pub r_contact: f64,
    /// Foot sliding, meters per frame.
    pub fs: f64,
    /// Mean hand-object intersection volume per frame, cm³.
    pub iv: Option<f64>,
    /// Contact frame percentage.
    pub cp: Option<f64>,
}

fn ensure_velocities(seq: &mut HOISequence) {
    let missing = seq.frames.iter().any(|f| {
        f.object_velocity.is_none() || f.object_angular_velocity.is_none() || f.joint_angular_velocities.is_none()
            || (f.joint_positions.is_some() && f.joint_velocities.is_none())
    });
    if missing {
        let fps = seq.fps;
        fill_velocities(&mut seq.frames, fps);
    }
}

/// Per-frame rewards of `sim` against `reference`, plus sequence metrics
/// of `sim`. Frames without an action count as a zero action; the first
/// frame is its own predecessor for the acceleration term. IV and CP need
/// the object mesh; each hand is a cube of `hand_half_size` at its joint.
pub fn score(
    sim: &HOISequence,
    reference: &HOISequence,
    labels: &ContactLabels,
    object: Option<&TriangleMesh>,
    config: &Config,
) -> Result<(Vec<FrameScore>, ScoreSummary), PipelineError> {
    const S: &str = "score";
    let sc = &config.score;
    let cfg = &sc.rewards;
    if sim.skeleton != reference.skeleton {
        return Err(PipelineError::input(S, "skeletons differ"));
    }
    if sim.len() != reference.len() || sim.is_empty() {
        return Err(PipelineError::input(S, format!("frame counts {} and {}", sim.len(), reference.len())));
    }
    labels.validate(&sim.skeleton).map_err(|e| PipelineError::input(S, e.to_string()))?;
    let (mut sim, mut reference) = (sim.clone(), reference.clone());
    ensure_velocities(&mut sim);
    ensure_velocities(&mut reference);
    let err = |e: crate::rewards::RewardError| PipelineError::input(S, e.to_string());
    let mut rows = Vec::with_capacity(sim.len());
    for i in 0..sim.len() {
        let (s, r) = (&sim.frames[i], &reference.frames[i]);
        let body = body_reward(s, r, &sim.skeleton, cfg).map_err(err)?;
        let obj = object_reward(s, r, cfg).map_err(err)?;
        let with_action = |f: &crate::motion::HOIFrame| {
            let mut f = f.clone();
            f.action.get_or_insert_with(Vec::new);
            f
        };
        let prev = with_action(&sim.frames[i.saturating_sub(1)]);
        let reg = regularization_reward(&with_action(s), &prev, cfg).map_err(err)?;
        let forces = match &s.forces {
            Some(f) => f.clone(),
            None if labels.contact.is_empty() && labels.separate.is_empty() => vec![Vector3::zeros(); sim.skeleton.len()],
            None => return Err(PipelineError::input(S, format!("frame {i} has no contact forces"))),
        };
        let contact = contact_reward(&forces, &sim.skeleton, labels, cfg).map_err(err)?;
        rows.push(FrameScore {
            frame: i,
            time: s.time,
            body,
            object: obj,
            regularization: reg,
            imitation: imitation_reward(body, obj, reg),
            contact,
        });
    }
    let mean = |f: fn(&FrameScore) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let metric = |e: crate::metrics::MetricError| PipelineError::input(S, e.to_string());
    let fs = foot_sliding(&sim, &sc.foot_joints, &sc.foot).map_err(metric)?;
    let (iv, cp) = match object {
        Some(mesh) => {
            let hands: Vec<usize> = sc
                .hand_joints
                .iter()
                .map(|n| sim.joint_index(n).ok_or_else(|| PipelineError::input(S, format!("missing joint {n:?}"))))
                .collect::<Result<_, _>>()?;
            let mut total = 0.0;
            for f in &sim.frames {
                let pos = f.joint_positions.as_ref().ok_or_else(|| PipelineError::input(S, "joint positions missing"))?;
                let posed = mesh.transformed(&f.object);
                for &h in &hands {
                    let p = pos[h];
                    let cube = TriangleMesh::cuboid([p.x, p.y, p.z], [sc.hand_half_size; 3]);
                    total += intersection_volume(&cube, &posed, sc.voxel_pitch).map_err(metric)?;
                }
            }
            let cp = contact_percentage(&sim, mesh, &sc.hand_joints, sc.contact_distance).map_err(metric)?;
            (Some(total / sim.len() as f64), Some(cp))
        }
        None => (None, None),
    };
    let summary = ScoreSummary {
        frames: rows.len(),
        r_body: mean(|r| r.body),
        r_obj: mean(|r| r.object),
        r_reg: mean(|r| r.regularization),
        r_imitate: mean(|r| r.imitation),
        r_contact: mean(|r| r.contact),
        fs,
        iv,
        cp,
    };
    Ok((rows, summary))
}

pub fn score_csv(rows: &[FrameScore]) -> String {
    let mut s = String::from("frame,time,r_body,r_obj,r_reg,r_imitate,r_contact\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.12},{:.12},{:.12},{:.12},{:.12}",
            r.frame, r.time, r.body, r.object, r.regularization, r.imitation, r.contact
        );
    }
    s
}

pub struct ScoreInputs<'a> {
    pub sim: &'a Path,
    pub reference: &'a Path,
    pub labels: &'a Path,
    pub object: Option<&'a Path>,
}

/// Writes `scores.csv` and `summary.json` into `out_dir`.
pub fn cmd_score(inputs: &ScoreInputs<'_>, config: &Config, out_dir: &Path) -> Result<ScoreSummary, PipelineError> {
    let sim = read_motion(inputs.sim)?;
    let reference = read_motion(inputs.reference)?;
    let text = read_text(inputs.labels).map_err(|e| PipelineError::io("labels", e))?;
    let labels = ContactLabels::parse(&text).map_err(|e| match e {
        crate::labels::LabelError::Malformed(m) => PipelineError::Format { stage: "labels", message: m },
        other => PipelineError::input("labels", other.to_string()),
    })?;
    let object = inputs.object.map(|p| read_mesh("score", p)).transpose()?;
    let (rows, summary) = score(&sim, &reference, &labels, object.as_ref(), config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::input("score", format!("{}: {e}", out_dir.display())))?;
    let io = |e| PipelineError::io("score", e);
    write_bytes(&out_dir.join("scores.csv"), score_csv(&rows).as_bytes()).map_err(io)?;
    let json = serde_json::to_string_pretty(&summary).expect("plain data") + "\n";
    write_bytes(&out_dir.join("summary.json"), json.as_bytes()).map_err(io)?;
    Ok(summary)
}

/// Soft render of posed meshes, written as `silhouette.smap` and
/// `depth.dmap` under `out_dir`.
pub fn cmd_render_debug(
    meshes: &[(PathBuf, Pose6DoF)],
    config: &Config,
    out_dir: &Path,
) -> Result<(Grid<f64>, Grid<f64>), PipelineError> {
    if meshes.is_empty() {
        return Err(PipelineError::input("render", "no meshes given"));
    }
    let loaded = meshes
        .iter()
        .map(|(p, pose)| read_mesh("render", p).map(|m| (m, *pose)))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<(&TriangleMesh, &Pose6DoF)> = loaded.iter().map(|(m, p)| (m, p)).collect();
    let (sil, depth) = render_soft(&refs, &config.camera, &config.soft);
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::input("render", format!("{}: {e}", out_dir.display())))?;
    let io = |e| PipelineError::io("render", e);
    write_silhouette(&out_dir.join("silhouette.smap"), &sil).map_err(io)?;
    write_depth(&out_dir.join("depth.dmap"), &depth).map_err(io)?;
    Ok((sil, depth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthJson {
    pub seed: u64,
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
    pub depth_affine: [f64; 2],
    pub human_depth: f64,
    pub bbox_diagonal: f64,
}

/// Writes a planted-pose scene into `out_dir`: meshes, masks, depth,
/// features, contact file, `scene.bundle` and the hidden `truth.json`.
pub fn make_fixture(seed: u64, params: &FixtureParams, out_dir: &Path) -> Result<PathBuf, PipelineError> {
    let s = synthetic_scene(seed, params);
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::input("fixture", format!("{}: {e}", out_dir.display())))?;
    let io = |e| PipelineError::io("fixture", e);
    let geo = |e: crate::geometry::GeometryError| PipelineError::input("fixture", e.to_string());
    let p = |name: &str| out_dir.join(name);
    s.template.write_obj(p("template.obj")).map_err(geo)?;
    s.human.write_obj(p("human.obj")).map_err(geo)?;
    write_feature_map(&p("features.fmap"), &s.features).map_err(io)?;
    write_pgm(&p("silhouette.pgm"), &s.silhouette).map_err(io)?;
    write_pgm(&p("object_silhouette.pgm"), &s.object_silhouette).map_err(io)?;
    write_depth(&p("depth.dmap"), &s.depth).map_err(io)?;
    let contact = ContactFile {
        hands: HandFlags { left: s.contact.left_hand, right: s.contact.right_hand },
        palm_left: s.contact.palm_left.indices().to_vec(),
        palm_right: s.contact.palm_right.indices().to_vec(),
    };
    write_bytes(&p("contact.txt"), contact.to_text().as_bytes()).map_err(io)?;
    let camera = if s.camera == Camera::desk() {
        Some("desk".to_string())
    } else if s.camera == Camera::reference() {
        Some("reference".to_string())
    } else {
        None
    };
    let bundle = SceneBundle {
        object: p("template.obj"),
        human: Some(p("human.obj")),
        features: p("features.fmap"),
        silhouette: p("silhouette.pgm"),
        object_silhouette: p("object_silhouette.pgm"),
        confidence: Some(s.confidence),
        depth: Some(p("depth.dmap")),
        human_depth: None,
        camera,
        contact: Some(p("contact.txt")),
        features_seed: params.feature_seed,
        features_channels: params.channels,
    };
    let bundle_path = p("scene.bundle");
    write_bytes(&bundle_path, bundle.to_text(out_dir).as_bytes()).map_err(io)?;
    let t = s.true_pose.translation();
    let truth = TruthJson {
        seed,
        rotation: s.true_pose.wxyz(),
        translation: [t.x, t.y, t.z],
        scale: s.true_pose.scale(),
        depth_affine: s.depth_affine,
        human_depth: s.human_depth,
        bbox_diagonal: s.template.bbox_diagonal(),
    };
    let json = serde_json::to_string_pretty(&truth).expect("plain data") + "\n";
    write_bytes(&p("truth.json"), json.as_bytes()).map_err(io)?;
    Ok(bundle_path)
}

/// Reads an optional config file, then applies `key=value` overrides in
/// order, then validates.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, PipelineError> {
    const S: &str = "config";
    let mut c = match path {
        Some(p) => Config::parse(&read_text(p).map_err(|e| PipelineError::io(S, e))?).map_err(|e| PipelineError::io(S, e))?,
        None => Config::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| PipelineError::input(S, format!("override {o:?} is not key=value")))?;
        c.set(k.trim(), v.trim()).map_err(|e| PipelineError::io(S, e))?;
    }
    c.validate().map_err(|e| PipelineError::io(S, e))?;
    Ok(c)
}

/// Parses `PATH` or `PATH@POSE`, where `POSE` is a `pose.json` file or
/// `w,x,y,z,tx,ty,tz[,s]`.
pub fn parse_mesh_spec(spec: &str) -> Result<(PathBuf, Pose6DoF), PipelineError> {
    const S: &str = "render";
    let Some((path, pose)) = spec.rsplit_once('@') else {
        return Ok((PathBuf::from(spec), Pose6DoF::identity()));
    };
    let nums: Result<Vec<f64>, _> = pose.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let pose = match nums {
        Ok(v) if v.len() == 7 || v.len() == 8 => {
            Pose6DoF::new([v[0], v[1], v[2], v[3]], [v[4], v[5], v[6]], v.get(7).copied().unwrap_or(1.0))
                .map_err(|e| PipelineError::input(S, e.to_string()))?
        }
        Ok(v) if pose.contains(',') => {
            return Err(PipelineError::input(S, format!("pose needs 7 or 8 numbers, got {}", v.len())))
        }
        _ if pose.contains(',') => return Err(PipelineError::input(S, format!("bad pose {pose:?}"))),
        _ => PoseJson::read(Path::new(pose))?.pose()?,
    };
    Ok((PathBuf::from(path), pose))
}
