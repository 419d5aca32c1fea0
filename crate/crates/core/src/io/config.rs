//! Flat `key = value` configuration. Constants use their usual names
//! (`w_sil`, `lambda_contact`, ...); later lines and CLI overrides win.

use std::fmt::Write;

use super::{parse_key_values, IoError};
use crate::camera::Camera;
use crate::correspondence::CoarseParams;
use crate::losses::LossWeights;
use crate::metrics::FootSlidingParams;
use crate::optimizer::OptimizeSchedule;
use crate::render::SoftParams;
use crate::rewards::RewardConfig;

/// Settings of the scoring command beyond the reward weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreConfig {
    pub rewards: RewardConfig,
    pub foot: FootSlidingParams,
    pub foot_joints: Vec<String>,
    pub hand_joints: Vec<String>,
    /// Hand-object distance (m) below which a frame counts as contact.
    pub contact_distance: f64,
    /// Voxel pitch (m) for intersection volume.
    pub voxel_pitch: f64,
    /// Half edge (m) of the cube standing in for each hand.
    pub hand_half_size: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            rewards: RewardConfig::default(),
            foot: FootSlidingParams::default(),
            foot_joints: vec!["L_Ankle".into(), "R_Ankle".into()],
            hand_joints: vec!["L_Wrist".into(), "R_Wrist".into()],
            contact_distance: 0.05,
            voxel_pitch: 0.005,
            hand_half_size: 0.04,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub camera: Camera,
    pub weights: LossWeights,
    pub schedule: OptimizeSchedule,
    pub soft: SoftParams,
    pub coarse: CoarseParams,
    pub score: ScoreConfig,
    /// Keyframes extracted by the interpolation command.
    pub milestones: usize,
    pub fps: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            camera: Camera::desk(),
            weights: LossWeights::default(),
            schedule: OptimizeSchedule::default(),
            soft: SoftParams::default(),
            coarse: CoarseParams::default(),
            score: ScoreConfig::default(),
            milestones: 8,
            fps: 30.0,
        }
    }
}

fn num(key: &str, v: &str) -> Result<f64, IoError> {
    let x: f64 = v.parse().map_err(|_| IoError::format(format!("{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(IoError::invalid(format!("{key}: non-finite value")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize, IoError> {
    v.parse().map_err(|_| IoError::format(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool, IoError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(IoError::format(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn names(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn optional(key: &str, v: &str) -> Result<Option<f64>, IoError> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn stages(v: &str) -> Result<Vec<(u8, usize)>, IoError> {
    names(v)
        .iter()
        .map(|s| {
            let (a, b) = s.split_once(':').ok_or_else(|| IoError::format(format!("stages: expected stage:iterations, got {s:?}")))?;
            let stage = a.trim().parse().map_err(|_| IoError::format(format!("stages: bad stage {a:?}")))?;
            Ok((stage, count("stages", b.trim())?))
        })
        .collect()
}

fn axis(v: &str) -> Result<usize, IoError> {
    match v.to_ascii_lowercase().as_str() {
        "x" | "0" => Ok(0),
        "y" | "1" => Ok(1),
        "z" | "2" => Ok(2),
        _ => Err(IoError::format(format!("up_axis: expected x, y or z, got {v:?}"))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut c = Config::default();
        for (k, v) in parse_key_values(text)? {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Applies one `key = value` setting. A `camera` preset replaces all
    /// intrinsics set before it.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), IoError> {
        let w = &mut self.weights;
        let r = &mut self.score.rewards;
        match key {
            "camera" => {
                self.camera = match v {
                    "desk" => Camera::desk(),
                    "reference" => Camera::reference(),
                    _ => return Err(IoError::invalid(format!("camera: unknown preset {v:?}"))),
                }
            }
            "focal" => self.camera.focal = num(key, v)?,
            "cx" => self.camera.principal[0] = num(key, v)?,
            "cy" => self.camera.principal[1] = num(key, v)?,
            "width" => self.camera.width = count(key, v)?,
            "height" => self.camera.height = count(key, v)?,
            "w_sil" => w.w_sil = num(key, v)?,
            "w_depth_rel" => w.w_depth_rel = num(key, v)?,
            "w_depth_abs" => w.w_depth_abs = num(key, v)?,
            "w_contact" => w.w_contact = num(key, v)?,
            "w_penetration" => w.w_penetration = num(key, v)?,
            "theta" => w.theta_contact = num(key, v)?,
            "lambda_object" => w.lambda_object = num(key, v)?,
            "stages" => self.schedule.stages = stages(v)?,
            "iterations" => {
                let n = count(key, v)?;
                self.schedule.stages.iter_mut().for_each(|s| s.1 = n);
            }
            "lr" => self.schedule.learning_rate = num(key, v)?,
            "beta1" => self.schedule.beta1 = num(key, v)?,
            "beta2" => self.schedule.beta2 = num(key, v)?,
            "epsilon" => self.schedule.epsilon = num(key, v)?,
            "optimize_scale" => self.schedule.optimize_scale = flag(key, v)?,
            "sigma" => self.soft.sigma = num(key, v)?,
            "edge_cutoff" => self.soft.cutoff = num(key, v)?,
            "background_eps" => self.soft.background_eps = num(key, v)?,
            "depth_softness" => self.soft.depth_softness = num(key, v)?,
            "cull_back_faces" => self.soft.cull_back_faces = flag(key, v)?,
            "ransac_threshold" => self.coarse.ransac.threshold_px = num(key, v)?,
            "ransac_iterations" => self.coarse.ransac.iterations = count(key, v)?,
            "max_matches" => self.coarse.max_matches = count(key, v)?,
            "refit_px" => self.coarse.refit_px = num(key, v)?,
            "human_root_depth" => self.coarse.view_depth = num(key, v)?,
            "lambda_p" => r.lambda_p = num(key, v)?,
            "lambda_r" => r.lambda_r = num(key, v)?,
            "lambda_v" => r.lambda_v = num(key, v)?,
            "lambda_omega" => r.lambda_omega = num(key, v)?,
            "lambda_reg" | "lambda_action" => r.lambda_reg = num(key, v)?,
            "lambda_acc" => r.lambda_acc = num(key, v)?,
            "lambda_contact" => r.lambda_contact = num(key, v)?,
            "object_lambda_p" => r.object_lambda_p = optional(key, v)?,
            "object_lambda_r" => r.object_lambda_r = optional(key, v)?,
            "object_lambda_v" => r.object_lambda_v = optional(key, v)?,
            "object_lambda_omega" => r.object_lambda_omega = optional(key, v)?,
            "force_threshold" => r.force_threshold = num(key, v)?,
            "key_joints" => r.key_joints = names(v),
            "foot_joints" => self.score.foot_joints = names(v),
            "hand_joints" => self.score.hand_joints = names(v),
            "up_axis" => self.score.foot.up_axis = axis(v)?,
            "ground_height" => self.score.foot.ground_height = num(key, v)?,
            "contact_height" => self.score.foot.contact_height = num(key, v)?,
            "contact_distance" => self.score.contact_distance = num(key, v)?,
            "voxel_pitch" => self.score.voxel_pitch = num(key, v)?,
            "hand_half_size" => self.score.hand_half_size = num(key, v)?,
            "milestones" => self.milestones = count(key, v)?,
            "fps" => self.fps = num(key, v)?,
            _ => return Err(IoError::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |e: String| IoError::invalid(e);
        self.camera.validate().map_err(|e| bad(e.to_string()))?;
        self.weights.validate().map_err(|e| bad(e.to_string()))?;
        self.schedule.validate().map_err(|e| bad(e.to_string()))?;
        self.score.rewards.validate().map_err(|e| bad(e.to_string()))?;
        let s = &self.soft;
        if !(s.sigma > 0.0 && s.cutoff > 0.0 && s.background_eps > 0.0 && s.depth_softness > 0.0) {
            return Err(bad("sigma, edge_cutoff, background_eps and depth_softness must be positive".into()));
        }
        let c = &self.coarse;
        if !(c.ransac.threshold_px > 0.0 && c.ransac.iterations > 0 && c.max_matches >= 4 && c.refit_px >= 0.0 && c.view_depth > 0.0) {
            return Err(bad("invalid coarse-stage settings".into()));
        }
        let sc = &self.score;
        if !(sc.contact_distance > 0.0 && sc.voxel_pitch > 0.0 && sc.hand_half_size > 0.0 && sc.foot.contact_height > 0.0) {
            return Err(bad("contact_distance, voxel_pitch, hand_half_size and contact_height must be positive".into()));
        }
        if self.milestones == 0 || !(self.fps > 0.0) {
            return Err(bad("milestones and fps must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order; parses back to
    /// an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cam = &self.camera;
        let w = &self.weights;
        let r = &self.score.rewards;
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let stages: Vec<String> = self.schedule.stages.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let lines: Vec<(&str, String)> = vec![
            ("focal", cam.focal.to_string()),
            ("cx", cam.principal[0].to_string()),
            ("cy", cam.principal[1].to_string()),
            ("width", cam.width.to_string()),
            ("height", cam.height.to_string()),
            ("w_sil", w.w_sil.to_string()),
            ("w_depth_rel", w.w_depth_rel.to_string()),
            ("w_depth_abs", w.w_depth_abs.to_string()),
            ("w_contact", w.w_contact.to_string()),
            ("w_penetration", w.w_penetration.to_string()),
            ("theta", w.theta_contact.to_string()),
            ("lambda_object", w.lambda_object.to_string()),
            ("stages", stages.join(",")),
            ("lr", self.schedule.learning_rate.to_string()),
            ("beta1", self.schedule.beta1.to_string()),
            ("beta2", self.schedule.beta2.to_string()),
            ("epsilon", self.schedule.epsilon.to_string()),
            ("optimize_scale", self.schedule.optimize_scale.to_string()),
            ("sigma", self.soft.sigma.to_string()),
            ("edge_cutoff", self.soft.cutoff.to_string()),
            ("background_eps", self.soft.background_eps.to_string()),
            ("depth_softness", self.soft.depth_softness.to_string()),
            ("cull_back_faces", self.soft.cull_back_faces.to_string()),
            ("ransac_threshold", self.coarse.ransac.threshold_px.to_string()),
            ("ransac_iterations", self.coarse.ransac.iterations.to_string()),
            ("max_matches", self.coarse.max_matches.to_string()),
            ("refit_px", self.coarse.refit_px.to_string()),
            ("human_root_depth", self.coarse.view_depth.to_string()),
            ("lambda_p", r.lambda_p.to_string()),
            ("lambda_r", r.lambda_r.to_string()),
            ("lambda_v", r.lambda_v.to_string()),
            ("lambda_omega", r.lambda_omega.to_string()),
            ("lambda_reg", r.lambda_reg.to_string()),
            ("lambda_acc", r.lambda_acc.to_string()),
            ("lambda_contact", r.lambda_contact.to_string()),
            ("object_lambda_p", opt(r.object_lambda_p)),
            ("object_lambda_r", opt(r.object_lambda_r)),
            ("object_lambda_v", opt(r.object_lambda_v)),
            ("object_lambda_omega", opt(r.object_lambda_omega)),
            ("force_threshold", r.force_threshold.to_string()),
            ("key_joints", r.key_joints.join(",")),
            ("foot_joints", self.score.foot_joints.join(",")),
            ("hand_joints", self.score.hand_joints.join(",")),
            ("up_axis", ["x", "y", "z"][self.score.foot.up_axis.min(2)].to_string()),
            ("ground_height", self.score.foot.ground_height.to_string()),
            ("contact_height", self.score.foot.contact_height.to_string()),
            ("contact_distance", self.score.contact_distance.to_string()),
            ("voxel_pitch", self.score.voxel_pitch.to_string()),
            ("hand_half_size", self.score.hand_half_size.to_string()),
            ("milestones", self.milestones.to_string()),
            ("fps", self.fps.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_constants() {
        let c = Config::default();
        assert_eq!(c.weights.w_sil, 100.0);
        assert_eq!(c.weights.w_depth_rel, 0.5);
        assert_eq!(c.weights.w_depth_abs, 0.1);
        assert_eq!(c.weights.w_contact, 1.0);
        assert_eq!(c.weights.w_penetration, 100.0);
        assert_eq!(c.weights.theta_contact, 0.1);
        assert_eq!(c.schedule.stages, vec![(1, 200), (2, 200), (3, 200)]);
        assert_eq!(c.schedule.learning_rate, 1e-3);
        let r = &c.score.rewards;
        assert_eq!((r.lambda_p, r.lambda_r, r.lambda_v, r.lambda_omega), (-1.0, -0.3, -0.02, -0.02));
        assert_eq!((r.lambda_reg, r.lambda_acc, r.lambda_contact), (-0.01, -0.01, -3.0));
    }

    #[test]
    fn text_roundtrip() {
        let mut c = Config::default();
        c.set("w_sil", "50").unwrap();
        c.set("stages", "1:10, 3:20").unwrap();
        c.set("object_lambda_p", "-2").unwrap();
        c.set("key_joints", "L_Wrist").unwrap();
        c.set("up_axis", "y").unwrap();
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_presets_and_errors() {
        let c = Config::parse("# test\ncamera = reference\nfocal = 650 # override\n").unwrap();
        assert_eq!(c.camera.width, 512);
        assert_eq!(c.camera.focal, 650.0);
        assert!(matches!(Config::parse("w_sil = lots"), Err(IoError::Format(_))));
        assert!(matches!(Config::parse("mystery = 1"), Err(IoError::Invalid(_))));
        assert!(matches!(Config::parse("lambda_p = 0.5"), Err(IoError::Invalid(_))));
        assert!(matches!(Config::parse("just text"), Err(IoError::Format(_))));
        assert!(Config::parse("iterations = 0").is_err());
    }
}
