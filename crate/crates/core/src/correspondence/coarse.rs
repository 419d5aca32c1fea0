//! Coarse pose: pick the best of 24 canonical views, match its rendered
//! descriptors to the image, filter with RANSAC and solve PnP.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{descriptor_distance, features_from_surface, FeatureExtractor, FeatureMap};
use super::matching::{bidirectional_match, Match2D};
use super::pnp::{mean_reprojection_error, solve_pnp, Correspondence3D2D};
use super::ransac::{ransac_homography_filter, RansacParams};
use super::CorrespondenceError;
use crate::camera::Camera;
use crate::geometry::{octahedral_rotations, Pose6DoF, TriangleMesh};
use crate::render::{rasterize_hard, surface_point, SurfaceBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseParams {
    pub ransac: RansacParams,
    pub max_matches: usize,
    /// Depth of the candidate views when no human mesh is given, meters.
    pub view_depth: f64,
    /// After PnP, matches reprojecting within this many pixels are used for a
    /// second PnP solve; `0` disables it.
    pub refit_px: f64,
}

impl Default for CoarseParams {
    fn default() -> Self {
        Self { ransac: RansacParams::default(), max_matches: 2000, view_depth: 2.5, refit_px: 2.0 }
    }
}

/// A rendered candidate view.
#[derive(Clone, Debug)]
pub struct ViewRender {
    pub pose: Pose6DoF,
    pub surface: SurfaceBuffer,
    pub features: FeatureMap,
}

pub fn render_view(template: &TriangleMesh, pose: &Pose6DoF, camera: &Camera, extractor: &dyn FeatureExtractor) -> ViewRender {
    let surface = rasterize_hard(&[(template, pose)], camera);
    let features = features_from_surface(&surface, &[template], 0, false, extractor);
    ViewRender { pose: *pose, surface, features }
}

/// Mean descriptor distance after stretching the rendered view's valid
/// bounding box onto the target's. Target pixels that land on invalid
/// rendered pixels are compared against the zero descriptor.
pub fn view_score(rendered: &FeatureMap, target: &FeatureMap) -> Result<f64, CorrespondenceError> {
    if rendered.channels() != target.channels() {
        return Err(CorrespondenceError::ChannelMismatch(rendered.channels(), target.channels()));
    }
    let tb = target.valid_bbox().ok_or(CorrespondenceError::EmptyRegion)?;
    let Some(rb) = rendered.valid_bbox() else { return Ok(f64::INFINITY) };
    let (tw, th) = ((tb[2] - tb[0] + 1) as f64, (tb[3] - tb[1] + 1) as f64);
    let (rw, rh) = (rb[2] - rb[0] + 1, rb[3] - rb[1] + 1);
    let zero = vec![0f32; target.channels()];
    let mut total = 0.0;
    let mut count = 0usize;
    for y in tb[1]..=tb[3] {
        for x in tb[0]..=tb[2] {
            if !target.is_valid(x, y) {
                continue;
            }
            let u = ((x - tb[0]) as f64 + 0.5) / tw;
            let v = ((y - tb[1]) as f64 + 0.5) / th;
            let rx = rb[0] + ((u * rw as f64) as usize).min(rw - 1);
            let ry = rb[1] + ((v * rh as f64) as usize).min(rh - 1);
            let d = if rendered.is_valid(rx, ry) { rendered.descriptor(rx, ry) } else { &zero[..] };
            total += descriptor_distance(target.descriptor(x, y), d);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug)]
pub struct ViewSelection {
    pub index: usize,
    pub score: f64,
    pub scores: Vec<f64>,
    pub view: ViewRender,
}

/// Where candidate views are placed: the human mesh centroid if given,
/// else on the optical axis at `depth`.
pub fn view_center(human: Option<&TriangleMesh>, depth: f64) -> Vector3<f64> {
    match human {
        Some(h) if !h.is_empty() => h.centroid().coords,
        _ => Vector3::new(0.0, 0.0, depth),
    }
}

/// Renders the template under all 24 octahedral rotations at `center` and
/// returns the view whose descriptors are closest to `target`.
pub fn select_viewpoint(
    template: &TriangleMesh,
    target: &FeatureMap,
    camera: &Camera,
    center: Vector3<f64>,
    extractor: &dyn FeatureExtractor,
) -> Result<ViewSelection, CorrespondenceError> {
    if target.valid_count() == 0 {
        return Err(CorrespondenceError::EmptyRegion);
    }
    let rotations = octahedral_rotations();
    let views: Vec<(ViewRender, f64)> = rotations
        .par_iter()
        .map(|r| {
            let pose = Pose6DoF::from_rotation_translation(*r, center);
            let view = render_view(template, &pose, camera, extractor);
            let score = view_score(&view.features, target)?;
            Ok((view, score))
        })
        .collect::<Result<_, CorrespondenceError>>()?;
    let scores: Vec<f64> = views.iter().map(|v| v.1).collect();
    let index = (0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    let score = scores[index];
    let view = views.into_iter().nth(index).expect("24 views").0;
    Ok(ViewSelection { index, score, scores, view })
}

#[derive(Clone, Debug)]
pub struct CoarseResult {
    pub pose: Pose6DoF,
    pub view_index: usize,
    pub view_score: f64,
    pub matches: usize,
    pub inliers: usize,
    pub reprojection_error: f64,
}

fn correspondences(template: &TriangleMesh, view: &ViewRender, matches: &[Match2D]) -> Vec<Correspondence3D2D> {
    matches
        .iter()
        .filter_map(|m| {
            let s = view.surface.sample(m.pixel_a[0], m.pixel_a[1])?;
            let (p, _): (Point3<f64>, _) = surface_point(template, s);
            Some(Correspondence3D2D { object: p, pixel: m.center_b() })
        })
        .collect()
}

/// Full coarse stage. `object_mask` restricts the target descriptors to the
/// observed object. On failure the error carries the selected view's pose as
/// a fallback.
pub fn coarse_pose(
    template: &TriangleMesh,
    target: &FeatureMap,
    object_mask: &[bool],
    human: Option<&TriangleMesh>,
    camera: &Camera,
    extractor: &dyn FeatureExtractor,
    params: &CoarseParams,
    seed: u64,
) -> Result<CoarseResult, CorrespondenceError> {
    let target = target.masked(object_mask)?;
    let center = view_center(human, params.view_depth);
    let sel = select_viewpoint(template, &target, camera, center, extractor)?;
    let fail = |reason: String| CorrespondenceError::CoarseFailure {
        reason,
        view_index: sel.index,
        fallback: Box::new(sel.view.pose),
    };
    let matches = bidirectional_match(&sel.view.features, &target, params.max_matches)?;
    log::debug!("view {} score {:.4}: {} matches", sel.index, sel.score, matches.len());
    if matches.len() < 4 {
        return Err(fail(format!("{} mutual matches", matches.len())));
    }
    let ransac = ransac_homography_filter(&matches, &params.ransac, seed).map_err(|e| fail(e.to_string()))?;
    if ransac.inliers.len() < 4 {
        return Err(fail(format!("{} RANSAC inliers", ransac.inliers.len())));
    }
    let corrs = correspondences(template, &sel.view, &ransac.inliers);
    let mut sol = solve_pnp(&corrs, camera).map_err(|e| fail(e.to_string()))?;
    let mut inliers = corrs.len();
    if params.refit_px > 0.0 {
        let all = correspondences(template, &sel.view, &matches);
        let agree: Vec<Correspondence3D2D> = all
            .into_iter()
            .filter(|c| mean_reprojection_error(&sol.pose, std::slice::from_ref(c), camera) < params.refit_px)
            .collect();
        if agree.len() > inliers {
            if let Ok(s) = solve_pnp(&agree, camera) {
                inliers = agree.len();
                sol = s;
            }
        }
    }
    let pose = sol.pose.with_scale(1.0);
    Ok(CoarseResult {
        pose,
        view_index: sel.index,
        view_score: sel.score,
        matches: matches.len(),
        inliers,
        reprojection_error: sol.reprojection_error,
    })
}

/// Rotation distance from `pose` to the nearest of the 24 canonical views.
pub fn nearest_view_angle(rotation: &UnitQuaternion<f64>) -> (usize, f64) {
    octahedral_rotations()
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.angle_to(rotation)))
        .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
}
