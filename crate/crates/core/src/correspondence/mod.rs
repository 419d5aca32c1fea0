//! Coarse pose estimation from dense descriptors.

mod coarse;
mod features;
mod matching;
mod pnp;
mod ransac;

pub use coarse::{
    coarse_pose, nearest_view_angle, render_view, select_viewpoint, view_center, view_score, CoarseParams,
    CoarseResult, ViewRender, ViewSelection,
};
pub use features::{descriptor_distance, features_from_surface, FeatureExtractor, FeatureMap};
pub use matching::{bidirectional_match, Match2D};
pub use pnp::{align_rigid, mean_reprojection_error, solve_pnp, Correspondence3D2D, PnpSolution};
pub use ransac::{fit_homography, ransac_homography_filter, transfer_error, RansacParams, RansacResult};

use thiserror::Error;

use crate::geometry::Pose6DoF;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondenceError {
    #[error("need at least {needed} items, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("descriptor channel counts differ: {0} vs {1}")]
    ChannelMismatch(usize, usize),
    #[error("no valid target pixels")]
    EmptyRegion,
    #[error("invalid feature map: {0}")]
    InvalidFeatures(String),
    #[error("coarse stage failed at view {view_index}: {reason}")]
    CoarseFailure { reason: String, view_index: usize, fallback: Box<Pose6DoF> },
}
