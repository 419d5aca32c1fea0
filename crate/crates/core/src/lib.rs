//! Object pose estimation for human-object interaction images, keyframe
//! milestone interpolation, and motion-tracking rewards and metrics.

pub mod geometry;
pub mod jet;
pub mod camera;
pub mod render;
pub mod correspondence;
pub mod losses;
pub mod fixture;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod motion;
pub mod optimizer;
pub mod pipeline;
pub mod rewards;
