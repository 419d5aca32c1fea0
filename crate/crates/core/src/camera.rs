//! Pinhole camera at the origin looking down +z, image y pointing down.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::{Scalar, V3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point at depth {0} is behind the camera")]
    BehindCamera(f64),
    #[error("invalid camera: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self::desk()
    }
}

impl Camera {
    pub fn new(focal: f64, principal: [f64; 2], width: usize, height: usize) -> Result<Self, CameraError> {
        let cam = Self { focal, principal, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// 512×512, focal 700 px, principal point at the image center.
    pub fn reference() -> Self {
        Self { focal: 700.0, principal: [256.0, 256.0], width: 512, height: 512 }
    }

    /// The reference camera rescaled to 128×128 (focal 175 px).
    pub fn desk() -> Self {
        Self::reference().resized(128, 128)
    }

    /// Same field of view at a different resolution.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            focal: self.focal * sx,
            principal: [self.principal[0] * sx, self.principal[1] * sy],
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(CameraError::Invalid(format!("focal {}", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Invalid("empty image".into()));
        }
        let [cx, cy] = self.principal;
        if !(0.0..=self.width as f64).contains(&cx) || !(0.0..=self.height as f64).contains(&cy) {
            return Err(CameraError::Invalid(format!("principal point ({cx}, {cy}) outside image")));
        }
        Ok(())
    }

    /// `(f·x/z + cx, f·y/z + cy)`.
    pub fn project(&self, p: &Point3<f64>) -> Result<[f64; 2], CameraError> {
        if p.z <= 0.0 {
            return Err(CameraError::BehindCamera(p.z));
        }
        Ok([
            self.focal * p.x / p.z + self.principal[0],
            self.focal * p.y / p.z + self.principal[1],
        ])
    }

    /// Projection without the depth check, for any scalar type.
    #[inline]
    pub fn project_generic<T: Scalar>(&self, p: &V3<T>) -> [T; 2] {
        let inv_z = p.z.recip();
        [
            (p.x * inv_z).scale(self.focal) + T::cst(self.principal[0]),
            (p.y * inv_z).scale(self.focal) + T::cst(self.principal[1]),
        ]
    }

    /// Camera-frame point at `depth` (z) seen through pixel coordinates `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        Point3::new(
            (u - self.principal[0]) / self.focal * depth,
            (v - self.principal[1]) / self.focal * depth,
            depth,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optical_axis_hits_principal_point() {
        let c = Camera::reference();
        assert_eq!(c.project(&Point3::new(0.0, 0.0, 1.0)).unwrap(), [256.0, 256.0]);
    }

    #[test]
    fn pinhole_formula() {
        let c = Camera::reference();
        let [u, v] = c.project(&Point3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - 326.0).abs() < 1e-12 && (v - 256.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let c = Camera::reference();
        assert_eq!(c.project(&Point3::new(0.0, 0.0, -1.0)), Err(CameraError::BehindCamera(-1.0)));
    }

    #[test]
    fn desk_preset_rescales_focal() {
        let c = Camera::desk();
        assert_eq!((c.width, c.focal, c.principal), (128, 175.0, [64.0, 64.0]));
    }

    #[test]
    fn unproject_inverts_project() {
        let c = Camera::desk();
        let p = Point3::new(0.2, -0.3, 2.5);
        let [u, v] = c.project(&p).unwrap();
        assert!((c.unproject(u, v, 2.5) - p).norm() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(Camera::new(-1.0, [1.0, 1.0], 4, 4).is_err());
        assert!(Camera::new(10.0, [9.0, 1.0], 4, 4).is_err());
    }
}
