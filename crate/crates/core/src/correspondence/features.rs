use nalgebra::{Point3, Vector3};

use super::CorrespondenceError;
use crate::geometry::TriangleMesh;
use crate::render::{surface_point, SurfaceBuffer};

/// Dense per-pixel descriptors with a validity mask. Channels are
/// innermost: the descriptor of `(x, y)` is
/// `data[(y * width + x) * channels ..][..channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl FeatureMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self, CorrespondenceError> {
        if channels == 0 {
            return Err(CorrespondenceError::InvalidFeatures("zero channels".into()));
        }
        if data.len() != width * height * channels || valid.len() != width * height {
            return Err(CorrespondenceError::InvalidFeatures(format!(
                "{}x{}x{} map with {} values and {} mask entries",
                width,
                height,
                channels,
                data.len(),
                valid.len()
            )));
        }
        let mut map = Self { width, height, channels, data, valid };
        // non-finite descriptors cannot be matched
        for i in 0..width * height {
            if map.valid[i] && map.data[i * channels..(i + 1) * channels].iter().any(|v| !v.is_finite()) {
                map.valid[i] = false;
            }
        }
        Ok(map)
    }

    /// All pixels valid.
    pub fn dense(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, CorrespondenceError> {
        Self::new(width, height, channels, data, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn descriptor(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Pixel coordinates of valid pixels in row-major order.
    pub fn valid_pixels(&self) -> Vec<[usize; 2]> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| [x, y]))
            .filter(|&[x, y]| self.is_valid(x, y))
            .collect()
    }

    /// Intersects the validity mask with `mask`.
    pub fn masked(&self, mask: &[bool]) -> Result<FeatureMap, CorrespondenceError> {
        if mask.len() != self.valid.len() {
            return Err(CorrespondenceError::InvalidFeatures("mask size differs from feature map".into()));
        }
        let mut out = self.clone();
        for (v, m) in out.valid.iter_mut().zip(mask) {
            *v &= *m;
        }
        Ok(out)
    }

    /// Inclusive bounding box `[x0, y0, x1, y1]` of valid pixels.
    pub fn valid_bbox(&self) -> Option<[usize; 4]> {
        let mut bb: Option<[usize; 4]> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_valid(x, y) {
                    bb = Some(match bb {
                        None => [x, y, x, y],
                        Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
                    });
                }
            }
        }
        bb
    }
}

pub fn descriptor_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (*x - *y) as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Source of per-pixel descriptors for rendered or observed surfaces.
pub trait FeatureExtractor: Sync {
    fn channels(&self) -> usize;

    /// Descriptor of an object surface point and its normal, both in object coordinates.
    fn object_feature(&self, point: &Point3<f64>, normal: &Vector3<f64>, out: &mut [f32]);

    /// Descriptor of a non-object surface point, in camera coordinates.
    fn other_feature(&self, point: &Point3<f64>, out: &mut [f32]);
}

/// Descriptors for a hard render. Pixels of mesh `object` use object-space
/// geometry; other meshes' pixels are valid only when `include_others`.
pub fn features_from_surface(
    buffer: &SurfaceBuffer,
    meshes: &[&TriangleMesh],
    object: usize,
    include_others: bool,
    extractor: &dyn FeatureExtractor,
) -> FeatureMap {
    let (w, h, c) = (buffer.width(), buffer.height(), extractor.channels());
    let mut data = vec![0f32; w * h * c];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(s) = buffer.sample(x, y) else { continue };
            let i = y * w + x;
            let out = &mut data[i * c..(i + 1) * c];
            if s.mesh == object {
                let (p, n) = surface_point(meshes[s.mesh], s);
                extractor.object_feature(&p, &n, out);
                valid[i] = true;
            } else if include_others {
                let (p, _) = surface_point(meshes[s.mesh], s);
                extractor.other_feature(&p, out);
                valid[i] = true;
            }
        }
    }
    FeatureMap { width: w, height: h, channels: c, data, valid }
}
