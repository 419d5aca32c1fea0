//! Motion quality metrics: foot sliding, hand-object intersection volume and
//! contact percentage.

use nalgebra::Point3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{signed_point_mesh_distance, TriangleMesh};
use crate::motion::HOISequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("missing joint {0:?}")]
    MissingJoint(String),
    #[error("missing {0}")]
    MissingData(String),
    #[error("mesh is not watertight")]
    NotWatertight,
    #[error("empty sequence")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Sub-voxel offset of the scan columns, so they never pass exactly through
/// a mesh edge or vertex on an axis-aligned grid.
const COLUMN_JITTER: [f64; 2] = [1.234_567e-7, 7.654_321e-8];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootSlidingParams {
    /// Height (m) below which a foot is considered grounded.
    pub contact_height: f64,
    pub ground_height: f64,
    /// Index of the vertical axis in joint positions.
    pub up_axis: usize,
}

impl Default for FootSlidingParams {
    fn default() -> Self {
        Self { contact_height: 0.05, ground_height: 0.0, up_axis: 2 }
    }
}

fn resolve(seq: &HOISequence, names: &[String]) -> Result<Vec<usize>, MetricError> {
    names
        .iter()
        .map(|n| seq.joint_index(n).ok_or_else(|| MetricError::MissingJoint(n.clone())))
        .collect()
}

/// Mean over frame transitions of `Σ_feet d · (2 − 2^{h/H})` for feet with
/// height `h < H`, where `d` is the horizontal displacement since the
/// previous frame. Meters per frame.
pub fn foot_sliding(seq: &HOISequence, feet: &[String], params: &FootSlidingParams) -> Result<f64, MetricError> {
    if params.up_axis > 2 || !(params.contact_height > 0.0) {
        return Err(MetricError::InvalidParameter("up axis or contact height".into()));
    }
    if seq.is_empty() {
        return Err(MetricError::Empty);
    }
    let idx = resolve(seq, feet)?;
    let positions = seq
        .frames
        .iter()
        .map(|f| f.joint_positions.as_ref().ok_or_else(|| MetricError::MissingData("joint positions".into())))
        .collect::<Result<Vec<_>, _>>()?;
    if positions.len() < 2 {
        return Ok(0.0);
    }
    let up = params.up_axis;
    let mut total = 0.0;
    for w in positions.windows(2) {
        for &j in &idx {
            let (p0, p1) = (w[0][j], w[1][j]);
            let h = p1[up] - params.ground_height;
            if h >= params.contact_height {
                continue;
            }
            let mut d = p1 - p0;
            d[up] = 0.0;
            total += d.norm() * (2.0 - 2f64.powf(h / params.contact_height));
        }
    }
    Ok(total / (positions.len() - 1) as f64)
}

/// Inside/outside of voxel centers `origin + (i + ½) · pitch`, indexed
/// `(ix · ny + iy) · nz + iz`, by parity of crossings along z columns.
pub fn voxelize(mesh: &TriangleMesh, origin: Point3<f64>, pitch: f64, dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let tris: Vec<[Point3<f64>; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
    let mut out = vec![false; nx * ny * nz];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(ix, slab)| {
        let x = origin.x + (ix as f64 + 0.5) * pitch + COLUMN_JITTER[0] * pitch;
        let mut hits = Vec::new();
        for iy in 0..ny {
            let y = origin.y + (iy as f64 + 0.5) * pitch + COLUMN_JITTER[1] * pitch;
            hits.clear();
            for [a, b, c] in &tris {
                if let Some(z) = column_hit(x, y, a, b, c) {
                    hits.push(z);
                }
            }
            hits.sort_by(f64::total_cmp);
            let col = &mut slab[iy * nz..(iy + 1) * nz];
            let mut k = 0;
            for (iz, v) in col.iter_mut().enumerate() {
                let z = origin.z + (iz as f64 + 0.5) * pitch;
                while k < hits.len() && hits[k] < z {
                    k += 1;
                }
                *v = k % 2 == 1;
            }
        }
    });
    out
}

fn column_hit(x: f64, y: f64, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<f64> {
    let d = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if d == 0.0 {
        return None;
    }
    let u = ((b.x - x) * (c.y - y) - (b.y - y) * (c.x - x)) / d;
    let v = ((c.x - x) * (a.y - y) - (c.y - y) * (a.x - x)) / d;
    let w = 1.0 - u - v;
    (u >= 0.0 && v >= 0.0 && w >= 0.0).then(|| u * a.z + v * b.z + w * c.z)
}

/// Volume (cm³) of the voxels at `pitch` meters that lie inside both meshes,
/// sampled over the intersection of their bounding boxes.
pub fn intersection_volume(a: &TriangleMesh, b: &TriangleMesh, pitch: f64) -> Result<f64, MetricError> {
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(MetricError::InvalidParameter(format!("voxel pitch {pitch}")));
    }
    if !a.is_watertight() || !b.is_watertight() {
        return Err(MetricError::NotWatertight);
    }
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    let lo = Point3::from(alo.coords.sup(&blo.coords));
    let hi = Point3::from(ahi.coords.inf(&bhi.coords));
    let ext = hi - lo;
    if ext.iter().any(|e| *e <= 0.0) {
        return Ok(0.0);
    }
    let dims = [0, 1, 2].map(|k| ((ext[k] / pitch - 1e-9).ceil() as usize).max(1));
    let ia = voxelize(a, lo, pitch, dims);
    let ib = voxelize(b, lo, pitch, dims);
    let count = ia.iter().zip(&ib).filter(|(x, y)| **x && **y).count();
    Ok(count as f64 * pitch.powi(3) * 1e6)
}

/// Percentage of frames where some hand joint is closer than `threshold`
/// meters to the posed object surface (or inside it).
pub fn contact_percentage(
    seq: &HOISequence,
    object: &TriangleMesh,
    hands: &[String],
    threshold: f64,
) -> Result<f64, MetricError> {
    if seq.is_empty() {
        return Err(MetricError::Empty);
    }
    let idx = resolve(seq, hands)?;
    let flags = seq
        .frames
        .par_iter()
        .map(|f| {
            let pos = f.joint_positions.as_ref().ok_or_else(|| MetricError::MissingData("joint positions".into()))?;
            let posed = object.transformed(&f.object);
            Ok(idx.iter().any(|&j| signed_point_mesh_distance(&Point3::from(pos[j]), &posed).value < threshold))
        })
        .collect::<Result<Vec<bool>, MetricError>>()?;
    Ok(100.0 * flags.iter().filter(|c| **c).count() as f64 / flags.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose6DoF;
    use crate::motion::{HOIFrame, LABELED_PARTS};
    use nalgebra::Vector3;

    fn skeleton() -> Vec<String> {
        LABELED_PARTS.iter().map(|s| s.to_string()).collect()
    }

    fn feet() -> Vec<String> {
        vec!["L_Ankle".into(), "R_Ankle".into()]
    }

    fn seq_with(positions: impl Fn(usize) -> Vec<Vector3<f64>>, n: usize) -> HOISequence {
        let frames = (0..n)
            .map(|i| {
                let mut f = HOIFrame::rest(i as f64 / 30.0, 17);
                f.joint_positions = Some(positions(i));
                f
            })
            .collect();
        HOISequence::new(30.0, skeleton(), frames).unwrap()
    }

    #[test]
    fn static_feet_do_not_slide() {
        let s = seq_with(|_| vec![Vector3::new(0.1, 0.2, 0.0); 17], 10);
        assert_eq!(foot_sliding(&s, &feet(), &FootSlidingParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn grounded_sliding_foot() {
        let s = seq_with(
            |i| {
                let mut p = vec![Vector3::new(0.0, 0.0, 0.0); 17];
                p[2] = Vector3::new(0.01 * i as f64, 0.0, 0.0);
                p
            },
            11,
        );
        let fs = foot_sliding(&s, &feet(), &FootSlidingParams::default()).unwrap();
        assert!((fs - 0.01).abs() < 1e-12);
    }

    #[test]
    fn airborne_foot_is_ignored() {
        let s = seq_with(
            |i| {
                let mut p = vec![Vector3::new(0.0, 0.0, 0.3); 17];
                p[2] = Vector3::new(0.05 * i as f64, 0.0, 0.05);
                p
            },
            5,
        );
        assert_eq!(foot_sliding(&s, &feet(), &FootSlidingParams::default()).unwrap(), 0.0);
        assert!(foot_sliding(&s, &["Tail".to_string()], &FootSlidingParams::default()).is_err());
    }

    #[test]
    fn half_overlapping_unit_cubes() {
        let a = TriangleMesh::cuboid([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]);
        let b = TriangleMesh::cuboid([1.0, 0.5, 0.5], [0.5, 0.5, 0.5]);
        let iv = intersection_volume(&a, &b, 0.005).unwrap();
        assert!((iv - 5e5).abs() < 0.02 * 5e5, "{iv}");
    }

    #[test]
    fn disjoint_and_nested() {
        let a = TriangleMesh::cuboid([0.0, 0.0, 0.0], [0.05, 0.05, 0.05]);
        let b = TriangleMesh::cuboid([0.3, 0.0, 0.0], [0.05, 0.05, 0.05]);
        assert_eq!(intersection_volume(&a, &b, 0.005).unwrap(), 0.0);
        let small = TriangleMesh::cuboid([0.01, -0.005, 0.0], [0.02, 0.015, 0.01]);
        let v = intersection_volume(&a, &small, 0.002).unwrap();
        let oracle = 0.04 * 0.03 * 0.02 * 1e6;
        assert!((v - oracle).abs() < 0.02 * oracle, "{v} vs {oracle}");
    }

    #[test]
    fn rotated_overlap_matches_analytic() {
        // a sphere inside a cube: volume of the (polyhedral) sphere
        let cube = TriangleMesh::cuboid([0.0, 0.0, 0.0], [0.2, 0.2, 0.2]);
        let sphere = TriangleMesh::uv_sphere([0.02, -0.01, 0.0], 0.1, 24, 48);
        let v = intersection_volume(&cube, &sphere, 0.002).unwrap();
        let oracle = sphere.volume() * 1e6;
        assert!((v - oracle).abs() < 0.02 * oracle, "{v} vs {oracle}");
        let _ = Pose6DoF::identity();
    }

    #[test]
    fn open_mesh_is_rejected() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let open = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let cube = TriangleMesh::cuboid([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert_eq!(intersection_volume(&open, &cube, 0.01), Err(MetricError::NotWatertight));
    }

    #[test]
    fn planted_half_contact() {
        let object = TriangleMesh::cuboid([0.0, 0.0, 0.0], [0.1, 0.1, 0.1]);
        let s = seq_with(
            |i| {
                let mut p = vec![Vector3::new(0.0, 2.0, 0.0); 17];
                // wrist 5 mm above the top face on even frames, 0.5 m away otherwise
                p[13] = if i % 2 == 0 { Vector3::new(0.0, 0.105, 0.0) } else { Vector3::new(0.0, 0.6, 0.0) };
                p
            },
            20,
        );
        let hands = vec!["L_Wrist".to_string(), "R_Wrist".to_string()];
        assert_eq!(contact_percentage(&s, &object, &hands, 0.02).unwrap(), 50.0);
        assert_eq!(contact_percentage(&s, &object, &hands, 1.0).unwrap(), 100.0);
        assert_eq!(contact_percentage(&s, &object, &hands, 0.001).unwrap(), 0.0);
    }
}
