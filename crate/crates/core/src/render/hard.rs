//! Exact z-buffer rasterization at pixel centers.
//!
//! Produces per-pixel surface samples (mesh, face, perspective-correct
//! barycentrics, depth). The coarse stage reads object-space points from it,
//! fixtures are built from it, and it is the reference the soft renderer is
//! checked against.

use nalgebra::{Point3, Vector3};

use super::image::Grid;
use crate::camera::Camera;
use crate::geometry::{Pose6DoF, TriangleMesh};

const NEAR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub depth: f64,
    pub mesh: usize,
    pub face: usize,
    pub bary: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceBuffer {
    samples: Grid<Option<SurfaceSample>>,
}

impl SurfaceBuffer {
    pub fn width(&self) -> usize {
        self.samples.width()
    }

    pub fn height(&self) -> usize {
        self.samples.height()
    }

    pub fn sample(&self, x: usize, y: usize) -> Option<&SurfaceSample> {
        self.samples.get(x, y).as_ref()
    }

    pub fn samples(&self) -> &Grid<Option<SurfaceSample>> {
        &self.samples
    }

    /// Binary silhouette of all meshes.
    pub fn silhouette(&self) -> Grid<f64> {
        self.samples.map(|s| if s.is_some() { 1.0 } else { 0.0 })
    }

    /// Binary silhouette of the pixels where mesh `index` is the visible surface.
    pub fn mesh_mask(&self, index: usize) -> Grid<f64> {
        self.samples.map(|s| match s {
            Some(s) if s.mesh == index => 1.0,
            _ => 0.0,
        })
    }

    /// Depth of the visible surface, 0 where empty.
    pub fn depth(&self) -> Grid<f64> {
        self.samples.map(|s| s.map_or(0.0, |s| s.depth))
    }
}

/// Point and normal in the mesh's own (untransformed) coordinates.
pub fn surface_point(mesh: &TriangleMesh, sample: &SurfaceSample) -> (Point3<f64>, Vector3<f64>) {
    let [a, b, c] = mesh.triangle(sample.face);
    let [u, v, w] = sample.bary;
    let p = Point3::from(a.coords * u + b.coords * v + c.coords * w);
    let n = match mesh.normals() {
        Some(ns) => {
            let t = mesh.triangles()[sample.face];
            let n = ns[t[0]] * u + ns[t[1]] * v + ns[t[2]] * w;
            if n.norm() > 0.0 {
                n.normalize()
            } else {
                mesh.face_normal(sample.face)
            }
        }
        None => mesh.face_normal(sample.face),
    };
    (p, n)
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

pub fn rasterize_hard(meshes: &[(&TriangleMesh, &Pose6DoF)], camera: &Camera) -> SurfaceBuffer {
    let (w, h) = (camera.width, camera.height);
    let mut samples: Grid<Option<SurfaceSample>> = Grid::filled(w, h, None);
    for (mi, (mesh, pose)) in meshes.iter().enumerate() {
        let verts: Vec<Point3<f64>> = mesh.vertices().iter().map(|p| pose.transform_point(p)).collect();
        for (fi, tri) in mesh.triangles().iter().enumerate() {
            let cam = tri.map(|i| verts[i]);
            if cam.iter().any(|p| p.z <= NEAR) {
                continue;
            }
            let px = cam.map(|p| camera.project(&p).expect("in front of camera"));
            let area = edge(px[0], px[1], px[2]);
            if area == 0.0 {
                continue;
            }
            let xmin = px.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let xmax = px.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let ymin = px.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let ymax = px.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            if xmax < 0.0 || ymax < 0.0 || xmin > w as f64 || ymin > h as f64 {
                continue;
            }
            let x0 = (xmin - 0.5).ceil().max(0.0) as usize;
            let x1 = ((xmax - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
            let y0 = (ymin - 0.5).ceil().max(0.0) as usize;
            let y1 = ((ymax - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            for y in y0..=(y1 as usize) {
                for x in x0..=(x1 as usize) {
                    let p = [x as f64 + 0.5, y as f64 + 0.5];
                    let l = [
                        edge(px[1], px[2], p) / area,
                        edge(px[2], px[0], p) / area,
                        edge(px[0], px[1], p) / area,
                    ];
                    if l.iter().any(|&v| v < 0.0) {
                        continue;
                    }
                    let inv_z: f64 = (0..3).map(|k| l[k] / cam[k].z).sum();
                    let z = 1.0 / inv_z;
                    let closer = match samples.get(x, y) {
                        Some(s) => z < s.depth,
                        None => true,
                    };
                    if closer {
                        let bary = [l[0] / cam[0].z * z, l[1] / cam[1].z * z, l[2] / cam[2].z * z];
                        samples.set(x, y, Some(SurfaceSample { depth: z, mesh: mi, face: fi, bary }));
                    }
                }
            }
        }
    }
    SurfaceBuffer { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn fronto_parallel_square_depth_and_area() {
        let cam = Camera::desk();
        let cube = TriangleMesh::cuboid([0.0; 3], [0.25, 0.25, 0.25]);
        let pose = Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 2.5));
        let buf = rasterize_hard(&[(&cube, &pose)], &cam);
        // front face at z = 2.25 spans f·0.5/2.25 ≈ 38.9 px
        let side = 175.0 * 0.5 / 2.25;
        let count = buf.silhouette().count_above(0.5) as f64;
        assert!((count - side * side).abs() < 4.0 * side, "{count}");
        let d = buf.depth();
        assert!((d.get(64, 64) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn nearer_mesh_wins() {
        let cam = Camera::desk();
        let a = TriangleMesh::cuboid([0.0, 0.0, 3.0], [0.2; 3]);
        let b = TriangleMesh::cuboid([0.0, 0.0, 2.0], [0.1; 3]);
        let id = Pose6DoF::identity();
        let buf = rasterize_hard(&[(&a, &id), (&b, &id)], &cam);
        assert_eq!(buf.sample(64, 64).unwrap().mesh, 1);
        assert!(buf.mesh_mask(0).count_above(0.5) > 0);
    }

    #[test]
    fn surface_point_recovers_object_coordinates() {
        let cam = Camera::desk();
        let cube = TriangleMesh::cuboid([0.0; 3], [0.2; 3]);
        let pose = Pose6DoF::new([0.9, 0.2, 0.3, 0.1], [0.05, -0.02, 2.0], 1.0).unwrap();
        let buf = rasterize_hard(&[(&cube, &pose)], &cam);
        for y in 0..cam.height {
            for x in 0..cam.width {
                if let Some(s) = buf.sample(x, y) {
                    let (p, _) = surface_point(&cube, s);
                    let world = pose.transform_point(&p);
                    let expected = cam.unproject(x as f64 + 0.5, y as f64 + 0.5, s.depth);
                    assert!((world - expected).norm() < 1e-9);
                }
            }
        }
    }
}
