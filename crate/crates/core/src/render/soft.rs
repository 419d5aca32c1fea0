//! Differentiable soft rasterizer.
//!
//! Each face contributes its coverage blurred by an isotropic Gaussian of
//! standard deviation σ pixels. Along a straight edge that is `Φ(d / σ)`,
//! a sigmoid of the signed pixel distance `d` to the edge; near vertices it
//! is the exact blurred mass of the triangle. Faces sharing an edge tile
//! without a seam, and a larger footprint never lowers any pixel. The
//! silhouette sums the face coverages and rounds the result off at `1`,
//! which only matters where surfaces overlap. Depth composites the
//! perspective-correct depth of each face's plane, extended past its edges.
//! A sample's weight is its occupancy times
//! `Π_{g≠f} (1 - o_g · σ((z_f - z_g) / τ))`, a smooth version of the
//! transmittance through nearer samples, and the depth is the weighted mean
//! of the sample depths (plus a small epsilon in the denominator, so empty
//! pixels read `0`). A faint tail of a nearer face only moves the depth in
//! proportion to its occupancy, and no ordering step breaks smoothness.
//!
//! Everything is generic over [`Scalar`], so the same pass yields values
//! (`f64`) or exact pose derivatives ([`PoseJet`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coverage::triangle_coverage;
use super::image::Grid;
use crate::camera::Camera;
use crate::geometry::{Pose6DoF, TriangleMesh};
use crate::jet::{Jet, PoseJet, Scalar, POSE_DIM, V3};

const NEAR: f64 = 1e-6;
const CLAMP_WIDTH: f64 = 0.001;
/// Extended face planes are floored at this fraction of the farthest
/// vertex's inverse depth; the floor blends in over ± this fraction.
/// `FLOOR_RATIO + FLOOR_WIDTH ≤ 1` keeps the face interior untouched.
const FLOOR_RATIO: f64 = 0.8;
const FLOOR_WIDTH: f64 = 0.1;

/// `0` for `u ≤ -1`, `u` for `u ≥ 1`, a C³ polynomial in between.
#[inline]
fn smooth_ramp<T: Scalar>(u: T) -> T {
    let x = u.value();
    if x <= -1.0 {
        return T::cst(0.0);
    }
    if x >= 1.0 {
        return u;
    }
    let u2 = u * u;
    let u4 = u2 * u2;
    (u2.scale(0.5) - u4.scale(1.0 / 6.0) + (u4 * u2).scale(1.0 / 30.0)).scale(15.0 / 16.0) + u.scale(0.5) + T::cst(5.0 / 32.0)
}

/// `min(x, 1)` with the corner rounded over `1 ± CLAMP_WIDTH`; rounding
/// noise below zero reads as zero.
#[inline]
fn soft_clamp<T: Scalar>(x: T) -> T {
    if x.value() <= 0.0 {
        return T::cst(0.0);
    }
    T::cst(1.0) - smooth_ramp((T::cst(1.0) - x).scale(1.0 / CLAMP_WIDTH)).scale(CLAMP_WIDTH)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftParams {
    /// Edge blur in pixels.
    pub sigma: f64,
    /// Faces farther outside than `cutoff · sigma` pixels are skipped.
    pub cutoff: f64,
    /// Silhouette level under which depth decays to the background.
    pub background_eps: f64,
    /// Depth difference (meters) over which one sample goes from occluding
    /// another to being occluded by it.
    pub depth_softness: f64,
    /// Skip faces whose outward normal points away from the camera. Needs
    /// consistently wound meshes; avoids double-counting outline edges.
    pub cull_back_faces: bool,
}

impl Default for SoftParams {
    fn default() -> Self {
        Self { sigma: 0.5, cutoff: 30.0, background_eps: 1e-6, depth_softness: 1e-3, cull_back_faces: true }
    }
}

impl SoftParams {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Rendered soft layers. `object_silhouette` only includes faces passed as
/// the object; `silhouette` and `depth` include the background layer too.
#[derive(Clone, Debug)]
pub struct SoftLayers<T> {
    pub silhouette: Grid<T>,
    pub object_silhouette: Grid<T>,
    pub depth: Grid<T>,
}

impl<T: Scalar> SoftLayers<T> {
    pub fn values(&self) -> SoftLayers<f64> {
        SoftLayers {
            silhouette: self.silhouette.map(|v| v.value()),
            object_silhouette: self.object_silhouette.map(|v| v.value()),
            depth: self.depth.map(|v| v.value()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Sample<T> {
    x: usize,
    o: T,
    z: T,
    object: bool,
}

#[derive(Clone, Copy, Debug, Default)]
struct StaticPixel {
    occupancy: f64,
    depth: f64,
}

/// Precomputed f64 composite of a mesh that does not move during
/// optimization (the human). Per pixel it acts as one extra sample with the
/// layer's occupancy and depth.
#[derive(Clone, Debug)]
pub struct StaticLayer {
    width: usize,
    height: usize,
    pixels: Vec<StaticPixel>,
}

impl StaticLayer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn silhouette(&self) -> Grid<f64> {
        let data = self.pixels.iter().map(|p| p.occupancy).collect();
        Grid::from_vec(self.width, self.height, data).expect("sized")
    }

    pub fn depth(&self) -> Grid<f64> {
        let data = self.pixels.iter().map(|p| p.depth).collect();
        Grid::from_vec(self.width, self.height, data).expect("sized")
    }
}

struct ProjectedFace<T> {
    p: [[T; 2]; 3],
    inv_z: [T; 3],
    orient: f64,
    edge: [[T; 2]; 3],
    inv_len: [T; 3],
    two_area: T,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

fn project_faces<T: Scalar>(
    verts: &[V3<T>],
    triangles: &[[usize; 3]],
    camera: &Camera,
    params: &SoftParams,
) -> Vec<ProjectedFace<T>> {
    let margin = params.cutoff * params.sigma;
    triangles.iter().filter_map(|tri| project_face(verts, tri, camera, params, margin)).collect()
}

/// Projects one triangle, or `None` when it is culled or its footprint misses the image.
fn project_face<T: Scalar>(
    verts: &[V3<T>],
    tri: &[usize; 3],
    camera: &Camera,
    params: &SoftParams,
    margin: f64,
) -> Option<ProjectedFace<T>> {
    let f = camera.focal;
    let [cx, cy] = camera.principal;
    let v = tri.map(|i| verts[i]);
    if v.iter().any(|q| q.z.value() <= NEAR) {
        return None;
    }
    let inv_z = v.map(|q| q.z.recip());
    let p: [[T; 2]; 3] = [0, 1, 2].map(|k| {
        [v[k].x * inv_z[k] * T::cst(f) + T::cst(cx), v[k].y * inv_z[k] * T::cst(f) + T::cst(cy)]
    });
    let edge: [[T; 2]; 3] = [0, 1, 2].map(|k| {
        let n = (k + 1) % 3;
        [p[n][0] - p[k][0], p[n][1] - p[k][1]]
    });
    let two_area = edge[0][0] * (p[2][1] - p[0][1]) - edge[0][1] * (p[2][0] - p[0][0]);
    let a = two_area.value();
    if a == 0.0 || !a.is_finite() {
        return None;
    }
    // counter-clockwise outward winding projects to negative area when facing the camera
    if params.cull_back_faces && a > 0.0 {
        return None;
    }
    let orient = a.signum();
    let len2 = edge.map(|e| e[0] * e[0] + e[1] * e[1]);
    if len2.iter().any(|l| l.value() <= 0.0) {
        return None;
    }
    let inv_len = len2.map(|l| l.sqrt().recip());
    let xs = p.map(|q| q[0].value());
    let ys = p.map(|q| q[1].value());
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min) - margin;
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + margin;
    let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min) - margin;
    let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + margin;
    let (w, h) = (camera.width as f64, camera.height as f64);
    if xmax < 0.5 || ymax < 0.5 || xmin > w - 0.5 || ymin > h - 0.5 {
        return None;
    }
    let face = ProjectedFace {
        p,
        inv_z,
        orient,
        edge,
        inv_len,
        two_area,
        x0: (xmin - 0.5).ceil().max(0.0) as usize,
        x1: (xmax - 0.5).floor().min(w - 1.0) as usize,
        y0: (ymin - 0.5).ceil().max(0.0) as usize,
        y1: (ymax - 0.5).floor().min(h - 1.0).max(0.0) as usize,
    };
    Some(face)
}

/// Occupancy and depth of `face` at pixel center `(px, py)`, or `None`
/// beyond the cutoff.
#[inline]
fn face_sample<T: Scalar>(face: &ProjectedFace<T>, px: f64, py: f64, params: &SoftParams) -> Option<(T, T)> {
    let mut c = [T::cst(0.0); 3];
    let mut d = [T::cst(0.0); 3];
    let mut dmin = f64::INFINITY;
    for k in 0..3 {
        let e = face.edge[k];
        let q = face.p[k];
        c[k] = e[0] * (T::cst(py) - q[1]) - e[1] * (T::cst(px) - q[0]);
        d[k] = (c[k] * face.inv_len[k]).scale(face.orient);
        dmin = dmin.min(d[k].value());
    }
    if dmin < -params.cutoff * params.sigma {
        return None;
    }
    let o = triangle_coverage(&face.p, px, py, params.sigma, face.orient);
    if o.value() <= 0.0 {
        // rounding noise far outside the face
        return None;
    }
    // the face plane extended past its edges; far outside a grazing face
    // the extension can approach the horizon, so it is softly floored
    let inv_area = face.two_area.recip();
    let plane = (c[1] * face.inv_z[0] + c[2] * face.inv_z[1] + c[0] * face.inv_z[2]) * inv_area;
    let far = face.inv_z.iter().copied().fold(face.inv_z[0], |a, b| if b.value() < a.value() { b } else { a });
    let floor = far.scale(FLOOR_RATIO);
    let width = far.scale(FLOOR_WIDTH);
    let inv_depth = floor + smooth_ramp((plane - floor) / width) * width;
    Some((o, inv_depth.recip()))
}

struct RowOut<T> {
    silhouette: Vec<T>,
    object: Vec<T>,
    depth: Vec<T>,
    weight: Vec<T>,
}

/// Composites one image row. Each sample is attenuated by every other
/// sample at the pixel in proportion to how surely it lies behind it.
fn composite_row<T: Scalar>(
    y: usize,
    width: usize,
    faces: &[ProjectedFace<T>],
    background: Option<&[StaticPixel]>,
    params: &SoftParams,
) -> RowOut<T> {
    let py = y as f64 + 0.5;
    let mut samples = Vec::new();
    for face in faces.iter().filter(|f| f.y0 <= y && y <= f.y1) {
        for x in face.x0..=face.x1 {
            if let Some((o, z)) = face_sample(face, x as f64 + 0.5, py, params) {
                samples.push(Sample { x, o, z, object: true });
            }
        }
    }
    if let Some(bg) = background {
        for (x, p) in bg.iter().enumerate() {
            if p.occupancy > 0.0 {
                samples.push(Sample { x, o: T::cst(p.occupancy), z: T::cst(p.depth), object: false });
            }
        }
    }
    samples.sort_by_key(|s| s.x);
    let one = T::cst(1.0);
    let inv_tau = 1.0 / params.depth_softness;
    let mut out = RowOut {
        silhouette: vec![T::cst(0.0); width],
        object: vec![T::cst(0.0); width],
        depth: vec![T::cst(0.0); width],
        weight: vec![T::cst(0.0); width],
    };
    let mut start = 0;
    while start < samples.len() {
        let x = samples[start].x;
        let end = start + samples[start..].iter().take_while(|s| s.x == x).count();
        let group = &samples[start..end];
        let mut cover = T::cst(0.0);
        let mut object_cover = T::cst(0.0);
        let mut wz = T::cst(0.0);
        let mut wsum = T::cst(0.0);
        for (i, s) in group.iter().enumerate() {
            cover += s.o;
            if s.object {
                object_cover += s.o;
            }
            let mut visible = s.o;
            for (j, g) in group.iter().enumerate() {
                if i != j {
                    visible *= one - g.o * (s.z - g.z).scale(inv_tau).sigmoid();
                }
            }
            wz += visible * s.z;
            wsum += visible;
        }
        out.silhouette[x] = soft_clamp(cover);
        out.object[x] = soft_clamp(object_cover);
        out.depth[x] = wz / (wsum + T::cst(params.background_eps));
        out.weight[x] = wsum;
        start = end;
    }
    out
}

fn composite<T: Scalar>(
    faces: &[ProjectedFace<T>],
    background: Option<&StaticLayer>,
    camera: &Camera,
    params: &SoftParams,
) -> (SoftLayers<T>, Vec<T>) {
    let (w, h) = (camera.width, camera.height);
    if let Some(bg) = background {
        assert_eq!((bg.width, bg.height), (w, h), "static layer size");
    }
    let rows: Vec<RowOut<T>> = (0..h)
        .into_par_iter()
        .map(|y| composite_row(y, w, faces, background.map(|b| &b.pixels[y * w..(y + 1) * w]), params))
        .collect();
    let mut sil = Vec::with_capacity(w * h);
    let mut obj = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut weight = Vec::with_capacity(w * h);
    for r in rows {
        sil.extend(r.silhouette);
        obj.extend(r.object);
        depth.extend(r.depth);
        weight.extend(r.weight);
    }
    let layers = SoftLayers {
        silhouette: Grid::from_vec(w, h, sil).expect("sized"),
        object_silhouette: Grid::from_vec(w, h, obj).expect("sized"),
        depth: Grid::from_vec(w, h, depth).expect("sized"),
    };
    (layers, weight)
}

/// Camera-frame vertices of `mesh` under `pose`.
pub fn posed_vertices(mesh: &TriangleMesh, pose: &Pose6DoF) -> Vec<V3<f64>> {
    mesh.vertices()
        .iter()
        .map(|p| {
            let q = pose.transform_point(p);
            V3::cst([q.x, q.y, q.z])
        })
        .collect()
}

/// Camera-frame vertices carrying derivatives with respect to a left
/// increment `(ω, δt, δs)` of `pose`, linearized at zero.
pub fn posed_vertices_jet(mesh: &TriangleMesh, pose: &Pose6DoF) -> Vec<V3<PoseJet>> {
    let t = pose.translation();
    mesh.vertices()
        .iter()
        .map(|p| {
            let q = pose.transform_point(p);
            let r = [q.x - t.x, q.y - t.y, q.z - t.z];
            let mut comps = [Jet::constant(q.x), Jet::constant(q.y), Jet::constant(q.z)];
            // d/dω_k of (e_k × r), d/dt_k = e_k, d/dδs = r
            let dw = [[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]];
            for (i, c) in comps.iter_mut().enumerate() {
                let mut d = [0.0; POSE_DIM];
                for k in 0..3 {
                    d[k] = dw[k][i];
                }
                d[3 + i] = 1.0;
                d[6] = r[i];
                c.d = d;
            }
            V3::new(comps[0], comps[1], comps[2])
        })
        .collect()
}

pub fn rasterize_static(
    verts: &[V3<f64>],
    triangles: &[[usize; 3]],
    camera: &Camera,
    params: &SoftParams,
) -> StaticLayer {
    let faces = project_faces(verts, triangles, camera, params);
    let (layers, weight) = composite(&faces, None, camera, params);
    let pixels = layers
        .silhouette
        .data()
        .iter()
        .zip(layers.depth.data())
        .zip(weight)
        .map(|((&s, &d), w)| {
            // undo the background blend so the layer can be composited again
            let depth = if w > 0.0 { d * (w + params.background_eps) / w } else { 0.0 };
            StaticPixel { occupancy: s, depth }
        })
        .collect();
    StaticLayer { width: camera.width, height: camera.height, pixels }
}

/// Renders object faces over an optional static layer.
pub fn render_layers<T: Scalar>(
    verts: &[V3<T>],
    triangles: &[[usize; 3]],
    background: Option<&StaticLayer>,
    camera: &Camera,
    params: &SoftParams,
) -> SoftLayers<T> {
    let faces = project_faces(verts, triangles, camera, params);
    composite(&faces, background, camera, params).0
}

/// Soft silhouette and depth of several posed meshes, all treated as one scene.
pub fn render_soft(
    meshes: &[(&TriangleMesh, &Pose6DoF)],
    camera: &Camera,
    params: &SoftParams,
) -> (Grid<f64>, Grid<f64>) {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (mesh, pose) in meshes {
        let base = verts.len();
        verts.extend(posed_vertices(mesh, pose));
        tris.extend(mesh.triangles().iter().map(|t| t.map(|i| i + base)));
    }
    let layers = render_layers(&verts, &tris, None, camera, params);
    (layers.silhouette, layers.depth)
}

/// Value and gradient of `loss` with respect to a left increment of the
/// object pose. The closure receives the rendered layers and the posed
/// object vertices.
pub fn pose_gradient<F>(
    object: &TriangleMesh,
    pose: &Pose6DoF,
    background: Option<&StaticLayer>,
    camera: &Camera,
    params: &SoftParams,
    loss: F,
) -> (f64, [f64; POSE_DIM])
where
    F: Fn(&SoftLayers<PoseJet>, &[V3<PoseJet>]) -> PoseJet,
{
    let verts = posed_vertices_jet(object, pose);
    let layers = render_layers(&verts, object.triangles(), background, camera, params);
    let l = loss(&layers, &verts);
    (l.v, l.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::hard::rasterize_hard;
    use nalgebra::{UnitQuaternion, Vector3};

    fn scene() -> (TriangleMesh, Pose6DoF, Camera) {
        let mesh = TriangleMesh::cuboid([0.0; 3], [0.2, 0.15, 0.1]);
        let pose = Pose6DoF::new([0.95, 0.15, 0.25, 0.05], [0.03, -0.02, 2.0], 1.0).unwrap();
        let cam = Camera::desk().resized(64, 64);
        (mesh, pose, cam)
    }

    #[test]
    fn silhouette_in_unit_interval_and_close_to_hard() {
        let (mesh, pose, cam) = scene();
        let (s, d) = render_soft(&[(&mesh, &pose)], &cam, &SoftParams::default());
        assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(d.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        let hard = rasterize_hard(&[(&mesh, &pose)], &cam).silhouette();
        let soft_area: f64 = s.data().iter().sum();
        let hard_area: f64 = hard.data().iter().sum();
        assert!((soft_area - hard_area).abs() < 0.05 * hard_area, "{soft_area} {hard_area}");
    }

    #[test]
    fn sharp_depth_matches_z_buffer_inside() {
        let (mesh, pose, cam) = scene();
        let params = SoftParams::default().with_sigma(1e-3);
        let (s, d) = render_soft(&[(&mesh, &pose)], &cam, &params);
        let hard = rasterize_hard(&[(&mesh, &pose)], &cam);
        let hd = hard.depth();
        let mut checked = 0;
        let mut partial = 0;
        for y in 1..cam.height - 1 {
            for x in 1..cam.width - 1 {
                // interior pixels whose 3×3 neighbourhood is covered
                let covered = (0..9).all(|i| hard.sample(x + i % 3 - 1, y + i / 3 - 1).is_some());
                if covered {
                    // interior coverage should be saturated
                    if *s.get(x, y) < 0.999 {
                        partial += 1;
                    }
                    assert!((d.get(x, y) - hd.get(x, y)).abs() < 1e-4, "{} {}", d.get(x, y), hd.get(x, y));
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
        assert!(partial * 50 < checked, "{partial}/{checked}");
    }

    #[test]
    fn empty_pixels_have_zero_depth() {
        let (mesh, pose, cam) = scene();
        let (_, d) = render_soft(&[(&mesh, &pose)], &cam, &SoftParams::default());
        assert_eq!(*d.get(0, 0), 0.0);
    }

    #[test]
    fn jet_gradient_matches_finite_differences() {
        let (mesh, pose, cam) = scene();
        let params = SoftParams::default().with_sigma(1.0);
        let human = TriangleMesh::cuboid([0.15, 0.05, 2.1], [0.08, 0.2, 0.08]);
        let hv = posed_vertices(&human, &Pose6DoF::identity());
        let bg = rasterize_static(&hv, human.triangles(), &cam, &params);
        let loss = |l: &SoftLayers<PoseJet>, _: &[V3<PoseJet>]| -> PoseJet {
            let mut acc = PoseJet::constant(0.0);
            for (i, (s, d)) in l.silhouette.data().iter().zip(l.depth.data()).enumerate() {
                let wgt = ((i * 7919) % 13) as f64 / 13.0;
                acc += s.scale(wgt) + (*d * *d).scale(0.1 * wgt);
            }
            for s in l.object_silhouette.data() {
                acc += *s * *s;
            }
            acc
        };
        let (v, g) = pose_gradient(&mesh, &pose, Some(&bg), &cam, &params, loss);
        let eval = |p: &Pose6DoF| {
            let verts = posed_vertices(&mesh, p);
            let l = render_layers(&verts, mesh.triangles(), Some(&bg), &cam, &params);
            let mut acc = 0.0;
            for (i, (s, d)) in l.silhouette.data().iter().zip(l.depth.data()).enumerate() {
                let wgt = ((i * 7919) % 13) as f64 / 13.0;
                acc += s * wgt + d * d * 0.1 * wgt;
            }
            acc + l.object_silhouette.data().iter().map(|s| s * s).sum::<f64>()
        };
        assert!((eval(&pose) - v).abs() < 1e-9 * v.abs().max(1.0));
        let h = 1e-6;
        for k in 0..POSE_DIM {
            let mut dp = [0.0; POSE_DIM];
            dp[k] = h;
            let plus = eval(&pose.apply_increment(&dp));
            dp[k] = -h;
            let minus = eval(&pose.apply_increment(&dp));
            let fd = (plus - minus) / (2.0 * h);
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-3, "param {k}: {} vs {}", g[k], fd);
        }
    }

    #[test]
    fn translation_along_x_moves_silhouette() {
        let (mesh, _, cam) = scene();
        let pose = Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 2.0));
        let loss = |l: &SoftLayers<PoseJet>, _: &[V3<PoseJet>]| {
            let mut acc = PoseJet::constant(0.0);
            for y in 0..cam.height {
                for x in cam.width / 2..cam.width {
                    acc += *l.silhouette.get(x, y);
                }
            }
            acc
        };
        let (_, g) = pose_gradient(&mesh, &pose, None, &cam, &SoftParams::default(), loss);
        assert!(g[3] > 0.0);
    }
}
