use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{GeometryError, Pose6DoF};

const DEGENERATE_AREA: f64 = 1e-14;

/// Indexed triangle mesh in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Option<Vec<Vector3<f64>>>,
    dropped_degenerate: usize,
    watertight: bool,
}

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles (their count is kept in
    /// [`TriangleMesh::dropped_degenerate`]).
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if let Some(p) = vertices.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidMesh(format!("non-finite vertex {p:?}")));
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for t in triangles {
            if let Some(&bad) = t.iter().find(|&&i| i >= n) {
                return Err(GeometryError::IndexOutOfRange { index: bad, count: n });
            }
            let [a, b, c] = t.map(|i| vertices[i]);
            if (b - a).cross(&(c - a)).norm() * 0.5 <= DEGENERATE_AREA {
                dropped += 1;
                continue;
            }
            kept.push(t);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        let watertight = is_closed(&kept);
        Ok(Self {
            vertices,
            triangles: kept,
            normals: None,
            dropped_degenerate: dropped,
            watertight,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        if normals.len() != self.vertices.len() {
            return Err(GeometryError::InvalidMesh(format!(
                "{} normals for {} vertices",
                normals.len(),
                self.vertices.len()
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    /// True when every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.aabb();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len().max(1) as f64)
    }

    /// Enclosed volume by the divergence theorem (meaningful for closed meshes).
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn transformed(&self, pose: &Pose6DoF) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|p| pose.transform_point(p)).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect());
        TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
            normals,
            dropped_degenerate: self.dropped_degenerate,
            watertight: self.watertight,
        }
    }

    /// Area-weighted vertex normals.
    pub fn compute_vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i] += n;
            }
        }
        acc.into_iter()
            .map(|n| if n.norm() > 0.0 { n.normalize() } else { n })
            .collect()
    }

    /// Concatenates meshes; the parts keep their own connectivity.
    pub fn merge(parts: &[TriangleMesh]) -> Result<TriangleMesh, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in parts {
            let base = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(m.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Axis-aligned box with outward-facing (counter-clockwise) triangles.
    pub fn cuboid(center: [f64; 3], half: [f64; 3]) -> TriangleMesh {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            vertices.push(Point3::new(
                center[0] + sx * half[0],
                center[1] + sy * half[1],
                center[2] + sz * half[2],
            ));
        }
        let triangles = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        TriangleMesh::new(vertices, triangles).expect("cuboid is valid")
    }

    /// Prism obtained by extruding a simple counter-clockwise polygon in the
    /// xy-plane between `z0 < z1`. Caps are ear-clipped.
    pub fn extrude_polygon(outline: &[[f64; 2]], z0: f64, z1: f64) -> Result<TriangleMesh, GeometryError> {
        let n = outline.len();
        if n < 3 || z1 <= z0 {
            return Err(GeometryError::InvalidMesh("extrusion needs ≥3 points and z1 > z0".into()));
        }
        if signed_area_2d(outline) <= 0.0 {
            return Err(GeometryError::InvalidMesh("outline must be counter-clockwise".into()));
        }
        let cap = ear_clip(outline)?;
        let mut vertices = Vec::with_capacity(2 * n);
        for p in outline {
            vertices.push(Point3::new(p[0], p[1], z0));
        }
        for p in outline {
            vertices.push(Point3::new(p[0], p[1], z1));
        }
        let mut triangles = Vec::with_capacity(2 * cap.len() + 2 * n);
        for [a, b, c] in &cap {
            triangles.push([*a, *c, *b]);
            triangles.push([a + n, b + n, c + n]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([i, j, j + n]);
            triangles.push([i, j + n, i + n]);
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// UV sphere; used for hand proxies in the metrics.
    pub fn uv_sphere(center: [f64; 3], radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
        let stacks = stacks.max(2);
        let slices = slices.max(3);
        let mut vertices = vec![Point3::new(center[0], center[1], center[2] + radius)];
        for i in 1..stacks {
            let phi = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let th = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
                vertices.push(Point3::new(
                    center[0] + radius * phi.sin() * th.cos(),
                    center[1] + radius * phi.sin() * th.sin(),
                    center[2] + radius * phi.cos(),
                ));
            }
        }
        let south = vertices.len();
        vertices.push(Point3::new(center[0], center[1], center[2] - radius));
        let ring = |i: usize, j: usize| 1 + (i - 1) * slices + (j % slices);
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for j in 0..slices {
            triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        TriangleMesh::new(vertices, triangles).expect("sphere is valid")
    }

    pub fn from_obj_str(text: &str) -> Result<TriangleMesh, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            let bad = |msg: &str| GeometryError::Obj { line: lineno + 1, message: msg.to_string() };
            match it.next() {
                Some("v") => {
                    let coords: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(&e.to_string()))?;
                    if coords.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            return Err(bad("face index 0"));
                        };
                        if resolved < 0 {
                            return Err(bad("face index before first vertex"));
                        }
                        idx.push(resolved as usize);
                    }
                    if idx.len() < 3 {
                        return Err(bad("face needs at least three vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh, GeometryError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GeometryError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_obj_str(&text)
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        std::fs::write(path.as_ref(), self.to_obj_string())
            .map_err(|e| GeometryError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

fn is_closed(triangles: &[[usize; 3]]) -> bool {
    if triangles.is_empty() {
        return false;
    }
    let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges.values().all(|&c| c == 2)
}

fn signed_area_2d(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn ear_clip(poly: &[[f64; 2]]) -> Result<Vec<[usize; 3]>, GeometryError> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (i, j, l) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (poly[i], poly[j], poly[l]);
            if cross(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&q| {
                if q == i || q == j || q == l {
                    return true;
                }
                let p = poly[q];
                !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
            })
        });
        let Some(k) = ear else {
            return Err(GeometryError::InvalidMesh("polygon is not simple".into()));
        };
        out.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    out.push([idx[0], idx[1], idx[2]]);
    Ok(out)
}

/// Subset of a mesh's vertices (palm vertices, contact regions).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct VertexSelection {
    indices: Vec<usize>,
}

impl VertexSelection {
    pub fn new(indices: Vec<usize>, vertex_count: usize) -> Result<Self, GeometryError> {
        let mut seen = std::collections::HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= vertex_count {
                return Err(GeometryError::IndexOutOfRange { index: i, count: vertex_count });
            }
            if !seen.insert(i) {
                return Err(GeometryError::InvalidMesh(format!("duplicate vertex {i} in selection")));
            }
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_is_closed_with_positive_volume() {
        let c = TriangleMesh::cuboid([0.0; 3], [0.5, 0.5, 0.5]);
        assert!(c.is_watertight());
        assert!((c.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extrusion_of_l_shape() {
        let l = [[0.0, 0.0], [0.3, 0.0], [0.3, 0.1], [0.1, 0.1], [0.1, 0.2], [0.0, 0.2]];
        let m = TriangleMesh::extrude_polygon(&l, 0.0, 0.05).unwrap();
        assert!(m.is_watertight());
        let area = 0.3 * 0.1 + 0.1 * 0.1;
        assert!((m.volume() - area * 0.05).abs() < 1e-12);
    }

    #[test]
    fn sphere_is_closed() {
        let s = TriangleMesh::uv_sphere([0.0; 3], 1.0, 12, 16);
        assert!(s.is_watertight());
        // inscribed polyhedron: slightly smaller than the true ball
        let ball = 4.0 / 3.0 * std::f64::consts::PI;
        assert!(s.volume() < ball && s.volume() > 0.9 * ball, "{}", s.volume());
    }

    #[test]
    fn degenerate_triangles_are_dropped_and_counted() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert_eq!(m.dropped_degenerate(), 1);
        assert!(!m.is_watertight());
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let v = vec![Point3::origin(); 3];
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 3]]),
            Err(GeometryError::IndexOutOfRange { index: 3, count: 3 })
        ));
    }

    #[test]
    fn obj_round_trip_and_fan_triangulation() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let m = TriangleMesh::from_obj_str(text).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
        let c = TriangleMesh::cuboid([0.1, -0.2, 0.3], [0.25, 0.125, 1.0 / 3.0]);
        let back = TriangleMesh::from_obj_str(&c.to_obj_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = TriangleMesh::from_obj_str("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, GeometryError::Obj { line: 2, .. }));
    }

    #[test]
    fn selection_validation() {
        assert!(VertexSelection::new(vec![0, 2], 3).is_ok());
        assert!(VertexSelection::new(vec![0, 0], 3).is_err());
        assert!(VertexSelection::new(vec![5], 3).is_err());
    }
}
