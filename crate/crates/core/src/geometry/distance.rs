//! Point-to-triangle and point-to-mesh distances.
//!
//! Unsigned distances go through [`closest_point_on_triangle`], which is
//! generic so that the same code yields pose derivatives inside the losses.
//! Inside/outside is decided by ray parity with a majority vote over three
//! fixed, non-axis-aligned directions.

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;
use crate::jet::{Scalar, V3};

const RAY_DIRECTIONS: [[f64; 3]; 3] = [
    [0.577_215_664_9, 0.693_147_180_6, 0.432_067_934_2],
    [-0.618_033_988_7, 0.302_775_637_7, 0.725_404_001_1],
    [0.174_532_925_2, -0.881_373_587_0, -0.438_896_471_5],
];

/// Closest point to `p` on triangle `(a, b, c)` (Ericson, Real-Time Collision Detection §5.1.5).
pub fn closest_point_on_triangle<T: Scalar>(p: V3<T>, a: V3<T>, b: V3<T>, c: V3<T>) -> V3<T> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1.value() <= 0.0 && d2.value() <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3.value() >= 0.0 && d4.value() <= d3.value() {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc.value() <= 0.0 && d1.value() >= 0.0 && d3.value() <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab.mul(v);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6.value() >= 0.0 && d5.value() <= d6.value() {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb.value() <= 0.0 && d2.value() >= 0.0 && d6.value() <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac.mul(w);
    }
    let va = d3 * d6 - d5 * d4;
    if va.value() <= 0.0 && (d4 - d3).value() >= 0.0 && (d5 - d6).value() >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b).mul(w);
    }
    let denom = (va + vb + vc).recip();
    let v = vb * denom;
    let w = vc * denom;
    a + ab.mul(v) + ac.mul(w)
}

/// Squared distance from `p` to the nearest of `triangles`.
pub fn min_distance_sq<T: Scalar>(p: V3<T>, triangles: &[[V3<T>; 3]]) -> T {
    let mut best: Option<T> = None;
    for [a, b, c] in triangles {
        let q = closest_point_on_triangle(p, *a, *b, *c);
        let d2 = (p - q).norm2();
        if best.is_none_or(|b| d2.value() < b.value()) {
            best = Some(d2);
        }
    }
    best.unwrap_or(T::cst(f64::INFINITY))
}

/// Unsigned distance, safe to differentiate when the point sits on the surface.
pub fn min_distance<T: Scalar>(p: V3<T>, triangles: &[[V3<T>; 3]]) -> T {
    let d2 = min_distance_sq(p, triangles);
    if d2.value() <= 0.0 {
        T::cst(0.0)
    } else {
        d2.sqrt()
    }
}

pub fn to_v3<T: Scalar>(p: &Point3<f64>) -> V3<T> {
    V3::cst([p.x, p.y, p.z])
}

pub fn mesh_triangles<T: Scalar>(mesh: &TriangleMesh) -> Vec<[V3<T>; 3]> {
    (0..mesh.triangles().len())
        .map(|i| mesh.triangle(i).map(|p| to_v3(&p)))
        .collect()
}

/// Unsigned distance from `p` to the surface of `mesh`.
pub fn unsigned_distance(p: &Point3<f64>, mesh: &TriangleMesh) -> f64 {
    let tris = mesh_triangles::<f64>(mesh);
    min_distance(to_v3(p), &tris)
}

/// Signed distance result; `reliable` is false when the mesh is not closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedDistance {
    pub value: f64,
    pub reliable: bool,
}

/// Signed distance to `mesh`, negative inside.
pub fn signed_point_mesh_distance(p: &Point3<f64>, mesh: &TriangleMesh) -> SignedDistance {
    let d = unsigned_distance(p, mesh);
    let inside = d > 0.0 && is_inside(p, mesh);
    SignedDistance {
        value: if inside { -d } else { d },
        reliable: mesh.is_watertight(),
    }
}

/// Majority vote of ray-parity tests along three fixed directions.
pub fn is_inside(p: &Point3<f64>, mesh: &TriangleMesh) -> bool {
    let votes = RAY_DIRECTIONS
        .iter()
        .filter(|d| ray_crossings(p, &Vector3::new(d[0], d[1], d[2]), mesh) % 2 == 1)
        .count();
    votes >= 2
}

fn ray_crossings(origin: &Point3<f64>, dir: &Vector3<f64>, mesh: &TriangleMesh) -> usize {
    (0..mesh.triangles().len())
        .filter(|&i| {
            let [a, b, c] = mesh.triangle(i);
            ray_triangle(origin, dir, &a, &b, &c).is_some()
        })
        .count()
}

/// Möller–Trumbore; returns the ray parameter of a hit with `t > 0`.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-12).then_some(t)
}
