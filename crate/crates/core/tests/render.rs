use hoifit::camera::Camera;
use hoifit::geometry::{Pose6DoF, TriangleMesh};
use hoifit::jet::{PoseJet, Scalar};
use hoifit::render::{pose_gradient, rasterize_hard, render_layers, render_soft, posed_vertices, SoftParams};
use nalgebra::{Point3, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn camera() -> Camera {
    Camera::desk().resized(64, 64)
}

fn cube() -> TriangleMesh {
    TriangleMesh::cuboid([0.0; 3], [0.1; 3])
}

fn at(z: f64) -> Pose6DoF {
    Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, z))
}

#[test]
fn nothing_in_frustum_renders_empty() {
    let behind = Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, -2.0));
    let aside = Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(50.0, 0.0, 2.0));
    let mesh = cube();
    for pose in [behind, aside] {
        let (s, d) = render_soft(&[(&mesh, &pose)], &camera(), &SoftParams::default());
        assert!(s.data().iter().all(|&v| v == 0.0));
        assert!(d.data().iter().all(|&v| v == 0.0));
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
    (p[0] - a[0] - t * ex).hypot(p[1] - a[1] - t * ey)
}

#[test]
fn cube_filling_view_saturates_inside() {
    let big = TriangleMesh::cuboid([0.0; 3], [1.0; 3]);
    let cam = camera();
    let params = SoftParams::default();
    let (s, _) = render_soft(&[(&big, &at(2.0))], &cam, &params);
    let projected: Vec<[f64; 2]> = posed_vertices(&big, &at(2.0))
        .iter()
        .map(|v| cam.project(&Point3::from(v.value())).unwrap())
        .collect();
    let edges: Vec<([f64; 2], [f64; 2])> = big
        .triangles()
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .map(|(a, b)| (projected[a], projected[b]))
        .collect();
    let mut checked = 0;
    for y in 4..cam.height - 4 {
        for x in 4..cam.width - 4 {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            // interior means more than 5σ from every projected edge, seams included
            if edges.iter().any(|(a, b)| segment_distance(p, *a, *b) <= 5.0 * params.sigma) {
                continue;
            }
            assert!(*s.get(x, y) >= 0.99, "({x},{y}) {}", s.get(x, y));
            checked += 1;
        }
    }
    assert!(checked > 2500, "{checked}");
}

#[test]
fn sharp_silhouette_agrees_with_z_buffer() {
    let cam = camera();
    let mesh = cube();
    let pose = Pose6DoF::new([0.9, 0.2, 0.3, 0.1], [0.02, 0.01, 1.5], 1.0).unwrap();
    let (s, _) = render_soft(&[(&mesh, &pose)], &cam, &SoftParams::default().with_sigma(0.01));
    let hard = rasterize_hard(&[(&mesh, &pose)], &cam).silhouette();
    let differ = s.data().iter().zip(hard.data()).filter(|(a, b)| (**a > 0.5) != (**b > 0.5)).count();
    assert!((differ as f64) < 0.02 * s.len() as f64, "{differ}");
}

#[test]
fn rendering_is_bitwise_deterministic() {
    let mesh = cube();
    let pose = Pose6DoF::new([0.8, 0.3, -0.2, 0.4], [0.0, 0.03, 1.8], 1.0).unwrap();
    let a = render_soft(&[(&mesh, &pose)], &camera(), &SoftParams::default());
    let b = render_soft(&[(&mesh, &pose)], &camera(), &SoftParams::default());
    assert_eq!(a.0.data(), b.0.data());
    assert_eq!(a.1.data(), b.1.data());
}

#[test]
fn gradient_vanishes_at_target() {
    let mesh = cube();
    let cam = camera();
    let params = SoftParams::default();
    let pose = Pose6DoF::new([0.8, 0.3, -0.2, 0.4], [0.0, 0.03, 1.8], 1.0).unwrap();
    let target = render_layers(&posed_vertices(&mesh, &pose), mesh.triangles(), None, &cam, &params);
    let (v, g) = pose_gradient(&mesh, &pose, None, &cam, &params, |l, _| {
        let mut acc = PoseJet::constant(0.0);
        for (s, t) in l.silhouette.data().iter().zip(target.silhouette.data()) {
            let r = *s - PoseJet::cst(*t);
            acc += r * r;
        }
        acc
    });
    assert!(v < 1e-20, "{v}");
    assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-4);
}

#[test]
fn x_offset_gives_negative_x_gradient() {
    let mesh = cube();
    let cam = camera();
    let params = SoftParams::default();
    let target = render_layers(&posed_vertices(&mesh, &at(1.5)), mesh.triangles(), None, &cam, &params);
    let moved = Pose6DoF::from_rotation_translation(UnitQuaternion::identity(), Vector3::new(-0.03, 0.0, 1.5));
    let (_, g) = pose_gradient(&mesh, &moved, None, &cam, &params, |l, _| {
        let mut acc = PoseJet::constant(0.0);
        for (s, t) in l.silhouette.data().iter().zip(target.silhouette.data()) {
            acc += (*s - PoseJet::cst(*t)).abs();
        }
        acc
    });
    // the object sits left of its target, so moving +x lowers the loss
    assert!(g[3] < 0.0, "{g:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_up_never_shrinks_silhouette(s in 1.0f64..1.5, yaw in -0.5f64..0.5) {
        let mesh = cube();
        let cam = camera();
        let r = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw);
        let small = Pose6DoF::from_parts(r, Vector3::new(0.0, 0.0, 1.5), 1.0);
        let large = small.with_scale(s);
        let (a, _) = render_soft(&[(&mesh, &small)], &cam, &SoftParams::default());
        let (b, _) = render_soft(&[(&mesh, &large)], &cam, &SoftParams::default());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(*y >= *x - 1e-6, "{} < {}", y, x);
        }
    }
}
