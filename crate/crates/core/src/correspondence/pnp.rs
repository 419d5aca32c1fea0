//! EPnP initialization followed by Levenberg–Marquardt on reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Point3, SymmetricEigen, UnitQuaternion, Vector3, Vector6};

use super::CorrespondenceError;
use crate::camera::Camera;
use crate::geometry::Pose6DoF;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence3D2D {
    pub object: Point3<f64>,
    pub pixel: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnpSolution {
    pub pose: Pose6DoF,
    /// Mean reprojection error in pixels after refinement.
    pub reprojection_error: f64,
    /// Mean reprojection error of the EPnP estimate.
    pub initial_error: f64,
    pub lm_iterations: usize,
}

pub fn mean_reprojection_error(pose: &Pose6DoF, corrs: &[Correspondence3D2D], camera: &Camera) -> f64 {
    let total: f64 = corrs
        .iter()
        .map(|c| {
            let p = pose.transform_point(&c.object);
            if p.z <= 0.0 {
                return f64::INFINITY;
            }
            let u = camera.focal * p.x / p.z + camera.principal[0];
            let v = camera.focal * p.y / p.z + camera.principal[1];
            ((u - c.pixel[0]).powi(2) + (v - c.pixel[1]).powi(2)).sqrt()
        })
        .sum();
    total / corrs.len() as f64
}

/// Rigid alignment `R p + t ≈ q` (least squares, no scale).
pub fn align_rigid(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vector3<f64>>() / n;
    let cq = q.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        cov += (b - cq) * (a - cp).transpose();
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("u");
    let vt = svd.v_t.expect("v_t");
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    (r, cq - r * cp)
}

struct Epnp {
    alphas: Vec<Vec<f64>>,
    ctrl: Vec<Vector3<f64>>,
    kernel: Vec<DVector<f64>>,
}

impl Epnp {
    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.ctrl.len();
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    }

    fn diff(v: &DVector<f64>, a: usize, b: usize) -> Vector3<f64> {
        Vector3::new(v[3 * a] - v[3 * b], v[3 * a + 1] - v[3 * b + 1], v[3 * a + 2] - v[3 * b + 2])
    }

    /// Initial betas for a kernel of dimension `n` (1..=3) by linearization.
    fn init_betas(&self, n: usize) -> Option<Vec<f64>> {
        let pairs = self.pairs();
        let dc: Vec<f64> = pairs.iter().map(|&(a, b)| (self.ctrl[a] - self.ctrl[b]).norm_squared()).collect();
        let dv: Vec<Vec<Vector3<f64>>> = pairs
            .iter()
            .map(|&(a, b)| (0..n).map(|k| Self::diff(&self.kernel[k], a, b)).collect())
            .collect();
        match n {
            1 => {
                let num: f64 = dv.iter().zip(&dc).map(|(d, c)| d[0].norm() * c.sqrt()).sum();
                let den: f64 = dv.iter().map(|d| d[0].norm_squared()).sum();
                (den > 0.0).then(|| vec![num / den])
            }
            _ => {
                let terms: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
                if pairs.len() < terms.len() {
                    return None;
                }
                let mut l = DMatrix::zeros(pairs.len(), terms.len());
                for (r, d) in dv.iter().enumerate() {
                    for (c, &(i, j)) in terms.iter().enumerate() {
                        let f = if i == j { 1.0 } else { 2.0 };
                        l[(r, c)] = f * d[i].dot(&d[j]);
                    }
                }
                let rho = DVector::from_vec(dc.clone());
                let sol = l.svd(true, true).solve(&rho, 1e-12).ok()?;
                let b = |i: usize, j: usize| sol[terms.iter().position(|&t| t == (i, j)).unwrap()];
                let sign = if b(0, 0) < 0.0 { -1.0 } else { 1.0 };
                let mut betas = vec![(sign * b(0, 0)).max(0.0).sqrt()];
                for k in 1..n {
                    let mag = (sign * b(k, k)).max(0.0).sqrt();
                    betas.push(if sign * b(0, k) < 0.0 { -mag } else { mag });
                }
                Some(betas)
            }
        }
    }

    /// Gauss–Newton on the control-point distance constraints.
    fn refine_betas(&self, mut betas: Vec<f64>) -> Vec<f64> {
        let pairs = self.pairs();
        let n = betas.len();
        for _ in 0..10 {
            let mut jtj = DMatrix::<f64>::zeros(n, n);
            let mut jtr = DVector::<f64>::zeros(n);
            for &(a, b) in &pairs {
                let dvs: Vec<Vector3<f64>> = (0..n).map(|k| Self::diff(&self.kernel[k], a, b)).collect();
                let s: Vector3<f64> = dvs.iter().zip(&betas).map(|(d, bk)| d * *bk).sum();
                let r = s.norm_squared() - (self.ctrl[a] - self.ctrl[b]).norm_squared();
                let j: Vec<f64> = dvs.iter().map(|d| 2.0 * s.dot(d)).collect();
                for p in 0..n {
                    jtr[p] += j[p] * r;
                    for q in 0..n {
                        jtj[(p, q)] += j[p] * j[q];
                    }
                }
            }
            let Some(step) = jtj.clone().lu().solve(&(-jtr)) else { break };
            for (b, s) in betas.iter_mut().zip(step.iter()) {
                *b += s;
            }
            if step.norm() < 1e-14 {
                break;
            }
        }
        betas
    }

    fn camera_points(&self, betas: &[f64]) -> Vec<Vector3<f64>> {
        let nc = self.ctrl.len();
        let mut cc = vec![Vector3::zeros(); nc];
        for (k, b) in betas.iter().enumerate() {
            for (j, c) in cc.iter_mut().enumerate() {
                *c += Vector3::new(self.kernel[k][3 * j], self.kernel[k][3 * j + 1], self.kernel[k][3 * j + 2]) * *b;
            }
        }
        let mut pts: Vec<Vector3<f64>> = self
            .alphas
            .iter()
            .map(|a| a.iter().zip(&cc).map(|(w, c)| c * *w).sum())
            .collect();
        if pts.iter().map(|p| p.z).sum::<f64>() < 0.0 {
            for p in &mut pts {
                *p = -*p;
            }
        }
        pts
    }
}

fn epnp(corrs: &[Correspondence3D2D], camera: &Camera) -> Result<Pose6DoF, CorrespondenceError> {
    let n = corrs.len();
    let pts: Vec<Vector3<f64>> = corrs.iter().map(|c| c.object.coords).collect();
    let c0 = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        cov += (p - c0) * (p - c0).transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let axes: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    if lam[0] <= 1e-18 || lam[1] <= 1e-10 * lam[0] {
        return Err(CorrespondenceError::Degenerate("object points are collinear".into()));
    }
    let planar = lam[2] <= 1e-8 * lam[0];
    let naxes = if planar { 2 } else { 3 };
    let mut ctrl = vec![c0];
    for k in 0..naxes {
        ctrl.push(c0 + axes[k] * lam[k].sqrt());
    }
    let alphas: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let mut a = vec![0.0; naxes + 1];
            for k in 0..naxes {
                a[k + 1] = axes[k].dot(&(p - c0)) / lam[k].sqrt();
            }
            a[0] = 1.0 - a[1..].iter().sum::<f64>();
            a
        })
        .collect();
    let nc = naxes + 1;
    let mut m = DMatrix::<f64>::zeros(2 * n, 3 * nc);
    for (i, c) in corrs.iter().enumerate() {
        let u = (c.pixel[0] - camera.principal[0]) / camera.focal;
        let v = (c.pixel[1] - camera.principal[1]) / camera.focal;
        for j in 0..nc {
            let a = alphas[i][j];
            m[(2 * i, 3 * j)] = a;
            m[(2 * i, 3 * j + 2)] = -a * u;
            m[(2 * i + 1, 3 * j + 1)] = a;
            m[(2 * i + 1, 3 * j + 2)] = -a * v;
        }
    }
    let mtm = SymmetricEigen::new(m.transpose() * &m);
    let mut idx: Vec<usize> = (0..3 * nc).collect();
    idx.sort_by(|&a, &b| mtm.eigenvalues[a].total_cmp(&mtm.eigenvalues[b]));
    let kernel: Vec<DVector<f64>> = idx.iter().take(3).map(|&i| mtm.eigenvectors.column(i).into_owned()).collect();
    let solver = Epnp { alphas, ctrl, kernel };
    let max_dim = if planar { 2 } else { 3 };
    let mut best: Option<(f64, Pose6DoF)> = None;
    for dim in 1..=max_dim {
        let Some(betas) = solver.init_betas(dim) else { continue };
        let betas = solver.refine_betas(betas);
        let cam_pts = solver.camera_points(&betas);
        if cam_pts.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            continue;
        }
        let (r, t) = align_rigid(&pts, &cam_pts);
        let rot = UnitQuaternion::from_matrix(&r);
        let pose = Pose6DoF::from_rotation_translation(rot, t);
        let err = mean_reprojection_error(&pose, corrs, camera);
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| CorrespondenceError::Degenerate("EPnP found no valid solution".into()))
}

fn residuals(pose: &Pose6DoF, corrs: &[Correspondence3D2D], camera: &Camera) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = corrs.len();
    let f = camera.focal;
    let mut r = DVector::zeros(2 * n);
    let mut j = DMatrix::zeros(2 * n, 6);
    for (i, c) in corrs.iter().enumerate() {
        let q = pose.rotation() * c.object.coords * pose.scale();
        let x = q + pose.translation();
        if x.z <= 1e-9 {
            return None;
        }
        r[2 * i] = f * x.x / x.z + camera.principal[0] - c.pixel[0];
        r[2 * i + 1] = f * x.y / x.z + camera.principal[1] - c.pixel[1];
        let du = Vector3::new(f / x.z, 0.0, -f * x.x / (x.z * x.z));
        let dv = Vector3::new(0.0, f / x.z, -f * x.y / (x.z * x.z));
        // d x / d ω = -[q]×
        let dw_u = q.cross(&du);
        let dw_v = q.cross(&dv);
        for k in 0..3 {
            j[(2 * i, k)] = dw_u[k];
            j[(2 * i + 1, k)] = dw_v[k];
            j[(2 * i, 3 + k)] = du[k];
            j[(2 * i + 1, 3 + k)] = dv[k];
        }
    }
    Some((r, j))
}

/// Levenberg–Marquardt on pixel reprojection error; only cost-decreasing steps are taken.
fn refine_lm(mut pose: Pose6DoF, corrs: &[Correspondence3D2D], camera: &Camera) -> (Pose6DoF, usize) {
    let Some((mut r, mut j)) = residuals(&pose, corrs, camera) else { return (pose, 0) };
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iters = 0;
    for _ in 0..100 {
        iters += 1;
        let jt = j.transpose();
        let h: Matrix6<f64> = (&jt * &j).fixed_view::<6, 6>(0, 0).into_owned();
        let g: Vector6<f64> = (&jt * &r).fixed_view::<6, 1>(0, 0).into_owned();
        let mut damped = h;
        for k in 0..6 {
            damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&(-g)) else { break };
        let candidate = pose.apply_increment(step.as_slice());
        match residuals(&candidate, corrs, camera) {
            Some((r2, j2)) if r2.norm_squared() < cost => {
                let gain = cost - r2.norm_squared();
                pose = candidate;
                cost = r2.norm_squared();
                r = r2;
                j = j2;
                lambda = (lambda * 0.1).max(1e-12);
                if step.norm() < 1e-14 || gain < 1e-16 * cost.max(1e-300) {
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
            }
        }
    }
    (pose, iters)
}

/// Pose of the object in the camera frame from 2D-3D correspondences.
pub fn solve_pnp(corrs: &[Correspondence3D2D], camera: &Camera) -> Result<PnpSolution, CorrespondenceError> {
    if corrs.len() < 4 {
        return Err(CorrespondenceError::InsufficientData { needed: 4, got: corrs.len() });
    }
    if corrs.iter().any(|c| !c.object.iter().all(|v| v.is_finite()) || !c.pixel.iter().all(|v| v.is_finite())) {
        return Err(CorrespondenceError::Degenerate("non-finite correspondence".into()));
    }
    let init = epnp(corrs, camera)?;
    let initial_error = mean_reprojection_error(&init, corrs, camera);
    let (pose, lm_iterations) = refine_lm(init, corrs, camera);
    let reprojection_error = mean_reprojection_error(&pose, corrs, camera);
    Ok(PnpSolution { pose, reprojection_error, initial_error, lm_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn project(pose: &Pose6DoF, cam: &Camera, p: &Point3<f64>) -> [f64; 2] {
        cam.project(&pose.transform_point(p)).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6DoF {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let rot = UnitQuaternion::from_scaled_axis(axis.normalize() * rng.random_range(0.0..3.0));
        let t = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(1.5..4.0));
        Pose6DoF::from_rotation_translation(rot, t)
    }

    fn check(planar: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = Camera::reference();
        let pose = random_pose(&mut rng);
        let corrs: Vec<_> = (0..8)
            .map(|_| {
                let z = if planar { 0.0 } else { rng.random_range(-0.2..0.2) };
                let p = Point3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), z);
                Correspondence3D2D { object: p, pixel: project(&pose, &cam, &p) }
            })
            .collect();
        let sol = solve_pnp(&corrs, &cam).unwrap();
        let rot_deg = sol.pose.rotation_error(&pose).to_degrees();
        let terr = sol.pose.translation_error(&pose);
        assert!(rot_deg < 0.01 && terr < 1e-4, "seed {seed}: {rot_deg}° {terr} m");
        assert!(sol.reprojection_error <= sol.initial_error + 1e-12);
    }

    #[test]
    fn noiseless_general_points() {
        for seed in 0..20 {
            check(false, seed);
        }
    }

    #[test]
    fn noiseless_coplanar_points() {
        for seed in 100..120 {
            check(true, seed);
        }
    }

    #[test]
    fn noisy_points_reduce_error_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cam = Camera::desk();
        let pose = random_pose(&mut rng);
        let corrs: Vec<_> = (0..60)
            .map(|_| {
                let p = Point3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
                let [u, v] = project(&pose, &cam, &p);
                Correspondence3D2D { object: p, pixel: [u + rng.random_range(-0.5..0.5), v + rng.random_range(-0.5..0.5)] }
            })
            .collect();
        let sol = solve_pnp(&corrs, &cam).unwrap();
        assert!(sol.reprojection_error <= sol.initial_error);
        assert!(sol.pose.rotation_error(&pose).to_degrees() < 3.0);
    }

    #[test]
    fn too_few_or_collinear_points_fail() {
        let cam = Camera::reference();
        let pose = Pose6DoF::new([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0], 1.0).unwrap();
        let mk = |p: Point3<f64>| Correspondence3D2D { object: p, pixel: project(&pose, &cam, &p) };
        let three: Vec<_> = (0..3).map(|i| mk(Point3::new(i as f64 * 0.1, 0.05 * i as f64, 0.0))).collect();
        assert!(matches!(solve_pnp(&three, &cam), Err(CorrespondenceError::InsufficientData { .. })));
        let line: Vec<_> = (0..6).map(|i| mk(Point3::new(i as f64 * 0.1, 0.0, 0.0))).collect();
        assert!(matches!(solve_pnp(&line, &cam), Err(CorrespondenceError::Degenerate(_))));
    }

    #[test]
    fn rigid_alignment_recovers_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&mut rng);
        let p: Vec<Vector3<f64>> = (0..10)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let q: Vec<Vector3<f64>> = p.iter().map(|v| pose.transform_point(&Point3::from(*v)).coords).collect();
        let (r, t) = align_rigid(&p, &q);
        assert!((r - pose.rotation().to_rotation_matrix().into_inner()).amax() < 1e-12);
        assert!((t - pose.translation()).amax() < 1e-12);
    }
}
