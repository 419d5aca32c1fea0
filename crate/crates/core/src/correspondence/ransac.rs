//! Homography RANSAC over 2D-2D matches.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matching::Match2D;
use super::CorrespondenceError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub threshold_px: f64,
    pub iterations: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { threshold_px: 2.0, iterations: 1000 }
    }
}

/// Similarity that maps points to zero mean and mean distance √2.
fn normalizer(pts: &[[f64; 2]]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let md = pts.iter().map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if md > 0.0 { std::f64::consts::SQRT_2 / md } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(h: &Matrix3<f64>, p: [f64; 2]) -> Option<[f64; 2]> {
    let q = h * Vector3::new(p[0], p[1], 1.0);
    (q.z.abs() > 1e-12).then(|| [q.x / q.z, q.y / q.z])
}

/// Normalized DLT homography mapping `src` onto `dst` (at least 4 pairs).
pub fn fit_homography(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Option<Matrix3<f64>> {
    if src.len() < 4 || src.len() != dst.len() {
        return None;
    }
    let ts = normalizer(src);
    let td = normalizer(dst);
    let mut a = DMatrix::<f64>::zeros(2 * src.len(), 9);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let s = apply(&ts, *s)?;
        let d = apply(&td, *d)?;
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-s[0], -s[1], -1.0, 0.0, 0.0, 0.0, d[0] * s[0], d[0] * s[1], d[0]]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -s[0], -s[1], -1.0, d[1] * s[0], d[1] * s[1], d[1]]);
    }
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let k = eig.eigenvalues.imin();
    let h = eig.eigenvectors.column(k);
    let hn = Matrix3::from_row_slice(h.as_slice());
    let out = td.try_inverse()? * hn * ts;
    let scale = out[(2, 2)];
    if !out.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(if scale.abs() > 1e-12 { out / scale } else { out })
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    cross.abs() < 1e-6
}

/// Transfer error of `a ↦ b` under `h`.
pub fn transfer_error(h: &Matrix3<f64>, m: &Match2D) -> f64 {
    match apply(h, m.center_a()) {
        Some(p) => {
            let b = m.center_b();
            ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt()
        }
        None => f64::INFINITY,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub inliers: Vec<Match2D>,
    pub homography: Matrix3<f64>,
}

/// Keeps the matches consistent with the 4-point homography hypothesis that
/// has the most inliers. Deterministic for a given seed.
pub fn ransac_homography_filter(
    matches: &[Match2D],
    params: &RansacParams,
    seed: u64,
) -> Result<RansacResult, CorrespondenceError> {
    if matches.len() < 4 {
        return Err(CorrespondenceError::InsufficientData { needed: 4, got: matches.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    for _ in 0..params.iterations {
        let idx = rand::seq::index::sample(&mut rng, matches.len(), 4).into_vec();
        let src: Vec<[f64; 2]> = idx.iter().map(|&i| matches[i].center_a()).collect();
        let dst: Vec<[f64; 2]> = idx.iter().map(|&i| matches[i].center_b()).collect();
        let degenerate = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
            .iter()
            .any(|&(i, j, k)| collinear(src[i], src[j], src[k]) || collinear(dst[i], dst[j], dst[k]));
        if degenerate {
            continue;
        }
        let Some(h) = fit_homography(&src, &dst) else { continue };
        let count = matches.iter().filter(|m| transfer_error(&h, m) < params.threshold_px).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, h));
        }
    }
    let (_, h) = best.ok_or_else(|| CorrespondenceError::Degenerate("no non-degenerate sample".into()))?;
    let inliers = matches.iter().copied().filter(|m| transfer_error(&h, m) < params.threshold_px).collect();
    Ok(RansacResult { inliers, homography: h })
}
