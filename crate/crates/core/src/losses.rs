//! Refinement objectives: silhouettes, scale-shift-invariant depth, a metric
//! depth anchor to the human, hand contact and human-object penetration.
//!
//! Image terms are pixel means so the weights do not depend on resolution.
//! Every term is generic over [`Scalar`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_inside, mesh_triangles, min_distance, TriangleMesh, VertexSelection};
use crate::jet::{Scalar, V3};
use crate::render::{Grid, SoftLayers};

pub const DEPTH_EPS: f64 = 1e-8;
/// Width of the smoothed contact gate, meters.
pub const CONTACT_GATE_WIDTH: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("image dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("empty region: {0}")]
    EmptyRegion(&'static str),
    #[error("stage {stage} needs {input}")]
    MissingInput { stage: u8, input: &'static str },
    #[error("invalid stage {0}")]
    InvalidStage(u8),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_sil: f64,
    pub w_depth_rel: f64,
    pub w_depth_abs: f64,
    pub w_contact: f64,
    pub w_penetration: f64,
    pub theta_contact: f64,
    /// Mask confidence applied to the object-only terms.
    pub lambda_object: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_sil: 100.0,
            w_depth_rel: 0.5,
            w_depth_abs: 0.1,
            w_contact: 1.0,
            w_penetration: 100.0,
            theta_contact: 0.1,
            lambda_object: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let ws = [self.w_sil, self.w_depth_rel, self.w_depth_abs, self.w_contact, self.w_penetration];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LossError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if !(self.theta_contact.is_finite() && self.theta_contact > 0.0) {
            return Err(LossError::InvalidWeights(format!("theta_contact {}", self.theta_contact)));
        }
        if !(0.0..=1.0).contains(&self.lambda_object) {
            return Err(LossError::InvalidWeights(format!("lambda_object {}", self.lambda_object)));
        }
        Ok(())
    }
}

/// Which hands must touch the object, and their palm vertices on the human mesh.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ContactSpec {
    pub left_hand: bool,
    pub right_hand: bool,
    pub palm_left: VertexSelection,
    pub palm_right: VertexSelection,
}

fn check_dims<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<(), LossError> {
    a.same_shape(b).map_err(|e| LossError::DimensionMismatch(e.to_string()))
}

fn mean_abs_diff<T: Scalar>(a: &Grid<T>, b: &Grid<f64>, skip: Option<&[bool]>) -> T {
    let mut acc = T::cst(0.0);
    let mut n = 0usize;
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        if skip.is_some_and(|s| s[i]) {
            continue;
        }
        acc += (*x - T::cst(*y)).abs();
        n += 1;
    }
    if n == 0 {
        acc
    } else {
        acc.scale(1.0 / n as f64)
    }
}

/// `mean |S − Ŝ| + λ · mean |S_o − Ŝ_o|`.
pub fn silhouette_loss<T: Scalar>(
    s: &Grid<T>,
    s_hat: &Grid<f64>,
    s_o: &Grid<T>,
    s_o_hat: &Grid<f64>,
    lambda_object: f64,
) -> Result<T, LossError> {
    silhouette_loss_masked(s, s_hat, s_o, s_o_hat, lambda_object, None)
}

/// As [`silhouette_loss`], with the object term skipping pixels flagged in
/// `object_ignore` (where the observed object may be hidden by the human).
pub fn silhouette_loss_masked<T: Scalar>(
    s: &Grid<T>,
    s_hat: &Grid<f64>,
    s_o: &Grid<T>,
    s_o_hat: &Grid<f64>,
    lambda_object: f64,
    object_ignore: Option<&[bool]>,
) -> Result<T, LossError> {
    check_dims(s, s_hat)?;
    check_dims(s_o, s_o_hat)?;
    check_dims(s, s_o)?;
    if let Some(m) = object_ignore {
        if m.len() != s.len() {
            return Err(LossError::DimensionMismatch("ignore mask".into()));
        }
    }
    let full = mean_abs_diff(s, s_hat, None);
    if lambda_object == 0.0 {
        return Ok(full);
    }
    Ok(full + mean_abs_diff(s_o, s_o_hat, object_ignore).scale(lambda_object))
}

/// Median, averaging the two middle values for even counts.
fn median<T: Scalar>(values: &[T]) -> T {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].value().total_cmp(&values[b].value()));
    let n = values.len();
    if n % 2 == 1 {
        values[idx[n / 2]]
    } else {
        (values[idx[n / 2 - 1]] + values[idx[n / 2]]).scale(0.5)
    }
}

/// Scale-shift normalization `(d − median) / max(mean |d − median|, ε)`.
pub fn normalize_values<T: Scalar>(values: &[T]) -> Result<Vec<T>, LossError> {
    if values.is_empty() {
        return Err(LossError::EmptyRegion("depth normalization"));
    }
    let m = median(values);
    let centered: Vec<T> = values.iter().map(|v| *v - m).collect();
    let mut mad = T::cst(0.0);
    for c in &centered {
        mad += c.abs();
    }
    let mad = mad.scale(1.0 / values.len() as f64);
    let denom = if mad.value() > DEPTH_EPS { mad.recip() } else { T::cst(1.0 / DEPTH_EPS) };
    Ok(centered.into_iter().map(|c| c * denom).collect())
}

/// Normalized depth over the pixels where `region` is set, in row-major order.
pub fn normalize_depth<T: Scalar>(depth: &Grid<T>, region: &[bool]) -> Result<Vec<T>, LossError> {
    if region.len() != depth.len() {
        return Err(LossError::DimensionMismatch("depth region".into()));
    }
    let vals: Vec<T> = depth.data().iter().zip(region).filter(|(_, r)| **r).map(|(d, _)| *d).collect();
    normalize_values(&vals)
}

fn normalized_l1<T: Scalar>(d: &Grid<T>, target: &[f64], region: &[bool]) -> Result<T, LossError> {
    let nd = normalize_depth(d, region)?;
    let mut acc = T::cst(0.0);
    for (a, b) in nd.iter().zip(target) {
        acc += (*a - T::cst(*b)).abs();
    }
    Ok(acc.scale(1.0 / nd.len() as f64))
}

/// `mean_R |E*(D) − E*(D̂)| + λ · mean_{R_o} |E*(D) − E*(D̂)|`, where `R` is
/// the human-object region and `R_o` the object region.
pub fn relative_depth_loss<T: Scalar>(
    d: &Grid<T>,
    d_hat: &Grid<f64>,
    region: &[bool],
    object_region: &[bool],
    lambda_object: f64,
) -> Result<T, LossError> {
    check_dims(d, d_hat)?;
    let t = normalize_depth(d_hat, region)?;
    let full = normalized_l1(d, &t, region)?;
    if lambda_object == 0.0 {
        return Ok(full);
    }
    let to = normalize_depth(d_hat, object_region)?;
    Ok(full + normalized_l1(d, &to, object_region)?.scale(lambda_object))
}

/// `|mean_{R_o} D − D_h|`.
pub fn human_depth_anchor_loss<T: Scalar>(d: &Grid<T>, object_region: &[bool], human_depth: f64) -> Result<T, LossError> {
    if object_region.len() != d.len() {
        return Err(LossError::DimensionMismatch("object region".into()));
    }
    let mut acc = T::cst(0.0);
    let mut n = 0usize;
    for (v, r) in d.data().iter().zip(object_region) {
        if *r {
            acc += *v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(LossError::EmptyRegion("object depth"));
    }
    Ok((acc.scale(1.0 / n as f64) - T::cst(human_depth)).abs())
}

/// Mean depth of the human over the pixels it covers.
pub fn mean_human_depth(depth: &Grid<f64>, human_mask: &Grid<f64>) -> Result<f64, LossError> {
    check_dims(depth, human_mask)?;
    let vals: Vec<f64> = depth
        .data()
        .iter()
        .zip(human_mask.data())
        .filter(|(d, m)| **m > 0.5 && **d > 0.0)
        .map(|(d, _)| *d)
        .collect();
    if vals.is_empty() {
        return Err(LossError::EmptyRegion("human depth"));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// Step function, used for reporting.
    Hard,
    /// `sigmoid((θ − d) / 0.01)`, used for gradients.
    Smooth,
}

/// Triangles of the posed object as generic vertices.
pub fn posed_triangles<T: Scalar>(verts: &[V3<T>], triangles: &[[usize; 3]]) -> Vec<[V3<T>; 3]> {
    triangles.iter().map(|t| t.map(|i| verts[i])).collect()
}

/// `Σ_hands Σ_palm gate(θ − d) · d`, with `d` the unsigned distance from a
/// palm vertex to the posed object.
pub fn contact_loss<T: Scalar>(
    object_triangles: &[[V3<T>; 3]],
    human: &TriangleMesh,
    spec: &ContactSpec,
    theta: f64,
    gate: Gate,
) -> T {
    let mut acc = T::cst(0.0);
    let hands = [(spec.left_hand, &spec.palm_left), (spec.right_hand, &spec.palm_right)];
    for (flag, palm) in hands {
        if !flag {
            continue;
        }
        for &j in palm.indices() {
            let p = human.vertices()[j];
            let d = min_distance(V3::cst([p.x, p.y, p.z]), object_triangles);
            let g = match gate {
                Gate::Hard => {
                    if d.value() < theta {
                        T::cst(1.0)
                    } else {
                        T::cst(0.0)
                    }
                }
                Gate::Smooth => (T::cst(theta) - d).scale(1.0 / CONTACT_GATE_WIDTH).sigmoid(),
            };
            acc += g * d;
        }
    }
    acc
}

/// `Σ_i max(0, −sdf(p_i))` over object vertices against the human mesh.
/// Returns zero with a warning when the human mesh is not closed.
pub fn penetration_loss<T: Scalar>(object_vertices: &[V3<T>], human: &TriangleMesh) -> T {
    if !human.is_watertight() {
        log::warn!("human mesh is not watertight; penetration term disabled");
        return T::cst(0.0);
    }
    let tris = mesh_triangles::<T>(human);
    let mut acc = T::cst(0.0);
    for v in object_vertices {
        let [x, y, z] = v.value();
        if is_inside(&nalgebra::Point3::new(x, y, z), human) {
            acc += min_distance(*v, &tris);
        }
    }
    acc
}

/// Per-term values and the weighted stage total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    pub silhouette: T,
    pub depth_rel: T,
    pub depth_abs: T,
    pub contact: T,
    pub penetration: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn values(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            silhouette: self.silhouette.value(),
            depth_rel: self.depth_rel.value(),
            depth_abs: self.depth_abs.value(),
            contact: self.contact.value(),
            penetration: self.penetration.value(),
            total: self.total.value(),
        }
    }
}

impl LossBreakdown<f64> {
    /// Weighted total of the terms active in `stage`.
    pub fn weighted(&self, weights: &LossWeights, stage: u8) -> f64 {
        let mut t = weights.w_sil * self.silhouette;
        if stage >= 2 {
            t += weights.w_depth_rel * self.depth_rel + weights.w_depth_abs * self.depth_abs;
        }
        if stage >= 3 {
            t += weights.w_contact * self.contact + weights.w_penetration * self.penetration;
        }
        t
    }
}

/// Observations for the refinement objective.
#[derive(Clone, Copy, Debug)]
pub struct Observations<'a> {
    /// Human-object mask Ŝ.
    pub silhouette: &'a Grid<f64>,
    /// Object mask Ŝ_o.
    pub object_silhouette: &'a Grid<f64>,
    /// Relative depth D̂, `0` where unknown.
    pub depth: Option<&'a Grid<f64>>,
    /// Mean metric depth of the human, meters.
    pub human_depth: Option<f64>,
    pub human: Option<&'a TriangleMesh>,
    pub contact: Option<&'a ContactSpec>,
}

/// Observation-derived regions and normalized targets, computed once.
#[derive(Clone, Debug)]
pub struct PreparedObservations<'a> {
    pub obs: Observations<'a>,
    pub region: Vec<bool>,
    pub object_region: Vec<bool>,
    /// Pixels where the human is seen but the object is not.
    pub object_ignore: Vec<bool>,
    target_full: Option<Vec<f64>>,
    target_object: Option<Vec<f64>>,
}

impl<'a> PreparedObservations<'a> {
    pub fn new(obs: Observations<'a>) -> Result<Self, LossError> {
        check_dims(obs.silhouette, obs.object_silhouette)?;
        let s = obs.silhouette.data();
        let so = obs.object_silhouette.data();
        let object_ignore: Vec<bool> = s.iter().zip(so).map(|(a, b)| *a > 0.5 && *b <= 0.5).collect();
        let (region, object_region, target_full, target_object) = match obs.depth {
            Some(d) => {
                check_dims(obs.silhouette, d)?;
                let region: Vec<bool> = s.iter().zip(d.data()).map(|(m, v)| *m > 0.5 && *v > 0.0).collect();
                let object_region: Vec<bool> = so.iter().zip(d.data()).map(|(m, v)| *m > 0.5 && *v > 0.0).collect();
                let tf = normalize_depth(d, &region).ok();
                let to = normalize_depth(d, &object_region).ok();
                (region, object_region, tf, to)
            }
            None => {
                let object_region: Vec<bool> = so.iter().map(|m| *m > 0.5).collect();
                (vec![false; s.len()], object_region, None, None)
            }
        };
        Ok(Self { obs, region, object_region, object_ignore, target_full, target_object })
    }

    /// Checks that every input needed by `stage` is present.
    pub fn check_stage(&self, stage: u8) -> Result<(), LossError> {
        if !(1..=3).contains(&stage) {
            return Err(LossError::InvalidStage(stage));
        }
        if stage >= 2 {
            if self.obs.depth.is_none() {
                return Err(LossError::MissingInput { stage, input: "observed depth" });
            }
            if self.target_full.is_none() {
                return Err(LossError::EmptyRegion("human-object depth region"));
            }
            if self.target_object.is_none() {
                return Err(LossError::EmptyRegion("object depth region"));
            }
            if self.obs.human_depth.is_none() {
                return Err(LossError::MissingInput { stage, input: "human depth" });
            }
        }
        if stage >= 3 {
            if self.obs.human.is_none() {
                return Err(LossError::MissingInput { stage, input: "human mesh" });
            }
            if self.obs.contact.is_none() {
                return Err(LossError::MissingInput { stage, input: "contact spec" });
            }
        }
        Ok(())
    }

    /// Evaluates every term available up to `stage` and the weighted total.
    pub fn evaluate<T: Scalar>(
        &self,
        layers: &SoftLayers<T>,
        object_vertices: &[V3<T>],
        object_triangles: &[[usize; 3]],
        weights: &LossWeights,
        stage: u8,
        gate: Gate,
    ) -> Result<LossBreakdown<T>, LossError> {
        self.check_stage(stage)?;
        let zero = T::cst(0.0);
        let silhouette = silhouette_loss_masked(
            &layers.silhouette,
            self.obs.silhouette,
            &layers.object_silhouette,
            self.obs.object_silhouette,
            weights.lambda_object,
            Some(&self.object_ignore),
        )?;
        let mut total = silhouette.scale(weights.w_sil);
        let (mut depth_rel, mut depth_abs, mut contact, mut penetration) = (zero, zero, zero, zero);
        if stage >= 2 {
            let tf = self.target_full.as_ref().expect("checked");
            let to = self.target_object.as_ref().expect("checked");
            depth_rel = normalized_l1(&layers.depth, tf, &self.region)?;
            if weights.lambda_object != 0.0 {
                depth_rel += normalized_l1(&layers.depth, to, &self.object_region)?.scale(weights.lambda_object);
            }
            depth_abs = human_depth_anchor_loss(&layers.depth, &self.object_region, self.obs.human_depth.expect("checked"))?;
            total += depth_rel.scale(weights.w_depth_rel) + depth_abs.scale(weights.w_depth_abs);
        }
        if stage >= 3 {
            let human = self.obs.human.expect("checked");
            let tris = posed_triangles(object_vertices, object_triangles);
            contact = contact_loss(&tris, human, self.obs.contact.expect("checked"), weights.theta_contact, gate);
            penetration = penetration_loss(object_vertices, human);
            total += contact.scale(weights.w_contact) + penetration.scale(weights.w_penetration);
        }
        Ok(LossBreakdown { silhouette, depth_rel, depth_abs, contact, penetration, total })
    }
}

/// Weighted objective of `stage` for already rendered layers; depth and
/// contact inputs are ignored by earlier stages.
pub fn total_loss(
    layers: &SoftLayers<f64>,
    object_vertices: &[V3<f64>],
    object_triangles: &[[usize; 3]],
    obs: Observations<'_>,
    weights: &LossWeights,
    stage: u8,
) -> Result<LossBreakdown<f64>, LossError> {
    let prepared = PreparedObservations::new(obs)?;
    prepared.evaluate(layers, object_vertices, object_triangles, weights, stage, Gate::Hard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize, v: f64) -> Grid<f64> {
        Grid::filled(w, h, v)
    }

    #[test]
    fn silhouette_values() {
        let a = grid(4, 4, 0.3);
        assert_eq!(silhouette_loss(&a, &a, &a, &a, 0.8).unwrap(), 0.0);
        let ones = grid(4, 4, 1.0);
        let zeros = grid(4, 4, 0.0);
        assert!((silhouette_loss(&ones, &zeros, &a, &a, 0.8).unwrap() - 1.0).abs() < 1e-15);
        let b = grid(4, 4, 0.9);
        assert_eq!(silhouette_loss(&a, &a, &a, &b, 0.0).unwrap(), 0.0);
        assert!(silhouette_loss(&a, &grid(3, 4, 0.0), &a, &a, 1.0).is_err());
    }

    #[test]
    fn depth_normalization_of_small_set() {
        let v = normalize_values(&[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in v.iter().zip([-1.5, 0.0, 1.5]) {
            assert!((a - b).abs() < 1e-12, "{a}");
        }
    }

    #[test]
    fn depth_normalization_even_count_and_constant() {
        let v = normalize_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        // median 2.5, mean abs dev 1
        assert!((v[0] - 1.5).abs() < 1e-12 && (v[1] + 1.5).abs() < 1e-12);
        assert!(normalize_values(&[2.0; 5]).unwrap().iter().all(|x| *x == 0.0));
        assert!(normalize_values::<f64>(&[]).is_err());
    }

    #[test]
    fn depth_normalization_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(1..40);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
            let a = rng.random_range(0.1..10.0);
            let b = rng.random_range(-5.0..5.0);
            let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let nv = normalize_values(&v).unwrap();
            let nw = normalize_values(&w).unwrap();
            for (x, y) in nv.iter().zip(&nw) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relative_depth_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Grid::from_vec(5, 4, (0..20).map(|_| rng.random_range(1.0..3.0)).collect()).unwrap();
        let region = vec![true; 20];
        let obj: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let dh = d.map(|x| 2.0 * x + 0.7);
        assert!(relative_depth_loss(&d, &dh, &region, &obj, 1.0).unwrap() < 1e-6);
        let mut shifted = dh.clone();
        shifted.data_mut()[3] += 1.0;
        assert!(relative_depth_loss(&d, &shifted, &region, &obj, 0.0).unwrap() > 0.0);
        let single = relative_depth_loss(&d, &shifted, &region, &region, 0.0).unwrap();
        let both = relative_depth_loss(&d, &shifted, &region, &region, 1.0).unwrap();
        assert!((both - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn anchor_values() {
        let d = Grid::from_vec(2, 1, vec![2.6, 3.0]).unwrap();
        let r = [true, true];
        assert!((human_depth_anchor_loss(&d, &r, 2.5).unwrap() - 0.3).abs() < 1e-12);
        assert!(human_depth_anchor_loss(&d, &r, 2.8).unwrap().abs() < 1e-12);
        let flat = Grid::from_vec(2, 1, vec![2.8, 2.8]).unwrap();
        assert_eq!(human_depth_anchor_loss(&d, &r, 2.5).unwrap(), human_depth_anchor_loss(&flat, &r, 2.5).unwrap());
        assert!(human_depth_anchor_loss(&d, &[false, false], 2.5).is_err());
    }

    fn cube_tris(center: [f64; 3], half: f64) -> Vec<[V3<f64>; 3]> {
        mesh_triangles(&TriangleMesh::cuboid(center, [half; 3]))
    }

    fn human_with_palm(palm: Point3<f64>) -> (TriangleMesh, VertexSelection) {
        let body = TriangleMesh::cuboid([5.0, 5.0, 5.0], [0.1; 3]);
        let mut v = body.vertices().to_vec();
        v.push(palm);
        let mesh = TriangleMesh::new(v, body.triangles().to_vec()).unwrap();
        let sel = VertexSelection::new(vec![8], 9).unwrap();
        (mesh, sel)
    }

    #[test]
    fn contact_values() {
        let tris = cube_tris([0.0; 3], 0.5);
        let (human, sel) = human_with_palm(Point3::new(0.55, 0.0, 0.0));
        let spec = ContactSpec { left_hand: true, right_hand: false, palm_left: sel.clone(), palm_right: sel.clone() };
        assert!((contact_loss(&tris, &human, &spec, 0.1, Gate::Hard) - 0.05).abs() < 1e-12);
        let off = ContactSpec { left_hand: false, ..spec.clone() };
        assert_eq!(contact_loss(&tris, &human, &off, 0.1, Gate::Hard), 0.0);
        let (on_surface, sel) = human_with_palm(Point3::new(0.5, 0.1, 0.2));
        let spec2 = ContactSpec { left_hand: true, right_hand: true, palm_left: sel.clone(), palm_right: sel };
        assert!(contact_loss(&tris, &on_surface, &spec2, 0.1, Gate::Hard).abs() < 1e-12);
        let (far, sel) = human_with_palm(Point3::new(0.8, 0.0, 0.0));
        let spec3 = ContactSpec { left_hand: true, right_hand: false, palm_left: sel, palm_right: VertexSelection::empty() };
        assert_eq!(contact_loss(&tris, &far, &spec3, 0.1, Gate::Hard), 0.0);
        let smooth = contact_loss(&tris, &human, &spec, 0.1, Gate::Smooth);
        assert!(smooth > 0.049 && smooth < 0.05);
    }

    #[test]
    fn penetration_values() {
        let human = TriangleMesh::cuboid([0.0; 3], [0.5; 3]);
        assert_eq!(penetration_loss::<f64>(&[V3::cst([2.0, 0.0, 0.0])], &human), 0.0);
        let one: f64 = penetration_loss(&[V3::cst([0.48, 0.0, 0.0])], &human);
        assert!((one - 0.02).abs() < 1e-12);
        let two: f64 = penetration_loss(&[V3::cst([0.46, 0.0, 0.0])], &human);
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn penetration_is_symmetric_for_identical_meshes() {
        use crate::geometry::Pose6DoF;
        let verts = |m: &TriangleMesh| -> Vec<V3<f64>> { m.vertices().iter().map(|p| V3::cst([p.x, p.y, p.z])).collect() };
        let a = TriangleMesh::cuboid([0.0; 3], [0.3, 0.2, 0.1]);
        assert_eq!(penetration_loss(&verts(&a), &a), penetration_loss(&verts(&a), &a));
        let s = TriangleMesh::uv_sphere([0.0; 3], 0.3, 8, 16);
        let shift = Pose6DoF::new([1.0, 0.0, 0.0, 0.0], [0.1, 0.0, 0.0], 1.0).unwrap();
        let moved = s.transformed(&shift);
        let ab: f64 = penetration_loss(&verts(&s), &moved);
        let ba: f64 = penetration_loss(&verts(&moved), &s);
        assert!(ab > 0.0);
        assert!((ab - ba).abs() < 1e-9, "{ab} {ba}");
    }

    #[test]
    fn penetration_gradient_points_outward() {
        let human = TriangleMesh::cuboid([0.0; 3], [0.5; 3]);
        let v = V3::new(Jet::<3>::variable(0.48, 0), Jet::constant(0.0), Jet::constant(0.1));
        let p = penetration_loss(&[v], &human);
        // moving toward the nearest face reduces the depth
        assert!((p.d[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn stage_totals_and_requirements() {
        let s = grid(4, 4, 1.0);
        let so = grid(4, 4, 0.0);
        let layers = SoftLayers { silhouette: grid(4, 4, 0.5), object_silhouette: grid(4, 4, 0.0), depth: grid(4, 4, 2.0) };
        let w = LossWeights::default();
        let obs = Observations { silhouette: &s, object_silhouette: &so, depth: None, human_depth: None, human: None, contact: None };
        let b = total_loss(&layers, &[], &[], obs, &w, 1).unwrap();
        assert!((b.total - 50.0).abs() < 1e-12);
        assert!(matches!(total_loss(&layers, &[], &[], obs, &w, 2), Err(LossError::MissingInput { .. })));
        assert!(total_loss(&layers, &[], &[], obs, &w, 4).is_err());
    }

    #[test]
    fn stage_three_breakdown_sums_to_total() {
        let s = grid(4, 4, 1.0);
        let so = Grid::from_vec(4, 4, (0..16).map(|i| if i < 8 { 1.0 } else { 0.0 }).collect()).unwrap();
        let d = Grid::from_vec(4, 4, (0..16).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let human = TriangleMesh::cuboid([0.0, 0.0, 2.0], [0.2; 3]);
        let sel = VertexSelection::new(vec![0, 1], 8).unwrap();
        let contact = ContactSpec { left_hand: true, right_hand: false, palm_left: sel, palm_right: VertexSelection::empty() };
        let obj = TriangleMesh::cuboid([0.0, 0.0, 2.1], [0.15; 3]);
        let verts: Vec<V3<f64>> = obj.vertices().iter().map(|p| V3::cst([p.x, p.y, p.z])).collect();
        let layers = SoftLayers { silhouette: grid(4, 4, 0.9), object_silhouette: grid(4, 4, 0.4), depth: d.map(|x| x * x) };
        let obs = Observations {
            silhouette: &s,
            object_silhouette: &so,
            depth: Some(&d),
            human_depth: Some(2.2),
            human: Some(&human),
            contact: Some(&contact),
        };
        let w = LossWeights::default();
        let b = total_loss(&layers, &verts, obj.triangles(), obs, &w, 3).unwrap();
        let sum = w.w_sil * b.silhouette
            + w.w_depth_rel * b.depth_rel
            + w.w_depth_abs * b.depth_abs
            + w.w_contact * b.contact
            + w.w_penetration * b.penetration;
        assert!(b.penetration > 0.0);
        assert!((sum - b.total).abs() < 1e-9);
        assert!((b.weighted(&w, 3) - b.total).abs() < 1e-9);
    }
}
