//! Staged Adam refinement of the object pose.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Camera;
use crate::geometry::{Pose6DoF, TriangleMesh};
use crate::jet::{PoseJet, Scalar, POSE_DIM};
use crate::losses::{
    contact_loss, posed_triangles, Gate, LossBreakdown, LossError, LossWeights, Observations, PreparedObservations,
};
use crate::render::{posed_vertices, posed_vertices_jet, rasterize_static, render_layers, SoftParams, StaticLayer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSchedule {
    /// `(stage, iterations)` in execution order.
    pub stages: Vec<(u8, usize)>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Also optimize the log of the uniform scale.
    pub optimize_scale: bool,
}

impl Default for OptimizeSchedule {
    fn default() -> Self {
        Self {
            stages: vec![(1, 200), (2, 200), (3, 200)],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            optimize_scale: false,
        }
    }
}

impl OptimizeSchedule {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.stages.is_empty() {
            return Err(OptimizeError::InvalidSchedule("no stages".into()));
        }
        for &(s, n) in &self.stages {
            if !(1..=3).contains(&s) {
                return Err(OptimizeError::InvalidSchedule(format!("unknown stage {s}")));
            }
            if n == 0 {
                return Err(OptimizeError::InvalidSchedule(format!("stage {s} has no iterations")));
            }
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(OptimizeError::InvalidSchedule("betas must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return Err(OptimizeError::InvalidSchedule("learning rate and epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.1).sum()
    }

    fn adam(&self) -> AdamParams {
        AdamParams { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }
}

/// One bias-corrected Adam update of `params`. A non-finite gradient leaves
/// both parameters and state untouched and returns `false`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, p: &AdamParams) -> bool {
    assert_eq!(params.len(), grad.len(), "parameter and gradient sizes differ");
    assert_eq!(params.len(), state.m.len(), "state size differs");
    if grad.iter().any(|g| !g.is_finite()) {
        return false;
    }
    state.t += 1;
    let c1 = 1.0 - p.beta1.powi(state.t as i32);
    let c2 = 1.0 - p.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grad[i];
        state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= p.learning_rate * mh / (vh.sqrt() + p.epsilon);
    }
    true
}

/// Everything the refinement needs besides the pose: the template, camera,
/// prepared observations and the pre-rendered human layer.
pub struct RefineScene<'a> {
    pub object: &'a TriangleMesh,
    pub camera: Camera,
    pub soft: SoftParams,
    pub observations: PreparedObservations<'a>,
    background: Option<StaticLayer>,
}

impl<'a> RefineScene<'a> {
    pub fn new(
        object: &'a TriangleMesh,
        camera: Camera,
        soft: SoftParams,
        observations: Observations<'a>,
    ) -> Result<Self, OptimizeError> {
        let prepared = PreparedObservations::new(observations)?;
        let background = observations.human.map(|h| {
            let verts = posed_vertices(h, &Pose6DoF::identity());
            rasterize_static(&verts, h.triangles(), &camera, &soft)
        });
        Ok(Self { object, camera, soft, observations: prepared, background })
    }

    pub fn background(&self) -> Option<&StaticLayer> {
        self.background.as_ref()
    }

    /// Terms at `pose` with pose derivatives, evaluated up to `stage` with the
    /// smooth contact gate.
    pub fn evaluate_jet(
        &self,
        pose: &Pose6DoF,
        weights: &LossWeights,
        stage: u8,
    ) -> Result<LossBreakdown<PoseJet>, LossError> {
        let verts = posed_vertices_jet(self.object, pose);
        let layers = render_layers(&verts, self.object.triangles(), self.background(), &self.camera, &self.soft);
        self.observations.evaluate(&layers, &verts, self.object.triangles(), weights, stage, Gate::Smooth)
    }

    /// Reported terms at `pose`: hard contact gate, plain values.
    pub fn evaluate(&self, pose: &Pose6DoF, weights: &LossWeights, stage: u8) -> Result<LossBreakdown<f64>, LossError> {
        let verts = posed_vertices(self.object, pose);
        let layers = render_layers(&verts, self.object.triangles(), self.background(), &self.camera, &self.soft);
        self.observations.evaluate(&layers, &verts, self.object.triangles(), weights, stage, Gate::Hard)
    }

    fn hard_contact(&self, pose: &Pose6DoF, weights: &LossWeights) -> f64 {
        match (self.observations.obs.human, self.observations.obs.contact) {
            (Some(h), Some(c)) => {
                let verts = posed_vertices(self.object, pose);
                let tris = posed_triangles(&verts, self.object.triangles());
                contact_loss(&tris, h, c, weights.theta_contact, Gate::Hard)
            }
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub stage: u8,
    /// Reported terms (hard contact gate).
    pub terms: LossBreakdown<f64>,
    /// Weighted objective of the active stage.
    pub stage_total: f64,
    /// Weighted objective of the final stage, used to pick the best pose.
    pub objective: f64,
    pub step_skipped: bool,
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub pose: Pose6DoF,
    pub objective: f64,
    /// Iteration that produced `pose`; `None` for the initial pose, and
    /// `Some(total)` for the pose after the last step.
    pub best_iteration: Option<usize>,
    pub trace: Vec<TraceRow>,
    pub diverged: bool,
    pub skipped_steps: usize,
}

/// Runs the stages in order from `initial`, returning the pose with the
/// lowest final-stage objective among every iterate (including the initial
/// and last ones) and the per-iteration trace.
pub fn refine_pose(
    initial: &Pose6DoF,
    scene: &RefineScene<'_>,
    weights: &LossWeights,
    schedule: &OptimizeSchedule,
) -> Result<RefineResult, OptimizeError> {
    schedule.validate()?;
    weights.validate()?;
    let final_stage = schedule.stages.iter().map(|s| s.0).max().expect("non-empty");
    scene.observations.check_stage(final_stage)?;
    let adam = schedule.adam();
    let mut state = AdamState::new(POSE_DIM);
    let mut pose = *initial;
    let mut best: Option<(f64, Pose6DoF, Option<usize>)> = None;
    let mut trace = Vec::with_capacity(schedule.total_iterations());
    let mut diverged = false;
    let mut skipped = 0;
    let mut iteration = 0;
    'stages: for &(stage, iters) in &schedule.stages {
        state.reset();
        for _ in 0..iters {
            let b = scene.evaluate_jet(&pose, weights, final_stage)?;
            let mut terms = b.values();
            terms.contact = scene.hard_contact(&pose, weights);
            let objective = terms.weighted(weights, final_stage);
            terms.total = objective;
            let stage_total = terms.weighted(weights, stage);
            if !objective.is_finite() {
                diverged = true;
                trace.push(TraceRow { iteration, stage, terms, stage_total, objective, step_skipped: true });
                log::warn!("objective became non-finite at iteration {iteration}");
                break 'stages;
            }
            let label = if iteration == 0 { None } else { Some(iteration) };
            if best.as_ref().is_none_or(|(o, _, _)| objective < *o) {
                best = Some((objective, pose, label));
            }
            let grad_jet = stage_objective(&b, weights, stage);
            let mut grad = grad_jet.d;
            if !schedule.optimize_scale {
                grad[6] = 0.0;
            }
            let mut step = [0.0; POSE_DIM];
            let ok = adam_step(&mut step, &grad, &mut state, &adam);
            if ok {
                pose = pose.apply_increment(&step);
            } else {
                skipped += 1;
            }
            trace.push(TraceRow { iteration, stage, terms, stage_total, objective, step_skipped: !ok });
            iteration += 1;
        }
    }
    if !diverged {
        let end = scene.evaluate(&pose, weights, final_stage)?.weighted(weights, final_stage);
        if end.is_finite() && best.as_ref().is_none_or(|(o, _, _)| end < *o) {
            best = Some((end, pose, Some(iteration)));
        }
    }
    let (objective, pose, best_iteration) = best.unwrap_or((f64::INFINITY, *initial, None));
    Ok(RefineResult { pose, objective, best_iteration, trace, diverged, skipped_steps: skipped })
}

fn stage_objective(b: &LossBreakdown<PoseJet>, w: &LossWeights, stage: u8) -> PoseJet {
    let mut t = b.silhouette.scale(w.w_sil);
    if stage >= 2 {
        t += b.depth_rel.scale(w.w_depth_rel) + b.depth_abs.scale(w.w_depth_abs);
    }
    if stage >= 3 {
        t += b.contact.scale(w.w_contact) + b.penetration.scale(w.w_penetration);
    }
    t
}

/// Trace as CSV: `iteration,stage,silhouette,depth_rel,depth_abs,contact,penetration,stage_total,total`.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,stage,silhouette,depth_rel,depth_abs,contact,penetration,stage_total,total\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.iteration,
            r.stage,
            r.terms.silhouette,
            r.terms.depth_rel,
            r.terms.depth_abs,
            r.terms.contact,
            r.terms.penetration,
            r.stage_total,
            r.objective
        ));
    }
    s
}
