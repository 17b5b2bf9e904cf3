//! RRT-based sampling of the standardized design space with FP-reaching,
//! collision, and equilibrium acceptance.
//!
//! Proposals step from the nearest existing candidate toward a uniform
//! sample; each proposal must reach all three foundational poses through a
//! nonlinear program initialized at the nearest candidate's stored states,
//! then survive the statics and singularity checks. Accepted designs are
//! appended; the loop stops at the target count or when the moving-average
//! efficiency stays too low.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contact::{
    canonicalize_spin, contact_jacobian, contact_jacobian_condition, fp_rotation_axis, reach_fp_jacobian_reduced,
    reach_fp_residual, reach_fp_residual_reduced, residual_mm_norm, SystemState,
};
use crate::error::{FphandError, Result};
use crate::mechanics::{collision_jet, collision_values, equilibrium_both_directions, CollisionConfig, FrictionModel, TipForce};
use crate::model::{
    chart::capsule_domain,
    standardize, CostSelector, DesignBounds, DesignParams, FingerJoints, FpName, FpSpec, Template, ToolGeom,
    NUM_FINGERS,
};
use crate::solve::{solve_nlp, NlpFunctions, NlpOptions, NlpSolution, NlpStatus};

/// Everything held fixed across FP solves.
#[derive(Debug, Clone)]
pub struct FpSolveContext {
    pub tmpl: Template,
    pub tool: ToolGeom,
    pub bounds: DesignBounds,
    pub friction: FrictionModel,
    pub tip: TipForce,
    pub collision: CollisionConfig,
    /// Posture of fingers not assigned to a contact (carve's fourth finger).
    pub idle_joints: FingerJoints,
    /// u_f2 regularizer weight in the FP cost.
    pub lambda_abduction: f64,
    /// Contact-Jacobian condition-number guard.
    pub max_condition: f64,
    pub nlp: NlpOptions,
    pub specs: Vec<FpSpec>,
}

impl FpSolveContext {
    pub fn spec(&self, name: FpName) -> &FpSpec {
        self.specs.iter().find(|s| s.name == name).expect("spec for FP")
    }
}

/// Sampler parameters (standardized-space units).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub step_size: f64,
    pub min_candidate_dist: f64,
    pub target_candidates: usize,
    pub efficiency_threshold: f64,
    pub efficiency_window: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.02,
            min_candidate_dist: 0.015,
            target_candidates: 100,
            efficiency_threshold: 0.01,
            efficiency_window: 500,
            rng_seed: 7,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0)
            || !(self.min_candidate_dist > 0.0 && self.min_candidate_dist <= self.step_size)
            || !(self.efficiency_threshold > 0.0 && self.efficiency_threshold < 1.0)
            || self.efficiency_window == 0
            || self.target_candidates == 0
        {
            return Err(FphandError::Config(
                "sampler needs 0 < min_candidate_dist <= step_size, 0 < efficiency_threshold < 1, nonzero window/target"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One solved foundational pose of a candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpSolved {
    pub fp: FpName,
    pub state: SystemState,
    pub cost: f64,
}

/// An accepted design with its solved per-FP states and sampling metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: usize,
    pub design: DesignParams,
    /// Index of the nearest candidate whose states initialized the solve.
    pub parent: usize,
    /// RRT call index at which this candidate was accepted (0 = seed).
    pub rrt_call: usize,
    pub states: Vec<FpSolved>,
}

impl CandidateRecord {
    pub fn state_for(&self, fp: FpName) -> Option<&FpSolved> {
        self.states.iter().find(|s| s.fp == fp)
    }
}

/// Why a proposal was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    TooClose,
    NlpFailed(FpName),
    ResidualCheck(FpName),
    Collision(FpName),
    Equilibrium(FpName),
    Singularity(FpName),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::TooClose => write!(f, "too close to an existing candidate"),
            RejectReason::NlpFailed(fp) => write!(f, "{fp}: NLP did not converge"),
            RejectReason::ResidualCheck(fp) => write!(f, "{fp}: residual re-check failed"),
            RejectReason::Collision(fp) => write!(f, "{fp}: collision clearance violated"),
            RejectReason::Equilibrium(fp) => write!(f, "{fp}: static equilibrium infeasible"),
            RejectReason::Singularity(fp) => write!(f, "{fp}: contact Jacobian near-singular"),
        }
    }
}

/// FP-specific sampling cost at a state. The carve variant projects the
/// inward contact normals onto the tip's cut tangent derived from the
/// state's own rotation axis.
pub fn fp_cost(ctx: &FpSolveContext, fp: &FpSpec, d: &DesignParams, state: &SystemState) -> Result<f64> {
    let tangent = match fp.cost {
        CostSelector::CarveMoment => {
            let axis = fp_rotation_axis(&ctx.tmpl, d, fp, &ctx.tool, state)?;
            Some(axis.tip_tangent(&ctx.tool)?)
        }
        CostSelector::PinchAlignment => None,
    };
    fp_cost_with_tangent(ctx, fp, d, state, tangent.as_ref())
}

/// Cost with an externally supplied cut tangent (the FP solver lags the
/// tangent at the initial state so the objective stays smooth).
pub fn fp_cost_with_tangent(
    ctx: &FpSolveContext,
    fp: &FpSpec,
    d: &DesignParams,
    state: &SystemState,
    tangent: Option<&nalgebra::Vector3<f64>>,
) -> Result<f64> {
    let asm = crate::contact::assemble_all(&ctx.tmpl, d, &ctx.tool, state)?;
    let mut reg = 0.0;
    for c in &state.contacts {
        let u2 = c.finger_joints.mcp_abduction;
        reg += u2 * u2;
    }
    reg *= ctx.lambda_abduction;
    match fp.cost {
        CostSelector::CarveMoment => {
            let tangent = tangent.ok_or_else(|| FphandError::Solver("carve cost needs a cut tangent".into()))?;
            let mut mean = 0.0;
            for a in &asm {
                mean += a.tool_frame.column(2).dot(tangent);
            }
            mean /= asm.len() as f64;
            Ok(-mean + reg)
        }
        CostSelector::PinchAlignment => {
            let s = &fp.stationary_contacts;
            let z1 = asm[s[0]].finger_frame.column(2);
            let z2 = asm[s[1]].finger_frame.column(2);
            Ok(z1.dot(&z2) + reg)
        }
    }
}

/// Bounds with the design-dependent fingertip chart domain (and the tool's
/// axial extent) intersected in.
pub fn effective_bounds(fp: &FpSpec, d: &DesignParams, tool: &ToolGeom) -> (DVector<f64>, DVector<f64>) {
    let n = fp.n_contacts();
    let mut lo = DVector::from_row_slice(&fp.bounds.lo);
    let mut hi = DVector::from_row_slice(&fp.bounds.hi);
    let pole_margin = 2.0 * crate::contact::POLE_MARGIN_FACTOR * d.finger_radius;
    let domain_hi = capsule_domain(d.finger_radius, d.distal_body_len()) - pole_margin;
    for c in 0..n {
        let k = 6 + 3 * n + 5 * c + 3; // a_f1
        lo[k] = lo[k].max(0.0);
        hi[k] = hi[k].min(domain_hi);
    }
    for c in 0..n {
        let k = 6 + 3 * c + 1; // a_t1
        lo[k] = lo[k].max(0.0);
        hi[k] = hi[k].min(tool.length);
    }
    (lo, hi)
}

/// Joint array for collision checks: contacting fingers take their state
/// joints, idle fingers the configured parked posture.
pub fn full_joints(fp: &FpSpec, state: &SystemState, idle: FingerJoints) -> [FingerJoints; NUM_FINGERS] {
    let mut joints = [idle; NUM_FINGERS];
    for (c, pair) in state.contacts.iter().enumerate() {
        joints[fp.contact_fingers[c]] = pair.finger_joints;
    }
    joints
}

struct ReachNlp<'a> {
    ctx: &'a FpSolveContext,
    fp: &'a FpSpec,
    d: &'a DesignParams,
    template_state: &'a SystemState,
    n_collision: usize,
    /// Cut tangent frozen at the initial state (carve only).
    cut_tangent: Option<nalgebra::Vector3<f64>>,
    /// Initial point for the proximal term.
    x0: DVector<f64>,
}

/// Weight of the proximal anchor added to the FP cost inside the solver.
/// Small enough to leave the pose costs untouched, large enough to give the
/// otherwise indifferent coordinates definite curvature.
const PROXIMAL_WEIGHT: f64 = 3e-4;

impl<'a> ReachNlp<'a> {
    fn state_of(&self, x: &[f64]) -> Result<SystemState> {
        self.template_state.with_vector(&DVector::from_row_slice(x))
    }
}

impl<'a> NlpFunctions for ReachNlp<'a> {
    fn dim(&self) -> usize {
        self.fp.state_dim()
    }

    fn n_eq(&self) -> usize {
        5 * self.fp.n_contacts()
    }

    fn n_ineq(&self) -> usize {
        self.n_collision
    }

    fn cost(&self, x: &[f64]) -> Result<f64> {
        let state = self.state_of(x)?;
        let base = fp_cost_with_tangent(self.ctx, self.fp, self.d, &state, self.cut_tangent.as_ref())?;
        let scale = self.step_scale().expect("reach nlp always scales");
        let mut prox = 0.0;
        for (k, &v) in x.iter().enumerate() {
            let z = (v - self.x0[k]) / scale[k];
            prox += z * z;
        }
        Ok(base + PROXIMAL_WEIGHT * prox)
    }

    fn hessian_init(&self) -> Option<DVector<f64>> {
        // per-variable curvature scale: gentle on mm coordinates, stiffer on
        // angular ones (costs are O(1) in the angular variables)
        let n = self.fp.n_contacts();
        let mut diag = DVector::from_element(self.dim(), 0.3);
        for k in 0..3 {
            diag[k] = 1e-3; // hand translation, mm
        }
        for c in 0..n {
            diag[6 + 3 * c + 1] = 1e-3; // a_t1, mm
            diag[6 + 3 * n + 5 * c + 3] = 1e-3; // a_f1, mm
        }
        Some(diag)
    }

    fn step_scale(&self) -> Option<DVector<f64>> {
        let n = self.fp.n_contacts();
        let mut s = DVector::from_element(self.dim(), 0.2);
        for k in 0..3 {
            s[k] = 8.0;
        }
        for c in 0..n {
            s[6 + 3 * c + 1] = 8.0;
            s[6 + 3 * n + 5 * c + 3] = 8.0;
        }
        Some(s)
    }

    fn eq_constraints(&self, x: &[f64]) -> Result<DVector<f64>> {
        let state = self.state_of(x)?;
        reach_fp_residual_reduced(&self.ctx.tmpl, self.d, self.fp, &self.ctx.tool, &state)
    }

    fn eq_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let state = self.state_of(x)?;
        reach_fp_jacobian_reduced(&self.ctx.tmpl, self.d, self.fp, &self.ctx.tool, &state)
    }

    fn ineq_constraints(&self, x: &[f64]) -> Result<DVector<f64>> {
        let state = self.state_of(x)?;
        let joints = full_joints(self.fp, &state, self.ctx.idle_joints);
        let vals = collision_values(
            &self.ctx.tmpl,
            self.d,
            self.fp,
            &self.ctx.tool,
            &state.hand_pose,
            &joints,
            self.ctx.collision.margin,
        );
        Ok(DVector::from_vec(vals))
    }

    fn ineq_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let state = self.state_of(x)?;
        let joints = full_joints(self.fp, &state, self.ctx.idle_joints);
        let jet = collision_jet(
            &self.ctx.tmpl,
            self.d,
            self.fp,
            &self.ctx.tool,
            &state.hand_pose,
            &joints,
            self.ctx.collision.margin,
        );
        // expand (6 + 3 per contact) columns into the full state layout
        let n = self.fp.n_contacts();
        let rows = jet.grads.nrows();
        let mut out = DMatrix::zeros(rows, self.dim());
        for r in 0..rows {
            for k in 0..6 {
                out[(r, k)] = jet.grads[(r, k)];
            }
            for c in 0..n {
                for k in 0..3 {
                    out[(r, 6 + 3 * n + 5 * c + k)] = jet.grads[(r, 6 + 3 * c + k)];
                }
            }
        }
        Ok(out)
    }
}

fn failed_solution(init: &SystemState) -> NlpSolution {
    NlpSolution {
        status: NlpStatus::EvalError,
        x: init.to_vector(),
        cost: f64::NAN,
        constraint_violation: f64::NAN,
        iterations: 0,
    }
}

/// Solve one FP for a design, initialized at `init` (clamped into bounds).
pub fn solve_fp(
    ctx: &FpSolveContext,
    fp: &FpSpec,
    d: &DesignParams,
    init: &SystemState,
) -> (NlpSolution, Option<FpSolved>) {
    let (lo, hi) = effective_bounds(fp, d, &ctx.tool);
    let joints = full_joints(fp, init, ctx.idle_joints);
    let n_collision = collision_values(
        &ctx.tmpl,
        d,
        fp,
        &ctx.tool,
        &init.hand_pose,
        &joints,
        ctx.collision.margin,
    )
    .len();
    let cut_tangent = match fp.cost {
        CostSelector::CarveMoment => match fp_rotation_axis(&ctx.tmpl, d, fp, &ctx.tool, init) {
            Ok(axis) => match axis.tip_tangent(&ctx.tool) {
                Ok(t) => Some(t),
                Err(_) => return (failed_solution(init), None),
            },
            Err(_) => return (failed_solution(init), None),
        },
        CostSelector::PinchAlignment => None,
    };
    let mut x0 = init.to_vector();
    for k in 0..x0.len() {
        x0[k] = x0[k].clamp(lo[k], hi[k]);
    }
    let nlp = ReachNlp {
        ctx,
        fp,
        d,
        template_state: init,
        n_collision,
        cut_tangent,
        x0: x0.clone(),
    };
    let sol = solve_nlp(&nlp, &x0, &lo, &hi, &ctx.nlp);
    // a feasible point that ran out of polish iterations is still a solved
    // FP; the cost only shapes the pose
    let feasible_enough = sol.constraint_violation.is_finite() && sol.constraint_violation <= ctx.nlp.tol_con;
    let usable = sol.status == NlpStatus::Converged
        || (feasible_enough && matches!(sol.status, NlpStatus::MaxIter | NlpStatus::LineSearchStall));
    if !usable {
        return (sol, None);
    }
    let mut state = match init.with_vector(&sol.x) {
        Ok(s) => s,
        Err(_) => return (sol, None),
    };
    for pair in state.contacts.iter_mut() {
        if canonicalize_spin(&ctx.tmpl, d, &ctx.tool, &state.hand_pose.clone(), pair).is_err() {
            return (sol, None);
        }
    }
    let cost = match fp_cost(ctx, fp, d, &state) {
        Ok(c) => c,
        Err(_) => return (sol, None),
    };
    let solved = FpSolved {
        fp: fp.name,
        state,
        cost,
    };
    (sol, Some(solved))
}

/// Acceptance checks on a solved FP state (residual, collision, statics,
/// singularity guard). Returns the first failed condition.
pub fn check_fp_acceptance(
    ctx: &FpSolveContext,
    fp: &FpSpec,
    d: &DesignParams,
    solved: &FpSolved,
) -> std::result::Result<(), RejectReason> {
    let state = &solved.state;
    let residual = match reach_fp_residual(&ctx.tmpl, d, fp, &ctx.tool, state) {
        Ok(r) => r,
        Err(_) => return Err(RejectReason::ResidualCheck(fp.name)),
    };
    if residual_mm_norm(&residual, &ctx.tool) > 100.0 * ctx.nlp.tol_con {
        return Err(RejectReason::ResidualCheck(fp.name));
    }
    let joints = full_joints(fp, state, ctx.idle_joints);
    let clearances = collision_values(
        &ctx.tmpl,
        d,
        fp,
        &ctx.tool,
        &state.hand_pose,
        &joints,
        ctx.collision.margin,
    );
    if clearances.iter().any(|&c| c < -1e-7) {
        return Err(RejectReason::Collision(fp.name));
    }
    let axis = match fp_rotation_axis(&ctx.tmpl, d, fp, &ctx.tool, state) {
        Ok(a) => a,
        Err(_) => return Err(RejectReason::Equilibrium(fp.name)),
    };
    match equilibrium_both_directions(&ctx.tmpl, d, fp, &ctx.tool, state, &axis, &ctx.tip, &ctx.friction) {
        Ok(true) => {}
        _ => return Err(RejectReason::Equilibrium(fp.name)),
    }
    match contact_jacobian(&ctx.tmpl, d, fp, &ctx.tool, state, &axis) {
        Ok(j) => {
            // stationary pinch rows are structurally ~zero (the axis runs
            // through those contacts); the mechanism's conditioning lives in
            // the moving contacts' rows
            let moving = fp.moving_contacts();
            let mut jm = DMatrix::zeros(3 * moving.len(), j.ncols());
            for (slot, &c) in moving.iter().enumerate() {
                jm.view_mut((3 * slot, 0), (3, j.ncols()))
                    .copy_from(&j.view((3 * c, 0), (3, j.ncols())));
            }
            if contact_jacobian_condition(&jm) > ctx.max_condition {
                return Err(RejectReason::Singularity(fp.name));
            }
        }
        Err(_) => return Err(RejectReason::Singularity(fp.name)),
    }
    Ok(())
}

/// Attempt all FPs for a new design from the nearest candidate's states.
pub fn attempt_fps(
    ctx: &FpSolveContext,
    d_new: &DesignParams,
    init: &[FpSolved],
) -> std::result::Result<Vec<FpSolved>, RejectReason> {
    let mut out = Vec::with_capacity(ctx.specs.len());
    for spec in &ctx.specs {
        let start = init
            .iter()
            .find(|s| s.fp == spec.name)
            .ok_or(RejectReason::NlpFailed(spec.name))?;
        let (_, solved) = solve_fp(ctx, spec, d_new, &start.state);
        let solved = solved.ok_or(RejectReason::NlpFailed(spec.name))?;
        check_fp_acceptance(ctx, spec, d_new, &solved)?;
        out.push(solved);
    }
    Ok(out)
}

/// RRT proposal in standardized coordinates over the active dimensions.
/// Returns the proposal and the nearest candidate index.
pub fn rrt_propose<R: Rng>(
    standardized: &[[f64; 6]],
    active_dims: &[usize],
    step_size: f64,
    rng: &mut R,
) -> ([f64; 6], usize) {
    let mut q = standardized[0];
    for &k in active_dims {
        q[k] = rng.random_range(-0.5..0.5);
    }
    let dist2 = |a: &[f64; 6], b: &[f64; 6]| -> f64 {
        active_dims.iter().map(|&k| (a[k] - b[k]) * (a[k] - b[k])).sum()
    };
    let mut nearest = 0;
    let mut best = dist2(&q, &standardized[0]);
    for (i, s) in standardized.iter().enumerate().skip(1) {
        let d2 = dist2(&q, s);
        if d2 < best {
            best = d2;
            nearest = i;
        }
    }
    let dist = best.sqrt();
    let mut out = standardized[nearest];
    if dist <= step_size || dist < 1e-300 {
        out = q;
    } else {
        let f = step_size / dist;
        for &k in active_dims {
            out[k] += (q[k] - out[k]) * f;
        }
    }
    (out, nearest)
}

/// Per-call efficiency trace entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub call: usize,
    pub accepted: bool,
    pub moving_average: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    TargetReached,
    LowEfficiency,
}

#[derive(Debug, Clone)]
pub struct SamplingRun {
    pub candidates: Vec<CandidateRecord>,
    pub efficiency: Vec<EfficiencyPoint>,
    pub stop: StopReason,
    pub calls: usize,
    /// Rejection tally by reason.
    pub rejections: std::collections::BTreeMap<String, usize>,
}

/// The accept/reject loop. `seed` must already satisfy all acceptance
/// conditions (validate it first). `active_dims` selects 2D or 6D mode.
pub fn run_sampling(
    ctx: &FpSolveContext,
    cfg: &SamplerConfig,
    seed: CandidateRecord,
    active_dims: &[usize],
    mut progress: impl FnMut(usize, usize, f64),
) -> Result<SamplingRun> {
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    use rand::SeedableRng;

    let mut candidates = vec![seed];
    let mut standardized = vec![standardize(&candidates[0].design, &ctx.bounds)?];
    let mut rejections: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
    let mut efficiency = Vec::new();
    let mut window = std::collections::VecDeque::with_capacity(cfg.efficiency_window);
    let mut accepted_in_window = 0usize;
    let mut calls = 0usize;

    let stop = loop {
        if candidates.len() >= cfg.target_candidates {
            break StopReason::TargetReached;
        }
        calls += 1;
        let (proposal, nearest) = rrt_propose(&standardized, active_dims, cfg.step_size, &mut rng);

        let accepted = (|| {
            let min_d2 = standardized
                .iter()
                .map(|s| {
                    active_dims
                        .iter()
                        .map(|&k| (s[k] - proposal[k]) * (s[k] - proposal[k]))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            if min_d2.sqrt() < cfg.min_candidate_dist {
                return Err(RejectReason::TooClose);
            }
            let mut arr = crate::model::destandardize(&proposal, &ctx.bounds)
                .map_err(|_| RejectReason::TooClose)?
                .to_array();
            // frozen dimensions stay bit-identical to the seed design
            let seed_arr = candidates[0].design.to_array();
            for k in 0..6 {
                if !active_dims.contains(&k) {
                    arr[k] = seed_arr[k];
                }
            }
            let d_new = DesignParams::from_array(arr);
            if d_new.validate(&ctx.tmpl).is_err() {
                return Err(RejectReason::TooClose);
            }
            attempt_fps(ctx, &d_new, &candidates[nearest].states).map(|states| (d_new, states))
        })();

        let ok = accepted.is_ok();
        if let Err(ref reason) = accepted {
            *rejections.entry(reason.to_string()).or_insert(0) += 1;
        }
        if let Ok((d_new, states)) = accepted {
            let id = candidates.len();
            candidates.push(CandidateRecord {
                id,
                design: d_new,
                parent: nearest,
                rrt_call: calls,
                states,
            });
            standardized.push(proposal);
        }

        if window.len() == cfg.efficiency_window {
            if window.pop_front() == Some(true) {
                accepted_in_window -= 1;
            }
        }
        window.push_back(ok);
        if ok {
            accepted_in_window += 1;
        }
        let avg = accepted_in_window as f64 / window.len() as f64;
        efficiency.push(EfficiencyPoint {
            call: calls,
            accepted: ok,
            moving_average: avg,
        });
        progress(candidates.len(), calls, avg);

        if window.len() == cfg.efficiency_window && avg < cfg.efficiency_threshold {
            break StopReason::LowEfficiency;
        }
    };

    Ok(SamplingRun {
        candidates,
        efficiency,
        stop,
        calls,
        rejections,
    })
}

/// Unit d-ball volume for d = 1..=6.
pub fn unit_ball_volume(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        5 => 8.0 * PI * PI / 15.0,
        6 => PI.powi(3) / 6.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Fraction of the standardized design-space volume covered by balls of
/// radius half the minimum pairwise candidate distance (no overlap
/// correction).
pub fn coverage_estimate(standardized: &[[f64; 6]], active_dims: &[usize]) -> Result<f64> {
    if standardized.len() < 2 {
        return Err(FphandError::Config("coverage needs at least two candidates".into()));
    }
    let mut min_d2 = f64::INFINITY;
    for i in 0..standardized.len() {
        for j in i + 1..standardized.len() {
            let d2: f64 = active_dims
                .iter()
                .map(|&k| (standardized[i][k] - standardized[j][k]).powi(2))
                .sum();
            min_d2 = min_d2.min(d2);
        }
    }
    let r = 0.5 * min_d2.sqrt();
    Ok(coverage_from_radius(standardized.len(), r, active_dims.len()))
}

/// `N * V_ball(dim, r)` against the unit standardized volume.
pub fn coverage_from_radius(n: usize, r: f64, dim: usize) -> f64 {
    n as f64 * unit_ball_volume(dim) * r.powi(dim as i32)
}

/// Active design dimensions for the sampling modes.
pub fn mode_dims(two_d: bool) -> Vec<usize> {
    if two_d {
        vec![1, 2] // palm length d2, palm half-width d3
    } else {
        (0..6).collect()
    }
}
