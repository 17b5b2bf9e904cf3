//! Tool-wielding path planning from a foundational pose.
//!
//! The tool rotates at a prescribed constant rate about the FP's axis; the
//! hand counter-rotates in the tool frame. Each step solves a QP for the
//! moving fingers' joint rates that minimizes tangential contact sliding
//! subject to zero normal relative velocity, forward-Euler coordinate
//! bounds, and linearized collision clearances. Contact coordinates evolve
//! by first-order roll-slide kinematics and are integrated with RK4, then
//! projected back onto the contact manifold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::{
    assemble_all, canonicalize_spin, contact_evolution, fp_rotation_axis, project_contact, reach_fp_residual,
    reanchor_chart, relative_motion, residual_mm_norm, RotationAxis, SystemState,
};
use crate::error::{FphandError, Result};
use crate::geom::rotation_about_line;
use crate::mechanics::{collision_axis_rates, collision_jet, equilibrium_from_assembled, tip_force_world};
use crate::model::{DesignParams, FingerJoints, FpName, FpSpec, HandPose6D};
use crate::sampler::{effective_bounds, full_joints, FpSolveContext};
use crate::solve::{solve_qp_hinted, QpProblem, QpStatus};

/// Planner parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Prescribed tool rotation rate, rad/s.
    pub tool_rate: f64,
    /// Integration step, s.
    pub dt: f64,
    pub max_steps: usize,
    /// Rotation direction, +1 or -1.
    pub direction: i8,
    /// Constraint-stabilization gain (1/s) on the normal gap.
    pub stabilization_gain: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            tool_rate: 0.2,
            dt: 0.02,
            max_steps: 500,
            direction: 1,
            stabilization_gain: 50.0,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tool_rate > 0.0 && self.dt > 0.0) || self.max_steps == 0 || self.direction.abs() != 1 {
            return Err(FphandError::Config(
                "planner needs tool_rate > 0, dt > 0, max_steps > 0, direction +-1".into(),
            ));
        }
        Ok(())
    }

    pub fn signed_rate(&self) -> f64 {
        self.direction as f64 * self.tool_rate
    }
}

/// Why a path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    QpFailure,
    EquilibriumInfeasible,
    JointLimit,
    MaxSteps,
}

/// One recorded step along a path. The rates/sliding entries describe the
/// step taken FROM this state (empty on the terminal state).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathStep {
    pub phi: f64,
    pub state: SystemState,
    pub finger_rates: Vec<[f64; 3]>,
    pub sliding_speeds: Vec<f64>,
    pub equilibrium_ok: bool,
    pub residual: f64,
}

/// A time-discretized tool-wielding path in one direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub candidate: usize,
    pub fp: FpName,
    pub direction: i8,
    pub axis: RotationAxis,
    pub steps: Vec<PathStep>,
    pub termination: Termination,
    /// |phi| at the last recorded step.
    pub motion_range: f64,
}

/// Output of one planning QP.
#[derive(Debug, Clone)]
pub struct StepRates {
    /// Joint rates per moving contact, in contact order.
    pub finger_rates: Vec<[f64; 3]>,
    /// Tangential |v_CP| per contact, mm/s.
    pub sliding_speeds: Vec<f64>,
    pub objective: f64,
    pub active_set: Vec<usize>,
    /// True when a motion-range row is active at the solution.
    pub at_motion_bound: bool,
}

pub enum StepError {
    QpFailure,
    JointLimit,
}

/// Linear map from `[u_t_dot; u_f_dot(moving)]` to all coordinate rates
/// `(spin, a_t1, a_t2, a_f1, a_f2)` per contact, built column by column.
fn evolution_map(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
) -> Result<Vec<DMatrix<f64>>> {
    let moving = fp.moving_contacts();
    let ncols = 1 + 3 * moving.len();
    let n = fp.n_contacts();
    let mut maps = vec![DMatrix::zeros(5, ncols); n];
    for col in 0..ncols {
        let u_t = if col == 0 { 1.0 } else { 0.0 };
        let mut rates: Vec<[f64; 3]> = vec![[0.0; 3]; moving.len()];
        if col > 0 {
            rates[(col - 1) / 3][(col - 1) % 3] = 1.0;
        }
        let out = contact_evolution(&ctx.tmpl, d, fp, &ctx.tool, state, axis, u_t, &rates)?;
        for (c, r) in out.iter().enumerate() {
            maps[c][(0, col)] = r.tool[0];
            maps[c][(1, col)] = r.tool[1];
            maps[c][(2, col)] = r.tool[2];
            maps[c][(3, col)] = r.finger[0];
            maps[c][(4, col)] = r.finger[1];
        }
    }
    Ok(maps)
}

/// Minimum-sliding QP for the moving fingers' joint rates.
#[allow(clippy::too_many_arguments)]
pub fn plan_step(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
    cfg: &PlanConfig,
    warm: &[usize],
) -> std::result::Result<StepRates, StepError> {
    let residual = reach_fp_residual(&ctx.tmpl, d, fp, &ctx.tool, state).map_err(|_| StepError::QpFailure)?;
    if residual_mm_norm(&residual, &ctx.tool) > 1e-4 {
        return Err(StepError::QpFailure);
    }
    let asm = assemble_all(&ctx.tmpl, d, &ctx.tool, state).map_err(|_| StepError::QpFailure)?;
    let n = fp.n_contacts();
    let moving = fp.moving_contacts();
    let nv = 3 * moving.len();
    let u_t = cfg.signed_rate();

    // velocity map rows per contact in the contact frame
    let mut j_t = DMatrix::zeros(3 * n, 1);
    let mut j_f = DMatrix::zeros(3 * n, nv);
    for (c, a) in asm.iter().enumerate() {
        let rt = a.tool_frame.transpose();
        let v_tool = -axis.point_velocity(&a.finger_point);
        let col = rt * v_tool;
        for i in 0..3 {
            j_t[(3 * c + i, 0)] = col[i];
        }
        if let Some(slot) = moving.iter().position(|&m| m == c) {
            for k in 0..3 {
                let col = rt * a.finger_d[k].dp;
                for i in 0..3 {
                    j_f[(3 * c + i, 3 * slot + k)] = col[i];
                }
            }
        }
    }

    // objective: sum of squared tangential velocities
    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    for c in 0..n {
        for row in [3 * c, 3 * c + 1] {
            let jf = j_f.row(row);
            let jt = j_t[(row, 0)] * u_t;
            h += jf.transpose() * jf;
            g += jf.transpose() * jt;
        }
    }
    for k in 0..nv {
        h[(k, k)] += 1e-10;
    }

    // normal rows: E_z v = gain * gap (stabilized); rows with no variable
    // dependence must already be satisfied
    let mut eq_rows: Vec<DVector<f64>> = Vec::new();
    let mut eq_rhs: Vec<f64> = Vec::new();
    for (c, a) in asm.iter().enumerate() {
        let row = j_f.row(3 * c + 2).transpose();
        let gap = a.tool_frame.column(2).dot(&(a.tool_point - a.finger_point));
        let rhs = cfg.stabilization_gain * gap - j_t[(3 * c + 2, 0)] * u_t;
        if row.amax() < 1e-12 {
            // stationary contact: nobody can act on this row. The pinch
            // binds (terminate) once the demanded separation rate or the
            // accumulated gap grows past the path tolerance.
            if (j_t[(3 * c + 2, 0)] * u_t).abs() > 1e-4 || gap.abs() > 8e-6 {
                return Err(StepError::QpFailure);
            }
            continue;
        }
        eq_rows.push(row);
        eq_rhs.push(rhs);
    }

    // forward-Euler coordinate bounds
    let maps = evolution_map(ctx, d, fp, state, axis).map_err(|_| StepError::QpFailure)?;
    let (lo, hi) = effective_bounds(fp, d, &ctx.tool);
    let mut in_rows: Vec<DVector<f64>> = Vec::new();
    let mut in_rhs: Vec<f64> = Vec::new();
    let v = state.to_vector();
    // rows whose coefficients vanish (stationary-contact coordinates) carry
    // no decision: skip them unless the uncontrolled drift genuinely leaves
    // the box, which ends the path
    let mut uncontrolled_violation = false;
    let mut add_bound = |value: f64, l: f64, u: f64, rate_t: f64, rate_f: DVector<f64>, rows: &mut Vec<DVector<f64>>, rhs: &mut Vec<f64>| {
        // value + dt*(rate_t*u_t + rate_f.u_f) within [l, u]
        let base = value + cfg.dt * rate_t * u_t;
        if rate_f.amax() < 1e-12 {
            if (u.is_finite() && base > u + 0.01) || (l.is_finite() && base < l - 0.01) {
                uncontrolled_violation = true;
            }
            return;
        }
        if u.is_finite() {
            rows.push(-cfg.dt * &rate_f);
            rhs.push(base - u);
        }
        if l.is_finite() {
            rows.push(cfg.dt * rate_f);
            rhs.push(l - base);
        }
    };
    for c in 0..n {
        for k in 0..5 {
            let idx = match k {
                0 => 6 + 3 * c,     // spin
                1 => 6 + 3 * c + 1, // a_t1
                2 => 6 + 3 * c + 2, // a_t2
                3 => 6 + 3 * n + 5 * c + 3,
                _ => 6 + 3 * n + 5 * c + 4,
            };
            let rate_t = maps[c][(k, 0)];
            let rate_f = maps[c].row(k).columns(1, nv).transpose().into_owned();
            add_bound(v[idx], lo[idx], hi[idx], rate_t, rate_f, &mut in_rows, &mut in_rhs);
        }
    }
    for (slot, &mc) in moving.iter().enumerate() {
        for k in 0..3 {
            let idx = 6 + 3 * n + 5 * mc + k;
            let mut rate_f = DVector::zeros(nv);
            rate_f[3 * slot + k] = 1.0;
            add_bound(v[idx], lo[idx], hi[idx], 0.0, rate_f, &mut in_rows, &mut in_rhs);
        }
    }
    if uncontrolled_violation {
        return Err(StepError::JointLimit);
    }
    let n_motion_rows = in_rows.len();

    // linearized collision clearances
    let joints = full_joints(fp, state, ctx.idle_joints);
    let jet = collision_jet(&ctx.tmpl, d, fp, &ctx.tool, &state.hand_pose, &joints, ctx.collision.margin);
    let axis_rates = collision_axis_rates(&ctx.tmpl, d, fp, &ctx.tool, &state.hand_pose, &joints, axis);
    for (r, &val) in jet.values.iter().enumerate() {
        let mut row = DVector::zeros(nv);
        for (slot, &mc) in moving.iter().enumerate() {
            for k in 0..3 {
                row[3 * slot + k] = cfg.dt * jet.grads[(r, 6 + 3 * mc + k)];
            }
        }
        let rhs = -(val + cfg.dt * axis_rates[r] * u_t);
        if row.amax() < 1e-14 && rhs > 0.0 {
            return Err(StepError::QpFailure); // unavoidable collision
        }
        in_rows.push(row);
        in_rhs.push(rhs);
    }

    let mut qp = QpProblem::new(h, g);
    qp.a_eq = DMatrix::from_rows(&eq_rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    qp.b_eq = DVector::from_vec(eq_rhs);
    if !in_rows.is_empty() {
        qp.a_in = DMatrix::from_rows(&in_rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        qp.b_in = DVector::from_vec(in_rhs);
    }
    let sol = solve_qp_hinted(&qp, 1e-10, 200, warm).map_err(|_| StepError::QpFailure)?;
    match sol.status {
        QpStatus::Optimal => {}
        _ => {
            // classify: do the motion-range rows cause the infeasibility?
            let mut relaxed = qp.clone();
            relaxed.a_in = DMatrix::from_rows(
                &in_rows[n_motion_rows..]
                    .iter()
                    .map(|r| r.transpose())
                    .collect::<Vec<_>>(),
            );
            relaxed.b_in = DVector::from_row_slice(&qp.b_in.as_slice()[n_motion_rows..]);
            if in_rows.len() == n_motion_rows {
                relaxed.a_in = DMatrix::zeros(0, nv);
                relaxed.b_in = DVector::zeros(0);
            }
            return match solve_qp_hinted(&relaxed, 1e-10, 200, &[]) {
                Ok(s) if s.status == QpStatus::Optimal => Err(StepError::JointLimit),
                _ => Err(StepError::QpFailure),
            };
        }
    }

    let mut finger_rates = Vec::with_capacity(moving.len());
    for slot in 0..moving.len() {
        finger_rates.push([sol.x[3 * slot], sol.x[3 * slot + 1], sol.x[3 * slot + 2]]);
    }
    let mut sliding = Vec::with_capacity(n);
    for c in 0..n {
        let vx = j_t[(3 * c, 0)] * u_t + (j_f.row(3 * c) * &sol.x)[0];
        let vy = j_t[(3 * c + 1, 0)] * u_t + (j_f.row(3 * c + 1) * &sol.x)[0];
        sliding.push((vx * vx + vy * vy).sqrt());
    }
    let at_motion_bound = sol.active_set.iter().any(|&i| i < n_motion_rows);
    Ok(StepRates {
        finger_rates,
        sliding_speeds: sliding,
        objective: sol.objective,
        active_set: sol.active_set,
        at_motion_bound,
    })
}

/// One RK4 step of the combined coordinate/joint ODE; the hand pose follows
/// the exact rotation about the axis. Contact coordinates are re-projected
/// onto the contact manifold afterwards.
pub fn advance(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
    rates: &[[f64; 3]],
    cfg: &PlanConfig,
) -> Result<SystemState> {
    let mut work = state.clone();
    for attempt in 0..2 {
        match rk4_step(ctx, d, fp, &work, axis, rates, cfg) {
            Ok(mut next) => {
                close_normal_gaps(ctx, d, fp, &mut next)?;
                for pair in next.contacts.iter_mut() {
                    project_contact(&ctx.tmpl, d, &ctx.tool, &next.hand_pose.clone(), pair, 6)?;
                    canonicalize_spin(&ctx.tmpl, d, &ctx.tool, &next.hand_pose.clone(), pair)?;
                }
                return Ok(next);
            }
            Err(FphandError::ChartSingularity { .. }) if attempt == 0 => {
                // re-anchor every near-pole fingertip chart and retry once
                let mut changed = false;
                for pair in work.contacts.iter_mut() {
                    changed |= reanchor_chart(d, pair);
                }
                if !changed {
                    return Err(FphandError::ChartSingularity { dist: 0.0 });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(FphandError::ChartSingularity { dist: 0.0 })
}

/// Raw RK4 step without the manifold projection (diagnostics: integrator
/// order measurements).
pub fn rk4_raw_step(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
    rates: &[[f64; 3]],
    cfg: &PlanConfig,
) -> Result<SystemState> {
    rk4_step(ctx, d, fp, state, axis, rates, cfg)
}

fn rk4_step(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
    rates: &[[f64; 3]],
    cfg: &PlanConfig,
) -> Result<SystemState> {
    let n = fp.n_contacts();
    let moving = fp.moving_contacts();
    let dt = cfg.dt;
    let u_t = cfg.signed_rate();

    // pack the integrated coordinates: per contact (spin, a_t1, a_t2, a_f1,
    // a_f2) then moving joints
    let pack = |s: &SystemState| -> DVector<f64> {
        let mut y = DVector::zeros(5 * n + 3 * moving.len());
        for (c, pair) in s.contacts.iter().enumerate() {
            y[5 * c] = pair.tool_coords.spin;
            y[5 * c + 1] = pair.tool_coords.a1;
            y[5 * c + 2] = pair.tool_coords.a2;
            y[5 * c + 3] = pair.finger_coords[0];
            y[5 * c + 4] = pair.finger_coords[1];
        }
        for (slot, &mc) in moving.iter().enumerate() {
            let u = s.contacts[mc].finger_joints.to_array();
            for k in 0..3 {
                y[5 * n + 3 * slot + k] = u[k];
            }
        }
        y
    };
    let unpack = |s: &SystemState, y: &DVector<f64>, dphi: f64| -> SystemState {
        let mut out = s.clone();
        let rot = rotation_about_line(&axis.point_vec(), &axis.dir_vec(), -dphi);
        out.hand_pose = HandPose6D::from_transform(&rot.mul(&state.hand_pose.to_transform()));
        for (c, pair) in out.contacts.iter_mut().enumerate() {
            pair.tool_coords.spin = y[5 * c];
            pair.tool_coords.a1 = y[5 * c + 1];
            pair.tool_coords.a2 = y[5 * c + 2];
            pair.finger_coords[0] = y[5 * c + 3];
            pair.finger_coords[1] = y[5 * c + 4];
        }
        for (slot, &mc) in moving.iter().enumerate() {
            out.contacts[mc].finger_joints =
                FingerJoints::new(y[5 * n + 3 * slot], y[5 * n + 3 * slot + 1], y[5 * n + 3 * slot + 2]);
        }
        out
    };
    let deriv = |s: &SystemState| -> Result<DVector<f64>> {
        let out = contact_evolution(&ctx.tmpl, d, fp, &ctx.tool, s, axis, u_t, rates)?;
        let mut dy = DVector::zeros(5 * n + 3 * moving.len());
        for (c, r) in out.iter().enumerate() {
            dy[5 * c] = r.tool[0];
            dy[5 * c + 1] = r.tool[1];
            dy[5 * c + 2] = r.tool[2];
            dy[5 * c + 3] = r.finger[0];
            dy[5 * c + 4] = r.finger[1];
        }
        for (slot, _) in moving.iter().enumerate() {
            for k in 0..3 {
                dy[5 * n + 3 * slot + k] = rates[slot][k];
            }
        }
        Ok(dy)
    };

    let y0 = pack(state);
    let k1 = deriv(state)?;
    let s2 = unpack(state, &(&y0 + (0.5 * dt) * &k1), 0.5 * dt * u_t);
    let k2 = deriv(&s2)?;
    let s3 = unpack(state, &(&y0 + (0.5 * dt) * &k2), 0.5 * dt * u_t);
    let k3 = deriv(&s3)?;
    let s4 = unpack(state, &(&y0 + dt * &k3), dt * u_t);
    let k4 = deriv(&s4)?;
    let y1 = &y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Ok(unpack(state, &y1, dt * u_t))
}

/// Newton correction of the moving fingers' joints that zeroes the normal
/// body-to-body gaps the discrete step leaves behind (the surfaces, not the
/// chart points, must touch). Interleaved with tangential chart projection.
fn close_normal_gaps(ctx: &FpSolveContext, d: &DesignParams, fp: &FpSpec, state: &mut SystemState) -> Result<()> {
    let moving = fp.moving_contacts();
    if moving.is_empty() {
        return Ok(());
    }
    let nv = 3 * moving.len();
    for _ in 0..6 {
        // track the closest points first so the gap is the true separation
        for pair in state.contacts.iter_mut() {
            project_contact(&ctx.tmpl, d, &ctx.tool, &state.hand_pose.clone(), pair, 4)?;
        }
        let asm = assemble_all(&ctx.tmpl, d, &ctx.tool, state)?;
        let mut worst: f64 = 0.0;
        let mut rows = DMatrix::zeros(moving.len(), nv);
        let mut gaps = DVector::zeros(moving.len());
        for (slot, &mc) in moving.iter().enumerate() {
            let a = &asm[mc];
            let nrm = a.tool_frame.column(2).into_owned();
            let g = nrm.dot(&(a.tool_point - a.finger_point));
            gaps[slot] = g;
            worst = worst.max(g.abs());
            for k in 0..3 {
                // d g / d u_k = -n . dp_OP/du_k
                rows[(slot, 3 * slot + k)] = -nrm.dot(&a.finger_d[k].dp);
            }
        }
        if worst < 1e-10 {
            break;
        }
        let jjt = &rows * rows.transpose() + DMatrix::identity(moving.len(), moving.len()) * 1e-10;
        let y = jjt
            .cholesky()
            .ok_or_else(|| FphandError::Solver("gap closure system singular".into()))?
            .solve(&(-gaps));
        let du = rows.transpose() * y;
        for (slot, &mc) in moving.iter().enumerate() {
            let u = state.contacts[mc].finger_joints.to_array();
            state.contacts[mc].finger_joints = FingerJoints::new(
                u[0] + du[3 * slot],
                u[1] + du[3 * slot + 1],
                u[2] + du[3 * slot + 2],
            );
        }
    }
    Ok(())
}

/// Plan a tool-wielding path in one direction from an FP state.
pub fn plan_path(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    fp_state: &SystemState,
    candidate: usize,
    cfg: &PlanConfig,
) -> Result<PathRecord> {
    cfg.validate()?;
    let axis = fp_rotation_axis(&ctx.tmpl, d, fp, &ctx.tool, fp_state)?;
    let mut steps: Vec<PathStep> = Vec::new();
    let mut objectives: Vec<f64> = Vec::new();
    let mut consecutive_bound = 0usize;
    let mut warm: Vec<usize> = Vec::new();
    let mut state = fp_state.clone();
    let mut phi = 0.0_f64;

    let equilibrium_ok = |s: &SystemState| -> Result<bool> {
        let asm = assemble_all(&ctx.tmpl, d, &ctx.tool, s)?;
        let f = tip_force_world(&axis, &ctx.tool, cfg.direction as f64, ctx.tip.magnitude, true)?;
        Ok(equilibrium_from_assembled(&asm, &ctx.tool, &f, &ctx.friction)?.feasible)
    };
    let residual_of = |s: &SystemState| -> Result<f64> {
        let r = reach_fp_residual(&ctx.tmpl, d, fp, &ctx.tool, s)?;
        Ok(residual_mm_norm(&r, &ctx.tool))
    };

    // the FP itself is step zero
    let eq0 = equilibrium_ok(&state)?;
    steps.push(PathStep {
        phi,
        state: state.clone(),
        finger_rates: Vec::new(),
        sliding_speeds: Vec::new(),
        equilibrium_ok: eq0,
        residual: residual_of(&state)?,
    });
    if !eq0 {
        return Ok(PathRecord {
            candidate,
            fp: fp.name,
            direction: cfg.direction,
            axis,
            steps,
            termination: Termination::EquilibriumInfeasible,
            motion_range: 0.0,
        });
    }

    let termination = loop {
        if steps.len() > cfg.max_steps {
            break Termination::MaxSteps;
        }
        let rates = match plan_step(ctx, d, fp, &state, &axis, cfg, &warm) {
            Ok(r) => r,
            Err(StepError::JointLimit) => break Termination::JointLimit,
            Err(StepError::QpFailure) => break Termination::QpFailure,
        };
        warm = rates.active_set.clone();
        // grinding at a coordinate bound with outsized sliding
        objectives.push(rates.objective);
        if rates.at_motion_bound {
            consecutive_bound += 1;
        } else {
            consecutive_bound = 0;
        }
        if consecutive_bound >= 3 {
            let mut sorted = objectives.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[sorted.len() / 2];
            if rates.objective > 10.0 * median.max(1e-12) {
                break Termination::JointLimit;
            }
        }

        // fill the step we are about to take into the current record
        if let Some(last) = steps.last_mut() {
            last.finger_rates = rates.finger_rates.clone();
            last.sliding_speeds = rates.sliding_speeds.clone();
        }

        let next = match advance(ctx, d, fp, &state, &axis, &rates.finger_rates, cfg) {
            Ok(s) => s,
            Err(_) => break Termination::QpFailure,
        };
        let eq = match equilibrium_ok(&next) {
            Ok(v) => v,
            Err(_) => false,
        };
        if !eq {
            break Termination::EquilibriumInfeasible;
        }
        phi += cfg.signed_rate() * cfg.dt;
        state = next;
        steps.push(PathStep {
            phi,
            state: state.clone(),
            finger_rates: Vec::new(),
            sliding_speeds: Vec::new(),
            equilibrium_ok: true,
            residual: residual_of(&state)?,
        });
    };

    Ok(PathRecord {
        candidate,
        fp: fp.name,
        direction: cfg.direction,
        axis,
        steps,
        termination,
        motion_range: phi.abs(),
    })
}

/// All six paths of a candidate (3 FPs x 2 directions).
pub fn plan_all(
    ctx: &FpSolveContext,
    d: &DesignParams,
    states: &[(FpName, SystemState)],
    candidate: usize,
    cfg: &PlanConfig,
) -> Result<Vec<PathRecord>> {
    let mut out = Vec::with_capacity(2 * ctx.specs.len());
    for spec in &ctx.specs {
        let state = states
            .iter()
            .find(|(n, _)| *n == spec.name)
            .map(|(_, s)| s)
            .ok_or_else(|| FphandError::Config(format!("missing FP state for {}", spec.name)))?;
        for dir in [1i8, -1] {
            let mut c = *cfg;
            c.direction = dir;
            out.push(plan_path(ctx, d, spec, state, candidate, &c)?);
        }
    }
    Ok(out)
}

/// Re-derive the per-contact rates from recorded joint rates (used by the
/// evaluation layer to re-check recorded sliding speeds).
pub fn recompute_sliding(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: &FpSpec,
    state: &SystemState,
    axis: &RotationAxis,
    finger_rates: &[[f64; 3]],
    cfg: &PlanConfig,
) -> Result<Vec<f64>> {
    let asm = assemble_all(&ctx.tmpl, d, &ctx.tool, state)?;
    let moving = fp.moving_contacts();
    let u_t = cfg.signed_rate();
    let mut out = Vec::with_capacity(asm.len());
    for (c, a) in asm.iter().enumerate() {
        let rates = moving
            .iter()
            .position(|&m| m == c)
            .map(|slot| finger_rates[slot])
            .unwrap_or([0.0; 3]);
        let (v_rel, _) = relative_motion(a, axis, u_t, &rates);
        let vc = a.tool_frame.transpose() * v_rel;
        out.push((vc.x * vc.x + vc.y * vc.y).sqrt());
    }
    Ok(out)
}
