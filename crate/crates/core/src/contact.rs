//! Contact constraints, the reach-FP residual system, contact Jacobians,
//! and first-order roll-slide contact evolution.
//!
//! A tool-hand system with `n` contacts has `8n + 6` variables: the 6-DoF
//! hand pose, per contact the tool-surface coordinates `(u_t, a_t1, a_t2)`
//! (spin + two chart coordinates), and per contact the finger coordinates
//! `(u_f1, u_f2, u_f3, a_f1, a_f2)`. The contact constraint contributes six
//! equations per contact: coincident points and anti-aligned normals.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FphandError, Result};
use crate::geom::{skew, so3_left_jacobian, RigidTransform};
use crate::model::chart::{pole_distance, CapChart, JetCols};
use crate::model::{
    finger_roots, finger_surface_jet, tool_surface_jet, DesignParams, FingerJoints, FpSpec, HandPose6D,
    RotationAxisRule, SurfaceCoords, Template, ToolGeom,
};

/// Arc-length margin (times finger radius) that triggers chart re-anchoring
/// near a cap pole.
pub const POLE_MARGIN_FACTOR: f64 = 0.05;

/// One tool-finger contact: where it sits on both surfaces and the posture
/// of the finger that makes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub finger: usize,
    /// `(a1, a2)` on the tool plus the contact-frame spin `u_t`.
    pub tool_coords: SurfaceCoords,
    pub finger_joints: FingerJoints,
    /// `(a_f1, a_f2)` on the finger's distal-link surface.
    pub finger_coords: [f64; 2],
    #[serde(default)]
    pub chart: CapChart,
}

/// All joint/contact variables of a tool-hand system at one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub hand_pose: HandPose6D,
    pub contacts: Vec<ContactPair>,
}

impl SystemState {
    pub fn dim(&self) -> usize {
        8 * self.contacts.len() + 6
    }

    /// Pack into the canonical variable ordering:
    /// `[theta_h(6) | (u_t, a_t1, a_t2) per contact | (u_f1..3, a_f1, a_f2) per contact]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.contacts.len();
        let mut v = DVector::zeros(8 * n + 6);
        v.rows_mut(0, 3).copy_from(&self.hand_pose.translation_vec());
        v.rows_mut(3, 3).copy_from(&self.hand_pose.rotation_vec());
        for (c, pair) in self.contacts.iter().enumerate() {
            let o = 6 + 3 * c;
            v[o] = pair.tool_coords.spin;
            v[o + 1] = pair.tool_coords.a1;
            v[o + 2] = pair.tool_coords.a2;
            let o = 6 + 3 * n + 5 * c;
            let u = pair.finger_joints.to_array();
            v[o] = u[0];
            v[o + 1] = u[1];
            v[o + 2] = u[2];
            v[o + 3] = pair.finger_coords[0];
            v[o + 4] = pair.finger_coords[1];
        }
        v
    }

    /// Rebuild a state with the same finger assignment/charts but new numbers.
    pub fn with_vector(&self, v: &DVector<f64>) -> Result<SystemState> {
        let n = self.contacts.len();
        if v.len() != 8 * n + 6 {
            return Err(FphandError::Dimension {
                expected: 8 * n + 6,
                got: v.len(),
            });
        }
        let mut out = self.clone();
        out.hand_pose = HandPose6D::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        );
        for (c, pair) in out.contacts.iter_mut().enumerate() {
            let o = 6 + 3 * c;
            pair.tool_coords = SurfaceCoords::new(v[o + 1], v[o + 2], v[o]);
            let o = 6 + 3 * n + 5 * c;
            pair.finger_joints = FingerJoints::new(v[o], v[o + 1], v[o + 2]);
            pair.finger_coords = [v[o + 3], v[o + 4]];
        }
        Ok(out)
    }

    /// Canonical storage form: periodic coordinates wrapped.
    pub fn wrapped(&self) -> SystemState {
        let mut s = self.clone();
        for c in s.contacts.iter_mut() {
            c.tool_coords = c.tool_coords.wrapped();
            c.finger_coords[1] = crate::geom::wrap_angle(c.finger_coords[1]);
        }
        s
    }
}

/// Raw 6-vector contact constraint between two Gauss frames: position
/// coincidence (mm) and normal anti-alignment (dimensionless).
pub fn contact_residual(t_oc: &RigidTransform, t_op: &RigidTransform) -> [f64; 6] {
    let dp = t_oc.pos - t_op.pos;
    let dz = t_oc.rot.column(2) + t_op.rot.column(2);
    [dp.x, dp.y, dp.z, dz.x, dz.y, dz.z]
}

/// Everything the residual/Jacobian/evolution code needs about one contact,
/// assembled in the tool frame {O}.
#[derive(Debug, Clone)]
pub struct AssembledContact {
    pub tool_point: Vector3<f64>,
    /// Spun tool Gauss frame (z = inward tool normal).
    pub tool_frame: Matrix3<f64>,
    /// Tool jets w.r.t. `(u_t, a_t1, a_t2)`.
    pub tool_d: [JetCols; 3],
    pub finger_point: Vector3<f64>,
    /// Finger Gauss frame in {O} (z = inward finger normal).
    pub finger_frame: Matrix3<f64>,
    /// Finger jets w.r.t. `(u_f1, u_f2, u_f3, a_f1, a_f2)` in {O}.
    pub finger_d: [JetCols; 5],
    /// Finger point/frame jets w.r.t. the 6 hand-pose coordinates.
    pub pose_d: [JetCols; 6],
}

pub fn assemble_contact(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    pose: &HandPose6D,
    pair: &ContactPair,
) -> Result<AssembledContact> {
    let t_oh = pose.to_transform();
    let jl = so3_left_jacobian(&pose.rotation_vec());
    let roots = finger_roots(d);
    let t_or = t_oh.mul(&roots[pair.finger]);

    let tj = tool_surface_jet(tool, &pair.tool_coords)?;
    let fj = finger_surface_jet(
        tmpl,
        d,
        &pair.finger_joints,
        pair.chart,
        pair.finger_coords[0],
        pair.finger_coords[1],
    )?;

    let finger_point = t_or.transform_point(&fj.transform.pos);
    let finger_frame = t_or.rot * fj.transform.rot;
    let rot_cols = |m: &Matrix3<f64>, k: usize| m.column(k).into_owned();

    let mut finger_d = [JetCols::zero(); 5];
    for k in 0..5 {
        finger_d[k] = JetCols {
            dp: t_or.rot * fj.d[k].dp,
            dx: t_or.rot * fj.d[k].dx,
            dy: t_or.rot * fj.d[k].dy,
            dz: t_or.rot * fj.d[k].dz,
        };
    }

    let mut pose_d = [JetCols::zero(); 6];
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        pose_d[k] = JetCols {
            dp: e,
            dx: Vector3::zeros(),
            dy: Vector3::zeros(),
            dz: Vector3::zeros(),
        };
    }
    for k in 0..3 {
        let jcol = jl.column(k).into_owned();
        let arm = finger_point - t_oh.pos; // R * (point in H)
        pose_d[3 + k] = JetCols {
            dp: -skew(&arm) * jcol,
            dx: -skew(&rot_cols(&finger_frame, 0)) * jcol,
            dy: -skew(&rot_cols(&finger_frame, 1)) * jcol,
            dz: -skew(&rot_cols(&finger_frame, 2)) * jcol,
        };
    }

    Ok(AssembledContact {
        tool_point: tj.transform.pos,
        tool_frame: tj.transform.rot,
        tool_d: tj.d,
        finger_point,
        finger_frame,
        finger_d,
        pose_d,
    })
}

pub fn assemble_all(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<Vec<AssembledContact>> {
    state
        .contacts
        .iter()
        .map(|p| assemble_contact(tmpl, d, tool, &state.hand_pose, p))
        .collect()
}

/// Stacked 6n reach-FP residual: per contact `[p_OC - p_OP; z_OC + z_OP]`.
pub fn reach_fp_residual(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<DVector<f64>> {
    check_state_matches(fp, state)?;
    let asm = assemble_all(tmpl, d, tool, state)?;
    let n = asm.len();
    let mut r = DVector::zeros(6 * n);
    for (c, a) in asm.iter().enumerate() {
        let dp = a.tool_point - a.finger_point;
        let dz = a.tool_frame.column(2) + a.finger_frame.column(2);
        r.rows_mut(6 * c, 3).copy_from(&dp);
        r.rows_mut(6 * c + 3, 3).copy_from(&dz);
    }
    Ok(r)
}

fn check_state_matches(fp: &FpSpec, state: &SystemState) -> Result<()> {
    if state.contacts.len() != fp.n_contacts() {
        return Err(FphandError::Dimension {
            expected: fp.n_contacts(),
            got: state.contacts.len(),
        });
    }
    for (c, pair) in state.contacts.iter().enumerate() {
        if pair.finger != fp.contact_fingers[c] {
            return Err(FphandError::Config(format!(
                "contact {} assigned to finger {}, spec says {}",
                c, pair.finger, fp.contact_fingers[c]
            )));
        }
    }
    Ok(())
}

/// Analytic Jacobian of [`reach_fp_residual`] w.r.t. the packed state vector.
pub fn reach_fp_jacobian(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<DMatrix<f64>> {
    check_state_matches(fp, state)?;
    let asm = assemble_all(tmpl, d, tool, state)?;
    let n = asm.len();
    let mut j = DMatrix::zeros(6 * n, 8 * n + 6);
    for (c, a) in asm.iter().enumerate() {
        let rp = 6 * c;
        // hand pose columns (finger side enters with negative sign on position)
        for k in 0..6 {
            for i in 0..3 {
                j[(rp + i, k)] = -a.pose_d[k].dp[i];
                j[(rp + 3 + i, k)] = a.pose_d[k].dz[i];
            }
        }
        // tool coordinate columns (u_t, a_t1, a_t2)
        for k in 0..3 {
            let col = 6 + 3 * c + k;
            for i in 0..3 {
                j[(rp + i, col)] = a.tool_d[k].dp[i];
                j[(rp + 3 + i, col)] = a.tool_d[k].dz[i];
            }
        }
        // finger columns (u_f1, u_f2, u_f3, a_f1, a_f2)
        for k in 0..5 {
            let col = 6 + 3 * n + 5 * c + k;
            for i in 0..3 {
                j[(rp + i, col)] = -a.finger_d[k].dp[i];
                j[(rp + 3 + i, col)] = a.finger_d[k].dz[i];
            }
        }
    }
    Ok(j)
}

/// Solver-facing reduced residual: per contact 3 position equations plus the
/// normal-sum projected onto the tool tangent axes (full rank 5 at generic
/// states; equivalent to the 6n system at solutions).
pub fn reach_fp_residual_reduced(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<DVector<f64>> {
    check_state_matches(fp, state)?;
    let asm = assemble_all(tmpl, d, tool, state)?;
    Ok(reduced_from_assembled(&asm))
}

pub fn reduced_from_assembled(asm: &[AssembledContact]) -> DVector<f64> {
    let n = asm.len();
    let mut r = DVector::zeros(5 * n);
    for (c, a) in asm.iter().enumerate() {
        let dp = a.tool_point - a.finger_point;
        let dz = a.tool_frame.column(2) + a.finger_frame.column(2);
        r[5 * c] = dp.x;
        r[5 * c + 1] = dp.y;
        r[5 * c + 2] = dp.z;
        r[5 * c + 3] = a.tool_frame.column(0).dot(&dz);
        r[5 * c + 4] = a.tool_frame.column(1).dot(&dz);
    }
    r
}

/// Exact Jacobian of the reduced residual (includes the rotation of the
/// projection basis with the tool coordinates).
pub fn reach_fp_jacobian_reduced(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<DMatrix<f64>> {
    check_state_matches(fp, state)?;
    let asm = assemble_all(tmpl, d, tool, state)?;
    let n = asm.len();
    let mut j = DMatrix::zeros(5 * n, 8 * n + 6);
    for (c, a) in asm.iter().enumerate() {
        let rp = 5 * c;
        let x = a.tool_frame.column(0).into_owned();
        let y = a.tool_frame.column(1).into_owned();
        let dz_sum = a.tool_frame.column(2) + a.finger_frame.column(2);
        for k in 0..6 {
            for i in 0..3 {
                j[(rp + i, k)] = -a.pose_d[k].dp[i];
            }
            j[(rp + 3, k)] = x.dot(&a.pose_d[k].dz);
            j[(rp + 4, k)] = y.dot(&a.pose_d[k].dz);
        }
        for k in 0..3 {
            let col = 6 + 3 * c + k;
            for i in 0..3 {
                j[(rp + i, col)] = a.tool_d[k].dp[i];
            }
            j[(rp + 3, col)] = x.dot(&a.tool_d[k].dz) + a.tool_d[k].dx.dot(&dz_sum);
            j[(rp + 4, col)] = y.dot(&a.tool_d[k].dz) + a.tool_d[k].dy.dot(&dz_sum);
        }
        for k in 0..5 {
            let col = 6 + 3 * n + 5 * c + k;
            for i in 0..3 {
                j[(rp + i, col)] = -a.finger_d[k].dp[i];
            }
            j[(rp + 3, col)] = x.dot(&a.finger_d[k].dz);
            j[(rp + 4, col)] = y.dot(&a.finger_d[k].dz);
        }
    }
    Ok(j)
}

/// Mixed-unit residual magnitude in mm: positions as-is, normal terms scaled
/// by the tool radius.
pub fn residual_mm_norm(residual: &DVector<f64>, tool: &ToolGeom) -> f64 {
    let n = residual.len() / 6;
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for i in 0..3 {
            worst = worst.max(residual[6 * c + i].abs());
            worst = worst.max(tool.radius * residual[6 * c + 3 + i].abs());
        }
    }
    worst
}

/// The tool's planar rotation axis, fixed in {O} at the FP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationAxis {
    pub point: [f64; 3],
    pub dir: [f64; 3],
}

impl RotationAxis {
    pub fn point_vec(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.point)
    }

    pub fn dir_vec(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.dir)
    }

    /// Velocity of the tool material point at `p` under unit rotation rate,
    /// expressed in {O}.
    pub fn point_velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.dir_vec().cross(&(p - self.point_vec()))
    }

    /// Unit tangent of the tool tip's circular path under positive rotation.
    pub fn tip_tangent(&self, tool: &ToolGeom) -> Result<Vector3<f64>> {
        let v = self.point_velocity(&tool.tip_point());
        let n = v.norm();
        if n < 1e-9 {
            return Err(FphandError::Solver(
                "tool tip lies on the rotation axis; cut direction undefined".into(),
            ));
        }
        Ok(v / n)
    }
}

/// Derive the FP rotation axis from a solved state.
pub fn fp_rotation_axis(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
) -> Result<RotationAxis> {
    check_state_matches(fp, state)?;
    let points: Vec<Vector3<f64>> = state
        .contacts
        .iter()
        .map(|p| tool_surface_jet(tool, &p.tool_coords).map(|j| j.transform.pos))
        .collect::<Result<_>>()?;
    let _ = (tmpl, d);
    match fp.axis_rule {
        RotationAxisRule::CentroidPerp => {
            let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
            let lever = tool.tip_point() - centroid;
            let zaxis = Vector3::new(0.0, 0.0, 1.0);
            let cross = zaxis.cross(&lever);
            let dir = if cross.norm() > 1e-9 * lever.norm().max(1.0) {
                cross.normalize()
            } else {
                // lever parallel to the tool axis: any transverse direction
                Vector3::new(1.0, 0.0, 0.0)
            };
            Ok(RotationAxis {
                point: [centroid.x, centroid.y, centroid.z],
                dir: [dir.x, dir.y, dir.z],
            })
        }
        RotationAxisRule::PinchLine => {
            let s = &fp.stationary_contacts;
            if s.len() != 2 {
                return Err(FphandError::Config("pinch axis needs two stationary contacts".into()));
            }
            let (p1, p2) = (points[s[0]], points[s[1]]);
            let chord = p2 - p1;
            if chord.norm() < 1e-6 {
                return Err(FphandError::Solver("stationary pinch contacts coincide".into()));
            }
            let dir = chord.normalize();
            Ok(RotationAxis {
                point: [p1.x, p1.y, p1.z],
                dir: [dir.x, dir.y, dir.z],
            })
        }
    }
}

/// Columns of the contact Jacobian: the scalar tool rate about the FP axis
/// first, then the joint rates of the moving fingers in contact order.
pub fn moving_rate_dim(fp: &FpSpec) -> usize {
    1 + 3 * fp.moving_contacts().len()
}

/// Linear map from `[u_t_dot; u_f_dot(moving)]` to the stacked contact-frame
/// relative velocities `v_CP` (3 rows per contact).
pub fn contact_jacobian(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
    axis: &RotationAxis,
) -> Result<DMatrix<f64>> {
    let residual = reach_fp_residual(tmpl, d, fp, tool, state)?;
    let rn = residual_mm_norm(&residual, tool);
    if rn > 1e-4 {
        return Err(FphandError::StaleState { residual: rn });
    }
    let asm = assemble_all(tmpl, d, tool, state)?;
    let n = asm.len();
    let moving = fp.moving_contacts();
    let mut j = DMatrix::zeros(3 * n, moving_rate_dim(fp));
    for (c, a) in asm.iter().enumerate() {
        let rt = a.tool_frame.transpose();
        // hand base is fixed in the world; in {O} the whole hand rotates at
        // -1 about the axis while the tool stays put. Relative velocity of
        // the finger material point w.r.t. the tool point:
        let v_tool = -axis.point_velocity(&a.finger_point);
        let col = rt * v_tool;
        for i in 0..3 {
            j[(3 * c + i, 0)] = col[i];
        }
        if let Some(mslot) = moving.iter().position(|&m| m == c) {
            for k in 0..3 {
                let col = rt * a.finger_d[k].dp;
                for i in 0..3 {
                    j[(3 * c + i, 1 + 3 * mslot + k)] = col[i];
                }
            }
        }
    }
    Ok(j)
}

/// Condition number of the contact Jacobian (singularity guard).
pub fn contact_jacobian_condition(j: &DMatrix<f64>) -> f64 {
    let svd = j.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Time derivatives of one contact's surface coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContactRates {
    /// `(u_t_spin, a_t1, a_t2)` rates.
    pub tool: [f64; 3],
    /// `(a_f1, a_f2)` rates.
    pub finger: [f64; 2],
}

/// Roll-slide evolution of a single contact from its relative motion.
///
/// `v_rel` is the material velocity of the finger contact point relative to
/// the tool contact point, `omega_rel` the finger distal link's angular
/// velocity relative to the tool body (joint rates included), both in {O}.
/// The tangential projections of the differentiated contact constraints
/// give four equations for the four surface-coordinate rates; the spin rate
/// follows from the frame gauge `x_C = x_P`.
pub fn evolve_single_contact(
    a: &AssembledContact,
    v_rel: &Vector3<f64>,
    omega_rel: &Vector3<f64>,
) -> Result<ContactRates> {
    let c1 = a.tool_frame.column(0).into_owned();
    let c2 = a.tool_frame.column(1).into_owned();
    let nrm = a.tool_frame.column(2).into_owned();

    let proj = |v: &Vector3<f64>| Vector2::new(c1.dot(v), c2.dot(v));

    // position rows: D_t a_t_dot - D_f a_f_dot = v_rel (tangential part)
    let p_t = Matrix2::from_columns(&[proj(&a.tool_d[1].dp), proj(&a.tool_d[2].dp)]);
    let p_f = Matrix2::from_columns(&[proj(&a.finger_d[3].dp), proj(&a.finger_d[4].dp)]);
    // normal rows: Z_t a_t_dot + Z_f a_f_dot = omega_rel x n
    let z_t = Matrix2::from_columns(&[proj(&a.tool_d[1].dz), proj(&a.tool_d[2].dz)]);
    let z_f = Matrix2::from_columns(&[proj(&a.finger_d[3].dz), proj(&a.finger_d[4].dz)]);

    let mut sys = nalgebra::Matrix4::<f64>::zeros();
    sys.view_mut((0, 0), (2, 2)).copy_from(&p_t);
    sys.view_mut((0, 2), (2, 2)).copy_from(&(-p_f));
    sys.view_mut((2, 0), (2, 2)).copy_from(&z_t);
    sys.view_mut((2, 2), (2, 2)).copy_from(&z_f);
    let mut rhs = nalgebra::Vector4::<f64>::zeros();
    let vt = proj(v_rel);
    let mn = proj(&omega_rel.cross(&nrm));
    rhs[0] = vt[0];
    rhs[1] = vt[1];
    rhs[2] = mn[0];
    rhs[3] = mn[1];

    let lu = sys.full_piv_lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| FphandError::Solver("contact evolution system is singular".into()))?;
    // consistency check guards against line-contact degeneracy
    if (sys * sol - rhs).amax() > 1e-6 * (1.0 + rhs.amax()) {
        return Err(FphandError::Solver("contact evolution system is inconsistent".into()));
    }

    let a_t_dot = [sol[0], sol[1]];
    let a_f_dot = [sol[2], sol[3]];

    // spin gauge x_C = x_P:
    // x_P_dot = omega_rel x x_P + X_fa a_f_dot; x_C_dot = X_t a_t_dot + y_C s_dot
    let x_p = a.finger_frame.column(0).into_owned();
    let mut x_p_dot = omega_rel.cross(&x_p);
    x_p_dot += a.finger_d[3].dx * a_f_dot[0] + a.finger_d[4].dx * a_f_dot[1];
    let x_c_chart_dot = a.tool_d[1].dx * a_t_dot[0] + a.tool_d[2].dx * a_t_dot[1];
    let spin_rate = c2.dot(&(x_p_dot - x_c_chart_dot));

    Ok(ContactRates {
        tool: [spin_rate, a_t_dot[0], a_t_dot[1]],
        finger: a_f_dot,
    })
}

/// Evolution of all contact coordinates under a prescribed tool rate and
/// moving-finger joint rates. `omega_rel` for the finger side includes the
/// hand-base rotation (the hand counter-rotates in {O}) plus joint motion.
pub fn contact_evolution(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
    axis: &RotationAxis,
    u_t_rate: f64,
    u_f_rates: &[[f64; 3]],
) -> Result<Vec<ContactRates>> {
    check_state_matches(fp, state)?;
    let asm = assemble_all(tmpl, d, tool, state)?;
    let moving = fp.moving_contacts();
    if u_f_rates.len() != moving.len() {
        return Err(FphandError::Dimension {
            expected: moving.len(),
            got: u_f_rates.len(),
        });
    }
    let pole_margin = POLE_MARGIN_FACTOR * d.finger_radius;
    let mut out = Vec::with_capacity(asm.len());
    for (c, a) in asm.iter().enumerate() {
        let pair = &state.contacts[c];
        if let Some(dist) = pole_distance(d.finger_radius, d.distal_body_len(), pair.chart, pair.finger_coords[0]) {
            if dist < pole_margin {
                return Err(FphandError::ChartSingularity { dist });
            }
        }
        let rates = moving
            .iter()
            .position(|&m| m == c)
            .map(|slot| u_f_rates[slot])
            .unwrap_or([0.0; 3]);
        let (v_rel, omega_rel) = relative_motion(a, axis, u_t_rate, &rates);
        out.push(evolve_single_contact(a, &v_rel, &omega_rel)?);
    }
    Ok(out)
}

/// Material velocity of the finger contact point relative to the tool, and
/// the distal link's angular velocity relative to the tool body, in {O}.
/// The hand base counter-rotates at `-u_t_rate` about the FP axis.
pub fn relative_motion(
    a: &AssembledContact,
    axis: &RotationAxis,
    u_t_rate: f64,
    u_f_rates: &[f64; 3],
) -> (Vector3<f64>, Vector3<f64>) {
    let hand_omega = -u_t_rate * axis.dir_vec();
    let mut v_rel = hand_omega.cross(&(a.finger_point - axis.point_vec()));
    let mut omega_rel = hand_omega;
    // recover joint axes from the frame jets: for dcol = w x col,
    // 0.5 * sum_col col x dcol = w
    let x = a.finger_frame.column(0).into_owned();
    let y = a.finger_frame.column(1).into_owned();
    let z = a.finger_frame.column(2).into_owned();
    for k in 0..3 {
        v_rel += a.finger_d[k].dp * u_f_rates[k];
        let w = 0.5 * (x.cross(&a.finger_d[k].dx) + y.cross(&a.finger_d[k].dy) + z.cross(&a.finger_d[k].dz));
        omega_rel += w * u_f_rates[k];
    }
    (v_rel, omega_rel)
}

/// Re-anchor a contact's fingertip chart away from a pole if needed.
/// Returns `true` if the chart changed.
pub fn reanchor_chart(d: &DesignParams, pair: &mut ContactPair) -> bool {
    let r = d.finger_radius;
    let body = d.distal_body_len();
    let margin = 4.0 * POLE_MARGIN_FACTOR * r;
    let near_pole = pole_distance(r, body, pair.chart, pair.finger_coords[0]).is_some_and(|dd| dd < margin);
    if !near_pole {
        // switch back to the axial chart when comfortably away from its pole
        if pair.chart == CapChart::TiltedX {
            if let Some((a1, a2)) = crate::model::chart::convert_cap_coords(
                r,
                body,
                CapChart::TiltedX,
                pair.finger_coords[0],
                pair.finger_coords[1],
                CapChart::Axial,
            ) {
                if pole_distance(r, body, CapChart::Axial, a1).is_none_or(|dd| dd > margin) {
                    pair.finger_coords = [a1, a2];
                    pair.chart = CapChart::Axial;
                    return true;
                }
            }
        }
        return false;
    }
    let target = match pair.chart {
        CapChart::Axial => CapChart::TiltedX,
        CapChart::TiltedX => CapChart::Axial,
    };
    if let Some((a1, a2)) = crate::model::chart::convert_cap_coords(
        r,
        body,
        pair.chart,
        pair.finger_coords[0],
        pair.finger_coords[1],
        target,
    ) {
        if pole_distance(r, body, target, a1).is_none_or(|dd| dd > margin) {
            pair.finger_coords = [a1, a2];
            pair.chart = target;
            return true;
        }
    }
    false
}

/// Reset the contact-frame spin so that the tool frame's x-axis coincides
/// with the finger frame's x-axis (the storage gauge).
pub fn canonicalize_spin(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    pose: &HandPose6D,
    pair: &mut ContactPair,
) -> Result<()> {
    let unspun = SurfaceCoords::new(pair.tool_coords.a1, pair.tool_coords.a2, 0.0);
    let tj = tool_surface_jet(tool, &unspun)?;
    let t_oh = pose.to_transform();
    let roots = finger_roots(d);
    let t_or = t_oh.mul(&roots[pair.finger]);
    let fj = finger_surface_jet(
        tmpl,
        d,
        &pair.finger_joints,
        pair.chart,
        pair.finger_coords[0],
        pair.finger_coords[1],
    )?;
    let x_p = t_or.rot * fj.transform.rot.column(0);
    let v = tj.transform.rot.transpose() * x_p;
    pair.tool_coords.spin = v.y.atan2(v.x);
    Ok(())
}

/// Gauss-Newton projection of one contact's surface coordinates back onto
/// the contact manifold (hand pose and joints held fixed). Damped so that a
/// separation gap, which tangential moves cannot close, does not explode the
/// step. Returns the final mixed-unit residual norm.
pub fn project_contact(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    pose: &HandPose6D,
    pair: &mut ContactPair,
    iterations: usize,
) -> Result<f64> {
    let mut damping = 1e-8;
    let mut best = f64::INFINITY;
    for _ in 0..iterations {
        let a = assemble_contact(tmpl, d, tool, pose, pair)?;
        let dp = a.tool_point - a.finger_point;
        let dzv = a.tool_frame.column(2) + a.finger_frame.column(2);
        let x = a.tool_frame.column(0).into_owned();
        let y = a.tool_frame.column(1).into_owned();
        let r = nalgebra::Vector5::new(dp.x, dp.y, dp.z, x.dot(&dzv), y.dot(&dzv));
        let norm = residual_of(&r, tool);
        if norm < 1e-12 {
            return Ok(norm);
        }
        best = best.min(norm);
        // columns: a_t1, a_t2, a_f1, a_f2
        let mut j = nalgebra::SMatrix::<f64, 5, 4>::zeros();
        for (col, jet, tool_side) in [
            (0usize, &a.tool_d[1], true),
            (1, &a.tool_d[2], true),
            (2, &a.finger_d[3], false),
            (3, &a.finger_d[4], false),
        ] {
            let sign = if tool_side { 1.0 } else { -1.0 };
            for i in 0..3 {
                j[(i, col)] = sign * jet.dp[i];
            }
            j[(3, col)] = x.dot(&jet.dz);
            j[(4, col)] = y.dot(&jet.dz);
            if tool_side {
                // projection basis rotates with the tool coordinates
                j[(3, col)] += jet.dx.dot(&dzv);
                j[(4, col)] += jet.dy.dot(&dzv);
            }
        }
        let jt = j.transpose();
        let h = jt * j + nalgebra::SMatrix::<f64, 4, 4>::identity() * damping;
        let g = jt * r;
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&(-g)),
            None => return Err(FphandError::Solver("contact projection Hessian singular".into())),
        };
        let max_step = 0.5 * d.finger_radius;
        let scale = (max_step / step.amax().max(1e-12)).min(1.0);
        pair.tool_coords.a1 += scale * step[0];
        pair.tool_coords.a2 += scale * step[1];
        pair.finger_coords[0] += scale * step[2];
        pair.finger_coords[1] += scale * step[3];
        damping = (damping * 0.5).max(1e-10);
    }
    let a = assemble_contact(tmpl, d, tool, pose, pair)?;
    let dp = a.tool_point - a.finger_point;
    let dzv = a.tool_frame.column(2) + a.finger_frame.column(2);
    let x = a.tool_frame.column(0).into_owned();
    let y = a.tool_frame.column(1).into_owned();
    let r = nalgebra::Vector5::new(dp.x, dp.y, dp.z, x.dot(&dzv), y.dot(&dzv));
    Ok(residual_of(&r, tool))
}

fn residual_of(r: &nalgebra::Vector5<f64>, tool: &ToolGeom) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        worst = worst.max(r[i].abs());
    }
    worst = worst.max(tool.radius * r[3].abs());
    worst.max(tool.radius * r[4].abs())
}
