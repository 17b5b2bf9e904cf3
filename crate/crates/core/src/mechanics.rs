//! Static-equilibrium feasibility of the tool under a tip force, joint
//! torques, and collision clearances.
//!
//! Equilibrium is evaluated on the tool alone (the tool is massless): the
//! contact forces, constrained to linearized friction pyramids with a
//! minimum normal component, must balance the tip wrench. The solver
//! returns the minimum-Euclidean-norm feasible force set, which also feeds
//! the torque metric deterministically.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{assemble_all, AssembledContact, RotationAxis, SystemState};
use crate::error::{FphandError, Result};
use crate::geom::skew;
use crate::model::{
    finger_roots, hand_fk, DesignParams, FingerJoints, FpSpec, HandPose6D, LinkCapsule, Template, ToolGeom,
    NUM_FINGERS,
};
use crate::solve::{solve_qp, QpProblem, QpStatus};

/// Linearized Coulomb friction model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrictionModel {
    /// Friction coefficient.
    pub mu: f64,
    /// Friction-pyramid side count (inner approximation of the cone).
    pub n_facets: usize,
    /// Minimum normal force per contact, N.
    pub f_normal_min: f64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self {
            mu: 0.8,
            n_facets: 8,
            f_normal_min: 0.1,
        }
    }
}

impl FrictionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || self.n_facets < 4 || self.f_normal_min < 0.0 {
            return Err(FphandError::Config(
                "friction model needs mu > 0, n_facets >= 4, f_normal_min >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Facet rows `t_k . f_t <= mu_eff * f_z` as `a . f >= 0` rows in the
    /// contact frame. Inner (inscribed) pyramid.
    pub fn facet_rows(&self) -> Vec<[f64; 3]> {
        let m = self.n_facets;
        let mu_eff = self.mu * (std::f64::consts::PI / m as f64).cos();
        (0..m)
            .map(|k| {
                let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                [-ang.cos(), -ang.sin(), mu_eff]
            })
            .collect()
    }
}

/// External force at the tool's tip.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TipForce {
    /// Magnitude, N.
    pub magnitude: f64,
}

impl Default for TipForce {
    fn default() -> Self {
        Self { magnitude: 10.0 }
    }
}

/// Equilibrium outcome: per-contact forces in contact-frame coordinates
/// (x, y tangential; z normal) when feasible.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub feasible: bool,
    /// Minimum-norm feasible forces, one per contact, N (contact frame).
    pub forces: Vec<Vector3<f64>>,
}

/// Wrench-balance feasibility of the tool under `force_world` applied at the
/// tip, with contact forces inside their friction pyramids. Degenerate
/// grasp matrices report as infeasible.
pub fn equilibrium_feasible(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
    force_world: &Vector3<f64>,
    fric: &FrictionModel,
) -> Result<EquilibriumResult> {
    if state.contacts.len() != fp.n_contacts() {
        return Err(FphandError::Dimension {
            expected: fp.n_contacts(),
            got: state.contacts.len(),
        });
    }
    let asm = assemble_all(tmpl, d, tool, state)?;
    equilibrium_from_assembled(&asm, tool, force_world, fric)
}

pub fn equilibrium_from_assembled(
    asm: &[AssembledContact],
    tool: &ToolGeom,
    force_world: &Vector3<f64>,
    fric: &FrictionModel,
) -> Result<EquilibriumResult> {
    let n = asm.len();
    let dim = 3 * n;
    // wrench rows: force balance (3) + torque balance (3, scaled to force units)
    let torque_scale = 1.0 / tool.length.max(1.0);
    let mut a_eq = DMatrix::zeros(6, dim);
    for (c, a) in asm.iter().enumerate() {
        let r = a.tool_frame; // columns map contact-frame force to {O}
        let px = skew(&a.tool_point) * r;
        for i in 0..3 {
            for k in 0..3 {
                a_eq[(i, 3 * c + k)] = r[(i, k)];
                a_eq[(3 + i, 3 * c + k)] = torque_scale * px[(i, k)];
            }
        }
    }
    let tip = tool.tip_point();
    let tip_torque = tip.cross(force_world);
    let mut b_eq = DVector::zeros(6);
    for i in 0..3 {
        b_eq[i] = -force_world[i];
        b_eq[3 + i] = -torque_scale * tip_torque[i];
    }

    let facets = fric.facet_rows();
    let mut a_in = DMatrix::zeros(n * (facets.len() + 1), dim);
    let mut b_in = DVector::zeros(n * (facets.len() + 1));
    let mut row = 0;
    for c in 0..n {
        for f in &facets {
            for k in 0..3 {
                a_in[(row, 3 * c + k)] = f[k];
            }
            row += 1;
        }
        a_in[(row, 3 * c + 2)] = 1.0;
        b_in[row] = fric.f_normal_min;
        row += 1;
    }

    let mut qp = QpProblem::new(DMatrix::identity(dim, dim), DVector::zeros(dim));
    qp.a_eq = a_eq;
    qp.b_eq = b_eq;
    qp.a_in = a_in;
    qp.b_in = b_in;
    let sol = solve_qp(&qp, 1e-9, 400)?;
    match sol.status {
        QpStatus::Optimal => Ok(EquilibriumResult {
            feasible: true,
            forces: (0..n)
                .map(|c| Vector3::new(sol.x[3 * c], sol.x[3 * c + 1], sol.x[3 * c + 2]))
                .collect(),
        }),
        _ => Ok(EquilibriumResult {
            feasible: false,
            forces: Vec::new(),
        }),
    }
}

/// Tip force along the tip's path tangent for the given rotation direction;
/// `opposing = true` gives the cutting-resistance direction.
pub fn tip_force_world(
    axis: &RotationAxis,
    tool: &ToolGeom,
    direction: f64,
    magnitude: f64,
    opposing: bool,
) -> Result<Vector3<f64>> {
    let tangent = axis.tip_tangent(tool)?;
    let sign = if opposing { -direction } else { direction };
    Ok(tangent * (sign * magnitude))
}

/// FP acceptance statics: feasibility under the tip force for BOTH rotation
/// directions.
pub fn equilibrium_both_directions(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    state: &SystemState,
    axis: &RotationAxis,
    tip: &TipForce,
    fric: &FrictionModel,
) -> Result<bool> {
    let asm = assemble_all(tmpl, d, tool, state)?;
    for dir in [1.0, -1.0] {
        let f = tip_force_world(axis, tool, dir, tip.magnitude, true)?;
        if !equilibrium_from_assembled(&asm, tool, &f, fric)?.feasible {
            return Ok(false);
        }
    }
    let _ = fp;
    Ok(true)
}

/// Joint torques that resist the given contact forces: `tau = J^T (-f)` per
/// contacting finger, N*mm. Returns one 3-vector per contact, aligned with
/// the state's contact order.
pub fn joint_torques(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    state: &SystemState,
    forces: &[Vector3<f64>],
) -> Result<Vec<[f64; 3]>> {
    let asm = assemble_all(tmpl, d, tool, state)?;
    if forces.len() != asm.len() {
        return Err(FphandError::Dimension {
            expected: asm.len(),
            got: forces.len(),
        });
    }
    let mut out = Vec::with_capacity(asm.len());
    for (a, f) in asm.iter().zip(forces) {
        let f_world = a.tool_frame * f; // force on the tool
        let on_finger = -f_world;
        let tau = [
            a.finger_d[0].dp.dot(&on_finger),
            a.finger_d[1].dp.dot(&on_finger),
            a.finger_d[2].dp.dot(&on_finger),
        ];
        out.push(tau);
    }
    Ok(out)
}

/// Shortest distance between two segments plus the closest points.
/// Handles degenerate (zero-length) and parallel segments.
pub fn segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (f64, Vector3<f64>, Vector3<f64>) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= 1e-30 && e <= 1e-30 {
        s = 0.0;
        t = 0.0;
    } else if a <= 1e-30 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-30 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_val = if denom > 1e-30 * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0 // parallel: pick the p1 end, clamp fixes the rest
            };
            let mut t_val = (b * s_val + f) / e;
            if t_val < 0.0 {
                t_val = 0.0;
                s_val = (-c / a).clamp(0.0, 1.0);
            } else if t_val > 1.0 {
                t_val = 1.0;
                s_val = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_val;
            t = t_val;
        }
    }
    let cp1 = p1 + d1 * s;
    let cp2 = p2 + d2 * t;
    ((cp1 - cp2).norm(), cp1, cp2)
}

/// Identifies one clearance entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionPairId {
    /// `(finger_a, link_a, finger_b, link_b)` with link 0 = proximal.
    FingerFinger(usize, usize, usize, usize),
    /// `(finger, link)` against the tool body.
    ToolLink(usize, usize),
}

#[derive(Debug, Clone)]
pub struct CollisionReport {
    pub pairs: Vec<(CollisionPairId, f64)>,
    pub min_clearance: f64,
}

/// Collision margin + clearance configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CollisionConfig {
    /// Extra clearance subtracted from every pair, mm.
    pub margin: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self { margin: 1.0 }
    }
}

/// All checked clearances: every finger-finger link pair plus the tool
/// against every link except the contacting fingers' distal links.
pub fn collision_report(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
    margin: f64,
) -> CollisionReport {
    let geo = hand_fk(tmpl, d, pose, joints);
    let (t0, t1) = tool.axis_segment();
    let mut pairs = Vec::new();
    let mut min_clearance = f64::INFINITY;
    for fa in 0..NUM_FINGERS {
        for fb in fa + 1..NUM_FINGERS {
            for la in 0..2 {
                for lb in 0..2 {
                    let a = &geo.links[fa][la];
                    let b = &geo.links[fb][lb];
                    let (dist, _, _) = segment_distance(&a.p0, &a.p1, &b.p0, &b.p1);
                    let clearance = dist - a.radius - b.radius - margin;
                    min_clearance = min_clearance.min(clearance);
                    pairs.push((CollisionPairId::FingerFinger(fa, la, fb, lb), clearance));
                }
            }
        }
    }
    for f in 0..NUM_FINGERS {
        for l in 0..2 {
            // contacting fingers' distal links touch the tool by design
            if l == 1 && fp.contact_fingers.contains(&f) {
                continue;
            }
            let a = &geo.links[f][l];
            let (dist, _, _) = segment_distance(&a.p0, &a.p1, &t0, &t1);
            let clearance = dist - a.radius - tool.radius - margin;
            min_clearance = min_clearance.min(clearance);
            pairs.push((CollisionPairId::ToolLink(f, l), clearance));
        }
    }
    CollisionReport { pairs, min_clearance }
}

/// Clearance vector in a fixed order (matches [`collision_report`]).
pub fn collision_values(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
    margin: f64,
) -> Vec<f64> {
    collision_report(tmpl, d, fp, tool, pose, joints, margin)
        .pairs
        .into_iter()
        .map(|(_, c)| c)
        .collect()
}

/// Gradient support: endpoint positions and their partials for one link.
struct LinkJet {
    p0: Vector3<f64>,
    p1: Vector3<f64>,
    /// endpoint partials w.r.t. (3 joint angles) then (6 pose coords)
    d0: [Vector3<f64>; 9],
    d1: [Vector3<f64>; 9],
}

fn link_jets(
    tmpl: &Template,
    d: &DesignParams,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
) -> [[LinkJet; 2]; NUM_FINGERS] {
    use crate::geom::{rot_x, rot_y};
    let t_oh = pose.to_transform();
    let jl = crate::geom::so3_left_jacobian(&pose.rotation_vec());
    let roots = finger_roots(d);
    let lp = d.proximal_len(tmpl);
    let body = d.distal_body_len();
    std::array::from_fn(|f| {
        let t_or = t_oh.mul(&roots[f]);
        let u = &joints[f];
        let r_mcp = rot_x(u.mcp_flexion) * rot_y(u.mcp_abduction);
        let r_dist = r_mcp * rot_x(u.ip_flexion);
        let root = t_or.pos;
        let ip = t_or.transform_point(&(r_mcp * Vector3::new(0.0, 0.0, lp)));
        let capc = t_or.transform_point(&(r_mcp * Vector3::new(0.0, 0.0, lp) + r_dist * Vector3::new(0.0, 0.0, body)));
        let w1 = t_or.rot * Vector3::new(1.0, 0.0, 0.0);
        let w2 = t_or.rot * (rot_x(u.mcp_flexion) * Vector3::new(0.0, 1.0, 0.0));
        let w3 = t_or.rot * (r_mcp * Vector3::new(1.0, 0.0, 0.0));
        let joint_d = |p: &Vector3<f64>| -> [Vector3<f64>; 9] {
            let mut out = [Vector3::zeros(); 9];
            out[0] = w1.cross(&(p - root));
            out[1] = w2.cross(&(p - root));
            out[2] = w3.cross(&(p - ip));
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = 1.0;
                out[3 + k] = e;
                out[6 + k] = -skew(&(p - t_oh.pos)) * jl.column(k).into_owned();
            }
            out
        };
        let mut d_ip = joint_d(&ip);
        d_ip[2] = Vector3::zeros(); // IP joint does not move its own pivot
        let d_cap = joint_d(&capc);
        let mut d_root = joint_d(&root);
        d_root[0] = Vector3::zeros();
        d_root[1] = Vector3::zeros();
        d_root[2] = Vector3::zeros();
        [
            LinkJet {
                p0: root,
                p1: ip,
                d0: d_root,
                d1: d_ip,
            },
            LinkJet {
                p0: ip,
                p1: capc,
                d0: d_ip,
                d1: d_cap,
            },
        ]
    })
}

/// Clearances plus analytic gradients w.r.t. `[theta_h(6), u_f(3) per
/// contact in contact order]` (the collision-relevant slice of the state).
/// Row order matches [`collision_values`].
pub struct CollisionJet {
    pub values: Vec<f64>,
    /// one row per pair; columns: 6 pose + 3 per contacting finger
    pub grads: DMatrix<f64>,
}

pub fn collision_jet(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
    margin: f64,
) -> CollisionJet {
    let jets = link_jets(tmpl, d, pose, joints);
    let (t0, t1) = tool.axis_segment();
    let ncols = 6 + 3 * fp.n_contacts();
    let mut values = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();

    let contact_slot = |f: usize| fp.contact_fingers.iter().position(|&cf| cf == f);

    let mut push_pair = |a: &LinkJet, ra: f64, fa: usize, b: Option<(&LinkJet, f64, usize)>| {
        let (dist, ca, cb, sa, sb) = match b {
            Some((bj, _, _)) => {
                let (dist, ca, cb) = segment_distance(&a.p0, &a.p1, &bj.p0, &bj.p1);
                let la = (a.p1 - a.p0).norm_squared();
                let sa = if la > 1e-30 { (ca - a.p0).dot(&(a.p1 - a.p0)) / la } else { 0.0 };
                let lb = (bj.p1 - bj.p0).norm_squared();
                let sb = if lb > 1e-30 { (cb - bj.p0).dot(&(bj.p1 - bj.p0)) / lb } else { 0.0 };
                (dist, ca, cb, sa, sb)
            }
            None => {
                let (dist, ca, cb) = segment_distance(&a.p0, &a.p1, &t0, &t1);
                let la = (a.p1 - a.p0).norm_squared();
                let sa = if la > 1e-30 { (ca - a.p0).dot(&(a.p1 - a.p0)) / la } else { 0.0 };
                (dist, ca, cb, sa, 0.0)
            }
        };
        let rb = match b {
            Some((_, r, _)) => r,
            None => tool.radius,
        };
        values.push(dist - ra - rb - margin);
        let gap = ca - cb;
        let dhat = if dist > 1e-9 { gap / dist } else { Vector3::zeros() };
        let mut row = DVector::zeros(ncols);
        // closest point on a moves as (1-sa) d0 + sa d1 (envelope theorem)
        let add_side = |row: &mut DVector<f64>, jet: &LinkJet, s: f64, finger: usize, sign: f64| {
            let slot = contact_slot(finger);
            for k in 0..9 {
                let dp = jet.d0[k] * (1.0 - s) + jet.d1[k] * s;
                let g = sign * dhat.dot(&dp);
                match k {
                    0..=2 => {
                        if let Some(sl) = slot {
                            row[6 + 3 * sl + k] += g;
                        }
                        // idle-finger joints are fixed: no column
                    }
                    _ => row[k - 3] += g,
                }
            }
        };
        add_side(&mut row, a, sa, fa, 1.0);
        if let Some((bj, _, fb)) = b {
            add_side(&mut row, bj, sb, fb, -1.0);
        }
        rows.push(row);
    };

    for fa in 0..NUM_FINGERS {
        for fb in fa + 1..NUM_FINGERS {
            for la in 0..2 {
                for lb in 0..2 {
                    push_pair(
                        &jets[fa][la],
                        d.finger_radius,
                        fa,
                        Some((&jets[fb][lb], d.finger_radius, fb)),
                    );
                }
            }
        }
    }
    for f in 0..NUM_FINGERS {
        for l in 0..2 {
            if l == 1 && fp.contact_fingers.contains(&f) {
                continue;
            }
            push_pair(&jets[f][l], d.finger_radius, f, None);
        }
    }

    let mut grads = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        grads.row_mut(i).copy_from(&r.transpose());
    }
    CollisionJet { values, grads }
}

/// Clearance derivative w.r.t. a rigid rotation of the whole hand about an
/// axis (the tool stays put): only tool-vs-link rows are affected.
pub fn collision_axis_rates(
    tmpl: &Template,
    d: &DesignParams,
    fp: &FpSpec,
    tool: &ToolGeom,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
    axis: &RotationAxis,
) -> Vec<f64> {
    let geo = hand_fk(tmpl, d, pose, joints);
    let (t0, t1) = tool.axis_segment();
    let mut rates = Vec::new();
    for fa in 0..NUM_FINGERS {
        for _fb in fa + 1..NUM_FINGERS {
            for _ in 0..4 {
                rates.push(0.0); // finger-finger pairs ride the same rigid motion
            }
        }
    }
    for f in 0..NUM_FINGERS {
        for l in 0..2 {
            if l == 1 && fp.contact_fingers.contains(&f) {
                continue;
            }
            let a: &LinkCapsule = &geo.links[f][l];
            let (dist, ca, cb) = segment_distance(&a.p0, &a.p1, &t0, &t1);
            if dist < 1e-9 {
                rates.push(0.0);
                continue;
            }
            let dhat = (ca - cb) / dist;
            // hand rotates at -1 about the axis per unit tool rate
            let v = -axis.point_velocity(&ca);
            rates.push(dhat.dot(&v));
        }
    }
    rates
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn segment_distance_basics() {
        let z = Vector3::zeros();
        let ex = Vector3::new(1.0, 0.0, 0.0);
        // collinear overlapping
        let (d, _, _) = segment_distance(&z, &(ex * 2.0), &ex, &(ex * 3.0));
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        // parallel offset by (0,0,3)
        let off = Vector3::new(0.0, 0.0, 3.0);
        let (d, _, _) = segment_distance(&z, &ex, &off, &(ex + off));
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);
        // degenerate points
        let (d, _, _) = segment_distance(&z, &z, &off, &off);
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);
    }

    /// Derivative-free oracle: multi-level grid refinement over (s, t).
    pub fn segment_distance_grid(
        p1: &Vector3<f64>,
        q1: &Vector3<f64>,
        p2: &Vector3<f64>,
        q2: &Vector3<f64>,
    ) -> f64 {
        let eval = |s: f64, t: f64| {
            let a = p1 + (q1 - p1) * s;
            let b = p2 + (q2 - p2) * t;
            (a - b).norm()
        };
        let (mut s_lo, mut s_hi, mut t_lo, mut t_hi) = (0.0_f64, 1.0_f64, 0.0_f64, 1.0_f64);
        let mut best = (0.0, 0.0, f64::INFINITY);
        for level in 0..12 {
            let steps = if level == 0 { 48 } else { 12 };
            for i in 0..=steps {
                for jj in 0..=steps {
                    let s = s_lo + (s_hi - s_lo) * i as f64 / steps as f64;
                    let t = t_lo + (t_hi - t_lo) * jj as f64 / steps as f64;
                    let v = eval(s, t);
                    if v < best.2 {
                        best = (s, t, v);
                    }
                }
            }
            let ds = (s_hi - s_lo) / steps as f64;
            let dt = (t_hi - t_lo) / steps as f64;
            s_lo = (best.0 - 1.5 * ds).max(0.0);
            s_hi = (best.0 + 1.5 * ds).min(1.0);
            t_lo = (best.1 - 1.5 * dt).max(0.0);
            t_hi = (best.1 + 1.5 * dt).min(1.0);
        }
        best.2
    }

    #[test]
    fn segment_distance_matches_grid_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let mut rv = |rng: &mut rand_chacha::ChaCha8Rng| {
            Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            )
        };
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let (p1, q1, p2, q2) = (rv(&mut rng), rv(&mut rng), rv(&mut rng), rv(&mut rng));
            let (d, _, _) = segment_distance(&p1, &q1, &p2, &q2);
            let g = segment_distance_grid(&p1, &q1, &p2, &q2);
            worst = worst.max((d - g).abs());
            assert!(d <= g + 1e-9, "closed form must lower-bound any grid sample");
        }
        assert!(worst < 1e-4, "worst gap {worst}");
    }

    #[test]
    fn segment_distance_symmetric_and_rigid_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut rv = || {
                Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                )
            };
            let (p1, q1, p2, q2) = (rv(), rv(), rv(), rv());
            let (d1, _, _) = segment_distance(&p1, &q1, &p2, &q2);
            let (d2, _, _) = segment_distance(&p2, &q2, &p1, &q1);
            assert_abs_diff_eq!(d1, d2, epsilon = 1e-12);
            let rot = crate::geom::rot_exp(&Vector3::new(0.3, -0.7, 0.5));
            let t = Vector3::new(4.0, -2.0, 9.0);
            let m = |v: &Vector3<f64>| rot * v + t;
            let (d3, _, _) = segment_distance(&m(&p1), &m(&q1), &m(&p2), &m(&q2));
            assert_abs_diff_eq!(d1, d3, epsilon = 1e-9);
        }
    }
}
