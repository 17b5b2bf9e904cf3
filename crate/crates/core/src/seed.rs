//! Built-in seed construction: a hand design placed exactly at all three
//! foundational poses.
//!
//! Each FP has a fixed contact layout on the tool surface. The constructor
//! searches deterministically over palm poses, solves the analytic finger
//! IK to place every fingertip cap tangent to the tool at its layout point,
//! polishes the pose with the FP optimization, and verifies the full
//! acceptance conditions. The result bootstraps the sampler.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::contact::{canonicalize_spin, reach_fp_residual, residual_mm_norm, ContactPair, SystemState};
use crate::error::{FphandError, Result};
use crate::geom::RigidTransform;
use crate::model::chart::CapChart;
use crate::model::{
    finger_ik, finger_roots, standardize, CostSelector, DesignBounds, DesignParams, FingerJoints, FpBounds,
    FpName, FpSpec, HandPose6D, RotationAxisRule, SurfaceCoords, Template, ToolGeom,
};
use crate::sampler::{check_fp_acceptance, full_joints, solve_fp, FpSolveContext, FpSolved};

/// One layout contact: which finger touches the tool where.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayoutContact {
    pub finger: usize,
    pub a1: f64,
    pub a2: f64,
}

/// Fixed tool-surface contact layout of one FP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpLayout {
    pub name: FpName,
    pub contacts: Vec<LayoutContact>,
    pub stationary: Vec<usize>,
    /// Axial box halfwidth for moving contacts; `None` uses the config
    /// default. Carve keeps a tight box to protect its moment-arm stagger.
    #[serde(default)]
    pub moving_a1_halfwidth: Option<f64>,
}

/// Default FP topologies. The stationary pinch of poke/press runs along the
/// tool's x-diameter; carve grips a staggered triangle. Finger 2 is the
/// non-thumb finger adjacent to the thumb; finger 3 is the thumb.
pub fn default_layouts() -> Vec<FpLayout> {
    use std::f64::consts::PI;
    vec![
        FpLayout {
            name: FpName::Carve,
            contacts: vec![
                LayoutContact { finger: 1, a1: 112.0, a2: 0.6 },
                LayoutContact { finger: 2, a1: 85.0, a2: -0.6 },
                LayoutContact { finger: 3, a1: 98.0, a2: PI },
            ],
            stationary: vec![],
            moving_a1_halfwidth: Some(4.0),
        },
        FpLayout {
            name: FpName::Poke,
            contacts: vec![
                LayoutContact { finger: 2, a1: 55.0, a2: 0.0 },
                LayoutContact { finger: 3, a1: 55.0, a2: PI },
                LayoutContact { finger: 1, a1: 95.0, a2: PI / 2.0 },
                LayoutContact { finger: 0, a1: 95.0, a2: -PI / 2.0 },
            ],
            stationary: vec![0, 1],
            moving_a1_halfwidth: Some(25.0),
        },
        FpLayout {
            name: FpName::Press,
            contacts: vec![
                LayoutContact { finger: 2, a1: 55.0, a2: 0.0 },
                LayoutContact { finger: 3, a1: 55.0, a2: PI },
                LayoutContact { finger: 1, a1: 95.0, a2: PI / 2.0 },
                LayoutContact { finger: 0, a1: 15.0, a2: PI / 2.0 },
            ],
            stationary: vec![0, 1],
            moving_a1_halfwidth: Some(25.0),
        },
    ]
}

/// Halfwidths and joint limits for the per-FP state boxes built around the
/// seed states.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FpBoundsConfig {
    pub hand_translation: f64,
    pub hand_rotation: f64,
    pub tool_spin: f64,
    /// Axial freedom of moving contacts on the tool, mm.
    pub tool_a1: f64,
    /// Axial freedom of stationary pinch contacts, mm (tight: the pinch
    /// chord must stay transverse to act as a revolute joint).
    pub stationary_tool_a1: f64,
    pub tool_a2: f64,
    pub joint_lo: [f64; 3],
    pub joint_hi: [f64; 3],
    pub finger_a1: f64,
    pub finger_a2: f64,
}

impl Default for FpBoundsConfig {
    fn default() -> Self {
        Self {
            hand_translation: 40.0,
            hand_rotation: 0.45,
            tool_spin: 7.0,
            tool_a1: 8.0,
            stationary_tool_a1: 0.05,
            tool_a2: 0.2,
            joint_lo: [-0.5, -0.7, 0.02],
            joint_hi: [1.9, 0.7, 2.25],
            finger_a1: 30.0,
            finger_a2: 1.5,
        }
    }
}

/// Build the per-variable box for one FP around a reference state vector.
pub fn build_fp_bounds(
    cfg: &FpBoundsConfig,
    n_contacts: usize,
    stationary: &[usize],
    moving_a1_halfwidth: Option<f64>,
    center: &DVector<f64>,
) -> FpBounds {
    let dim = 8 * n_contacts + 6;
    assert_eq!(center.len(), dim);
    let mut lo = vec![0.0; dim];
    let mut hi = vec![0.0; dim];
    for k in 0..3 {
        lo[k] = center[k] - cfg.hand_translation;
        hi[k] = center[k] + cfg.hand_translation;
        lo[3 + k] = center[3 + k] - cfg.hand_rotation;
        hi[3 + k] = center[3 + k] + cfg.hand_rotation;
    }
    for c in 0..n_contacts {
        let a1_half = if stationary.contains(&c) {
            cfg.stationary_tool_a1
        } else {
            moving_a1_halfwidth.unwrap_or(cfg.tool_a1)
        };
        let o = 6 + 3 * c;
        lo[o] = center[o] - cfg.tool_spin;
        hi[o] = center[o] + cfg.tool_spin;
        lo[o + 1] = center[o + 1] - a1_half;
        hi[o + 1] = center[o + 1] + a1_half;
        lo[o + 2] = center[o + 2] - cfg.tool_a2;
        hi[o + 2] = center[o + 2] + cfg.tool_a2;
        let o = 6 + 3 * n_contacts + 5 * c;
        for k in 0..3 {
            lo[o + k] = cfg.joint_lo[k];
            hi[o + k] = cfg.joint_hi[k];
        }
        lo[o + 3] = center[o + 3] - cfg.finger_a1;
        hi[o + 3] = center[o + 3] + cfg.finger_a1;
        lo[o + 4] = center[o + 4] - cfg.finger_a2;
        hi[o + 4] = center[o + 4] + cfg.finger_a2;
    }
    FpBounds { lo, hi }
}

/// FP specs with bounds centered on the given states.
pub fn specs_from_layouts(
    layouts: &[FpLayout],
    bounds_cfg: &FpBoundsConfig,
    centers: &[(FpName, DVector<f64>)],
) -> Result<Vec<FpSpec>> {
    layouts
        .iter()
        .map(|l| {
            let n = l.contacts.len();
            let center = centers
                .iter()
                .find(|(name, _)| *name == l.name)
                .map(|(_, c)| c.clone())
                .ok_or_else(|| FphandError::Seed(format!("no center state for {}", l.name)))?;
            let spec = FpSpec {
                name: l.name,
                contact_fingers: l.contacts.iter().map(|c| c.finger).collect(),
                stationary_contacts: l.stationary.clone(),
                axis_rule: match l.name {
                    FpName::Carve => RotationAxisRule::CentroidPerp,
                    _ => RotationAxisRule::PinchLine,
                },
                cost: match l.name {
                    FpName::Carve => CostSelector::CarveMoment,
                    _ => CostSelector::PinchAlignment,
                },
                bounds: build_fp_bounds(bounds_cfg, n, &l.stationary, l.moving_a1_halfwidth, &center),
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

/// A design plus its exact per-FP states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seed {
    pub design: DesignParams,
    pub states: Vec<FpSolved>,
}

/// Midpoint of the design box: the default seed design.
pub fn default_seed_design(bounds: &DesignBounds) -> DesignParams {
    DesignParams::from_array(std::array::from_fn(|i| 0.5 * (bounds.lo[i] + bounds.hi[i])))
}

struct IkPlacement {
    joints: FingerJoints,
    finger_coords: [f64; 2],
}

/// Place one fingertip cap tangent to the tool at the layout point, given a
/// candidate hand pose. Exact when it succeeds.
fn place_fingertip(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    t_oh: &RigidTransform,
    lc: &LayoutContact,
    joints_cfg: &FpBoundsConfig,
) -> Option<IkPlacement> {
    let (s2, c2) = lc.a2.sin_cos();
    let surface = Vector3::new(tool.radius * c2, tool.radius * s2, lc.a1);
    let outward = Vector3::new(c2, s2, 0.0);
    let center = surface + outward * d.finger_radius;

    let roots = finger_roots(d);
    let t_or = t_oh.mul(&roots[lc.finger]);
    let local = t_or.inverse().transform_point(&center);
    let joints = finger_ik(tmpl, d, &local)?;
    let ja = joints.to_array();
    for k in 0..3 {
        if ja[k] < joints_cfg.joint_lo[k] + 0.02 || ja[k] > joints_cfg.joint_hi[k] - 0.02 {
            return None;
        }
    }
    // contact direction in the distal-link frame must lie on the cap,
    // comfortably away from both the seam and the pole
    let r_dist = t_or.rot
        * crate::geom::rot_x(joints.mcp_flexion)
        * crate::geom::rot_y(joints.mcp_abduction)
        * crate::geom::rot_x(joints.ip_flexion);
    let dir_local = r_dist.transpose() * (-outward);
    let psi = dir_local.z.clamp(-1.0, 1.0).asin();
    if psi < 0.17 || psi > std::f64::consts::FRAC_PI_2 - 0.25 {
        return None;
    }
    let a_f1 = d.distal_body_len() + d.finger_radius * psi;
    let a_f2 = dir_local.y.atan2(dir_local.x);
    Some(IkPlacement {
        joints,
        finger_coords: [a_f1, a_f2],
    })
}

/// Best-effort placement when exact tangency is unreachable: IK toward the
/// clamped target, joints clamped into limits, fingertip coordinates at the
/// mid-cap point facing the tool. Returns the placement plus its position
/// gap (mm); the polish NLP closes the gap.
fn relaxed_fingertip(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    t_oh: &RigidTransform,
    lc: &LayoutContact,
    joints_cfg: &FpBoundsConfig,
) -> (IkPlacement, f64) {
    let (s2, c2) = lc.a2.sin_cos();
    let surface = Vector3::new(tool.radius * c2, tool.radius * s2, lc.a1);
    let outward = Vector3::new(c2, s2, 0.0);
    let center = surface + outward * d.finger_radius;
    let roots = finger_roots(d);
    let t_or = t_oh.mul(&roots[lc.finger]);
    let local = t_or.inverse().transform_point(&center);

    let lp = d.proximal_len(tmpl);
    let ldc = d.distal_body_len();
    let reach = local.norm().clamp((lp - ldc).abs() + 1.0, lp + ldc - 1.0);
    let target = if local.norm() > 1e-9 { local * (reach / local.norm()) } else { Vector3::new(0.0, 0.0, reach) };
    let mut joints = finger_ik(tmpl, d, &target).unwrap_or(FingerJoints::new(0.6, 0.0, 0.8));
    let ja = joints.to_array();
    let clamped = [
        ja[0].clamp(joints_cfg.joint_lo[0] + 0.02, joints_cfg.joint_hi[0] - 0.02),
        ja[1].clamp(joints_cfg.joint_lo[1] + 0.02, joints_cfg.joint_hi[1] - 0.02),
        ja[2].clamp(joints_cfg.joint_lo[2] + 0.02, joints_cfg.joint_hi[2] - 0.02),
    ];
    joints = FingerJoints::new(clamped[0], clamped[1], clamped[2]);
    // aim the mid-cap point at the tool
    let r_dist = t_or.rot
        * crate::geom::rot_x(joints.mcp_flexion)
        * crate::geom::rot_y(joints.mcp_abduction)
        * crate::geom::rot_x(joints.ip_flexion);
    let dir_local = r_dist.transpose() * (-outward);
    let psi = dir_local.z.clamp(-1.0, 1.0).asin().clamp(0.25, std::f64::consts::FRAC_PI_2 - 0.3);
    let a_f2 = if dir_local.fixed_rows::<2>(0).norm() > 1e-9 {
        dir_local.y.atan2(dir_local.x)
    } else {
        0.0
    };
    let placement = IkPlacement {
        joints,
        finger_coords: [ldc + d.finger_radius * psi, a_f2],
    };
    // actual cap-center position error
    let cap_center = t_or.transform_point(
        &(crate::geom::rot_x(joints.mcp_flexion)
            * crate::geom::rot_y(joints.mcp_abduction)
            * (Vector3::new(0.0, 0.0, lp) + crate::geom::rot_x(joints.ip_flexion) * Vector3::new(0.0, 0.0, ldc))),
    );
    (placement, (cap_center - center).norm())
}

/// Assemble a state for a candidate pose. Exact placements where possible,
/// relaxed otherwise; returns the state and its total placement gap (0 when
/// every contact is exact).
fn layout_state(
    tmpl: &Template,
    d: &DesignParams,
    tool: &ToolGeom,
    pose: &HandPose6D,
    layout: &FpLayout,
    joints_cfg: &FpBoundsConfig,
) -> Option<(SystemState, f64)> {
    let t_oh = pose.to_transform();
    let mut contacts = Vec::with_capacity(layout.contacts.len());
    let mut gap = 0.0;
    for lc in &layout.contacts {
        let p = match place_fingertip(tmpl, d, tool, &t_oh, lc, joints_cfg) {
            Some(p) => p,
            None => {
                let (p, g) = relaxed_fingertip(tmpl, d, tool, &t_oh, lc, joints_cfg);
                gap += g;
                if g > 35.0 {
                    return None; // hopeless for the polish step
                }
                p
            }
        };
        let mut pair = ContactPair {
            finger: lc.finger,
            tool_coords: SurfaceCoords::new(lc.a1, lc.a2, 0.0),
            finger_joints: p.joints,
            finger_coords: p.finger_coords,
            chart: CapChart::Axial,
        };
        canonicalize_spin(tmpl, d, tool, pose, &mut pair).ok()?;
        contacts.push(pair);
    }
    Some((
        SystemState {
            hand_pose: *pose,
            contacts,
        },
        gap,
    ))
}

/// Best rigid fit `T` minimizing the squared distances `|T*src_i - dst_i|^2`
/// (Kabsch).
fn kabsch_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> RigidTransform {
    let n = src.len() as f64;
    let sbar = src.iter().sum::<Vector3<f64>>() / n;
    let dbar = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = nalgebra::Matrix3::<f64>::zeros();
    for (a, b) in src.iter().zip(dst) {
        h += (a - sbar) * (b - dbar).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut r = vt.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let mut flip = nalgebra::Matrix3::identity();
        flip[(2, 2)] = -1.0;
        r = vt.transpose() * flip * u.transpose();
    }
    RigidTransform::new(r, dbar - r * sbar)
}

/// Deterministic search for a palm pose that realizes a layout: for a small
/// grid of reach lengths and approach angles, fit the palm so every finger
/// root sits at its preferred offset from its contact target (Kabsch), then
/// jitter around the fit. Returns scored exact states, best first.
fn search_poses(
    ctx: &FpSolveContext,
    d: &DesignParams,
    layout: &FpLayout,
    bounds_cfg: &FpBoundsConfig,
    attempts: usize,
    rng_seed: u64,
) -> Vec<(f64, SystemState)> {
    let tool = &ctx.tool;
    let targets: Vec<Vector3<f64>> = layout
        .contacts
        .iter()
        .map(|lc| {
            let (s2, c2) = lc.a2.sin_cos();
            Vector3::new(tool.radius * c2, tool.radius * s2, lc.a1)
                + Vector3::new(c2, s2, 0.0) * d.finger_radius
        })
        .collect();
    let roots = finger_roots(d);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut found: Vec<(f64, SystemState)> = Vec::new();
    let fp_spec_stub = FpSpec {
        name: layout.name,
        contact_fingers: layout.contacts.iter().map(|c| c.finger).collect(),
        stationary_contacts: layout.stationary.clone(),
        axis_rule: RotationAxisRule::CentroidPerp,
        cost: CostSelector::CarveMoment,
        bounds: FpBounds {
            lo: vec![0.0; 8 * layout.contacts.len() + 6],
            hi: vec![0.0; 8 * layout.contacts.len() + 6],
        },
    };

    let jitters_per_fit = (attempts / 250).max(4);
    let mut fits: Vec<RigidTransform> = Vec::new();
    // family A: every root at its preferred offset in its own local frame
    for &reach in &[45.0_f64, 55.0, 65.0, 75.0, 85.0] {
        for &theta in &[0.3_f64, 0.6, 0.9, 1.2] {
            for &phi in &[-0.4_f64, 0.0, 0.4] {
                // preferred target position in each root's local frame:
                // ahead along the pointing axis, bent toward the curl side
                let d_star = Vector3::new(
                    theta.sin() * phi.sin(),
                    -theta.sin() * phi.cos(),
                    theta.cos(),
                );
                let src: Vec<Vector3<f64>> = layout
                    .contacts
                    .iter()
                    .map(|lc| roots[lc.finger].transform_point(&(d_star * reach)))
                    .collect();
                fits.push(kabsch_fit(&src, &targets));
            }
        }
    }
    // family B: roots pulled toward a common palm side in the tool frame,
    // blended with each contact's outward direction
    for az_step in 0..8 {
        let az = az_step as f64 * std::f64::consts::FRAC_PI_4;
        for &elev in &[-0.5_f64, 0.0, 0.5] {
            for &rho in &[50.0_f64, 65.0, 80.0] {
                for &beta in &[0.2_f64, 0.5] {
                    let side = Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
                    let dst: Vec<Vector3<f64>> = layout
                        .contacts
                        .iter()
                        .zip(&targets)
                        .map(|(lc, x)| {
                            let (s2, c2) = lc.a2.sin_cos();
                            let outward = Vector3::new(c2, s2, 0.0);
                            let m = ((1.0 - beta) * side + beta * outward).normalize();
                            x + m * rho
                        })
                        .collect();
                    // straight-ish finger posture anchor for the fit
                    let src: Vec<Vector3<f64>> = layout
                        .contacts
                        .iter()
                        .map(|lc| roots[lc.finger].transform_point(&Vector3::new(0.0, -25.0, 55.0)))
                        .collect();
                    let mut fit_src = src;
                    let fit = kabsch_fit(&fit_src, &dst);
                    fit_src.clear();
                    fits.push(fit);
                }
            }
        }
    }

    let mut poses: Vec<HandPose6D> = Vec::new();
    for fit in &fits {
        poses.push(HandPose6D::from_transform(fit));
        for _ in 0..jitters_per_fit {
            let dp = Vector3::new(
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
            );
            let dw = Vector3::new(
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
            );
            let jittered = RigidTransform::new(crate::geom::rot_exp(&dw) * fit.rot, fit.pos + dp);
            poses.push(HandPose6D::from_transform(&jittered));
        }
    }

    let mut diag = [0usize; 4];
    for pose in &poses {
        let Some((state, gap)) = layout_state(&ctx.tmpl, d, tool, pose, layout, bounds_cfg) else {
            diag[0] += 1;
            continue;
        };
        // quick screens: collision clearance and joint-limit margins
        let joints = full_joints(&fp_spec_stub, &state, ctx.idle_joints);
        let clearances = crate::mechanics::collision_values(
            &ctx.tmpl,
            d,
            &fp_spec_stub,
            tool,
            &state.hand_pose,
            &joints,
            ctx.collision.margin,
        );
        let min_clear = clearances.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_clear < -2.0 || (gap == 0.0 && min_clear < 0.0) {
            diag[1] += 1;
            continue;
        }
        let mut margin = f64::INFINITY;
        for c in &state.contacts {
            let u = c.finger_joints.to_array();
            for k in 0..3 {
                margin = margin.min(u[k] - bounds_cfg.joint_lo[k]).min(bounds_cfg.joint_hi[k] - u[k]);
            }
        }
        let score = min_clear.min(10.0).min(0.0) + 5.0 * margin.min(0.6) - 0.8 * gap;
        found.push((score, state));
    }
    if std::env::var_os("FPHAND_SEED_TRACE").is_some() {
        let exact = found.iter().filter(|(s, _)| *s > -1e-9).count();
        eprintln!(
            "{}: {} poses, placement fail {}, collision fail {}, usable {} (exact-ish {})",
            layout.name,
            poses.len(),
            diag[0],
            diag[1],
            found.len(),
            exact
        );
    }
    found.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    found.truncate(20);
    found
}

/// Construct the built-in seed: search, polish, verify, and return the
/// design with exact per-FP states. Deterministic for a fixed `rng_seed`.
pub fn construct_seed(
    base: &FpSolveContext,
    design: &DesignParams,
    layouts: &[FpLayout],
    bounds_cfg: &FpBoundsConfig,
    rng_seed: u64,
) -> Result<Seed> {
    design.validate(&base.tmpl)?;
    let mut states = Vec::with_capacity(layouts.len());
    for layout in layouts {
        let candidates = search_poses(base, design, layout, bounds_cfg, 4000, rng_seed ^ layout.name.as_str().bytes().map(u64::from).sum::<u64>());
        if candidates.is_empty() {
            return Err(FphandError::Seed(format!(
                "{}: no feasible palm pose found for the contact layout",
                layout.name
            )));
        }
        let mut accepted = None;
        let mut failures: Vec<String> = Vec::new();
        for (_, state) in &candidates {
            // polish with bounds centered on the raw state
            let center = state.to_vector();
            let spec = specs_from_layouts(
                std::slice::from_ref(layout),
                bounds_cfg,
                &[(layout.name, center.clone())],
            )?
            .remove(0);
            let mut ctx = base.clone();
            ctx.specs = vec![spec.clone()];
            ctx.nlp.max_iter = 80;
            let (sol, solved) = solve_fp(&ctx, &spec, design, state);
            match solved {
                Some(solved) => match check_fp_acceptance(&ctx, &spec, design, &solved) {
                    Ok(()) => {
                        // a foundational pose must admit rotation in both
                        // directions: probe-plan a short path each way
                        match rotation_probe(&ctx, &spec, design, &solved.state) {
                            Ok(()) => {
                                accepted = Some(solved);
                                break;
                            }
                            Err(what) => failures.push(format!("{}: {what}", spec.name)),
                        }
                    }
                    Err(reason) => failures.push(reason.to_string()),
                },
                None => failures.push(format!("nlp {:?} viol {:.2e}", sol.status, sol.constraint_violation)),
            }
        }
        let solved = accepted.ok_or_else(|| {
            FphandError::Seed(format!(
                "{}: no searched pose survived polish + acceptance ({} candidates: {})",
                layout.name,
                candidates.len(),
                failures.join("; ")
            ))
        })?;
        states.push(solved);
    }
    Ok(Seed {
        design: *design,
        states,
    })
}

/// Probe both rotation directions with a short planned path; the seed state
/// must actually turn the tool each way.
fn rotation_probe(
    ctx: &FpSolveContext,
    spec: &FpSpec,
    d: &DesignParams,
    state: &SystemState,
) -> std::result::Result<(), String> {
    let mut cfg = crate::planner::PlanConfig {
        max_steps: 10,
        ..Default::default()
    };
    for dir in [1i8, -1] {
        cfg.direction = dir;
        match crate::planner::plan_path(ctx, d, spec, state, 0, &cfg) {
            Ok(path) => {
                if path.steps.len() < 6 {
                    let (lo, hi) = crate::sampler::effective_bounds(spec, d, &ctx.tool);
                    let v = path.steps.last().map(|s| s.state.to_vector()).unwrap_or_else(|| state.to_vector());
                    let pinned: Vec<String> = (0..v.len())
                        .filter(|&k| (v[k] - lo[k]).min(hi[k] - v[k]) < 1e-3)
                        .map(|k| format!("x[{k}]={:.3}", v[k]))
                        .collect();
                    return Err(format!(
                        "direction {dir:+}: stopped after {} steps ({:?}; at bounds: {})",
                        path.steps.len() - 1,
                        path.termination,
                        pinned.join(" ")
                    ));
                }
            }
            Err(e) => return Err(format!("direction {dir:+}: {e}")),
        }
    }
    Ok(())
}

/// Validate a seed against a fully-built context: exact residuals and the
/// bootstrap property (attempt_fps succeeds on the seed itself). Returns the
/// re-solved states to use as candidate zero.
pub fn validate_seed(ctx: &FpSolveContext, seed: &Seed) -> Result<Vec<FpSolved>> {
    seed.design.validate(&ctx.tmpl)?;
    standardize(&seed.design, &ctx.bounds)?;
    for s in &seed.states {
        let spec = ctx.spec(s.fp);
        let r = reach_fp_residual(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state)?;
        let rn = residual_mm_norm(&r, &ctx.tool);
        if rn > 1e-6 {
            return Err(FphandError::Seed(format!("{}: seed residual {rn:.2e} too large", s.fp)));
        }
    }
    crate::sampler::attempt_fps(ctx, &seed.design, &seed.states)
        .map_err(|r| FphandError::Seed(format!("bootstrap attempt_fps failed: {r}")))
}

