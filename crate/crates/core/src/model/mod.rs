//! Parametric geometry of the tool and the hand.
//!
//! The hand template has four identical 3-DoF fingers (universal MCP +
//! revolute IP, cylinder proximal link, capsule distal link) mounted on a
//! palm whose layout is controlled by six design parameters. The tool is a
//! cylinder. Both surfaces carry normalized Gauss-frame charts (z = inward
//! normal) so contacts can be expressed in surface coordinates.

pub mod chart;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FphandError, Result};
use crate::geom::{rot_x, rot_y, rot_z, RigidTransform};
use chart::{capsule_chart, cylinder_chart, CapChart, ChartJet, JetCols};

/// Fixed template constants shared by every design.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Template {
    /// Total finger length (proximal + distal), mm.
    pub total_finger_len: f64,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            total_finger_len: 100.0,
        }
    }
}

/// The six design parameters of one hand.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    /// d1: distal link length, mm.
    pub distal_len: f64,
    /// d2: palm length, mm.
    pub palm_len: f64,
    /// d3: palm half-width, mm.
    pub palm_half_width: f64,
    /// d4: finger radius, mm.
    pub finger_radius: f64,
    /// d5: palm angle, rad.
    pub palm_angle: f64,
    /// d6: thumb mounting angle, rad.
    pub thumb_angle: f64,
}

impl DesignParams {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.distal_len,
            self.palm_len,
            self.palm_half_width,
            self.finger_radius,
            self.palm_angle,
            self.thumb_angle,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            distal_len: a[0],
            palm_len: a[1],
            palm_half_width: a[2],
            finger_radius: a[3],
            palm_angle: a[4],
            thumb_angle: a[5],
        }
    }

    /// Structural validity: positive radius, fingers fit on the palm, the
    /// proximal link and the distal capsule body have positive length.
    pub fn validate(&self, tmpl: &Template) -> Result<()> {
        if !(self.finger_radius > 0.0) {
            return Err(FphandError::Design(format!(
                "finger radius must be positive, got {}",
                self.finger_radius
            )));
        }
        if !(self.palm_half_width > self.finger_radius) {
            return Err(FphandError::Design(format!(
                "palm half-width {} must exceed finger radius {}",
                self.palm_half_width, self.finger_radius
            )));
        }
        if !(self.distal_len > self.finger_radius && self.distal_len < tmpl.total_finger_len) {
            return Err(FphandError::Design(format!(
                "distal length {} outside ({}, {})",
                self.distal_len, self.finger_radius, tmpl.total_finger_len
            )));
        }
        Ok(())
    }

    pub fn proximal_len(&self, tmpl: &Template) -> f64 {
        tmpl.total_finger_len - self.distal_len
    }

    /// Cylindrical-body length of the distal capsule (apex lands at `distal_len`).
    pub fn distal_body_len(&self) -> f64 {
        self.distal_len - self.finger_radius
    }
}

/// Elementwise design-space box.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignBounds {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl Default for DesignBounds {
    fn default() -> Self {
        Self {
            lo: [30.0, 40.0, 15.0, 5.0, -0.6, 0.3],
            hi: [70.0, 110.0, 45.0, 12.0, 0.6, 1.5],
        }
    }
}

impl DesignBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..6 {
            if !(self.lo[i] < self.hi[i]) {
                return Err(FphandError::Config(format!(
                    "design bound {} has lo {} >= hi {}",
                    i, self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, d: &DesignParams) -> bool {
        let a = d.to_array();
        (0..6).all(|i| a[i] >= self.lo[i] - 1e-12 && a[i] <= self.hi[i] + 1e-12)
    }
}

/// Map a design into the dimensionless `[-0.5, 0.5]^6` box.
pub fn standardize(d: &DesignParams, bounds: &DesignBounds) -> Result<[f64; 6]> {
    let a = d.to_array();
    let mut out = [0.0; 6];
    for i in 0..6 {
        if a[i] < bounds.lo[i] - 1e-12 || a[i] > bounds.hi[i] + 1e-12 {
            return Err(FphandError::OutOfBounds {
                index: i,
                value: a[i],
                lo: bounds.lo[i],
                hi: bounds.hi[i],
            });
        }
        out[i] = (a[i] - bounds.lo[i]) / (bounds.hi[i] - bounds.lo[i]) - 0.5;
    }
    Ok(out)
}

/// Inverse of [`standardize`].
pub fn destandardize(q: &[f64; 6], bounds: &DesignBounds) -> Result<DesignParams> {
    let mut a = [0.0; 6];
    for i in 0..6 {
        if q[i] < -0.5 - 1e-12 || q[i] > 0.5 + 1e-12 {
            return Err(FphandError::OutOfBounds {
                index: i,
                value: q[i],
                lo: -0.5,
                hi: 0.5,
            });
        }
        a[i] = bounds.lo[i] + (q[i] + 0.5) * (bounds.hi[i] - bounds.lo[i]);
    }
    Ok(DesignParams::from_array(a))
}

/// Cylindrical tool geometry. The axis runs along the tool frame's +z with
/// the base at z = 0; the cutting tip sits on the axis at `tip_offset`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToolGeom {
    pub radius: f64,
    pub length: f64,
    pub tip_offset: f64,
}

impl Default for ToolGeom {
    fn default() -> Self {
        Self {
            radius: 6.0,
            length: 120.0,
            tip_offset: 120.0,
        }
    }
}

impl ToolGeom {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.length > 0.0) {
            return Err(FphandError::Config("tool radius/length must be positive".into()));
        }
        if !(self.tip_offset > 0.0 && self.tip_offset <= self.length) {
            return Err(FphandError::Config(format!(
                "tool tip_offset {} outside (0, {}]",
                self.tip_offset, self.length
            )));
        }
        Ok(())
    }

    pub fn tip_point(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.tip_offset)
    }

    pub fn axis_segment(&self) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::zeros(), Vector3::new(0.0, 0.0, self.length))
    }
}

/// Coordinates of a point on a parametrized surface plus the contact-frame
/// spin about the inward normal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SurfaceCoords {
    pub a1: f64,
    pub a2: f64,
    pub spin: f64,
}

impl SurfaceCoords {
    pub fn new(a1: f64, a2: f64, spin: f64) -> Self {
        Self { a1, a2, spin }
    }

    /// Canonical storage form: angles wrapped into `(-pi, pi]`.
    pub fn wrapped(&self) -> Self {
        Self {
            a1: self.a1,
            a2: crate::geom::wrap_angle(self.a2),
            spin: crate::geom::wrap_angle(self.spin),
        }
    }
}

/// Finger joint positions: MCP flexion, MCP adduction/abduction, IP flexion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct FingerJoints {
    pub mcp_flexion: f64,
    pub mcp_abduction: f64,
    pub ip_flexion: f64,
}

impl FingerJoints {
    pub fn new(u1: f64, u2: f64, u3: f64) -> Self {
        Self {
            mcp_flexion: u1,
            mcp_abduction: u2,
            ip_flexion: u3,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.mcp_flexion, self.mcp_abduction, self.ip_flexion]
    }
}

/// 6-DoF hand pose: frame {H} relative to the tool frame {O}, as a
/// translation plus an exponential-coordinate rotation vector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct HandPose6D {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
}

impl HandPose6D {
    pub fn new(t: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self {
            translation: [t.x, t.y, t.z],
            rotation: [w.x, w.y, w.z],
        }
    }

    pub fn translation_vec(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.translation)
    }

    pub fn rotation_vec(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.rotation)
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(crate::geom::rot_exp(&self.rotation_vec()), self.translation_vec())
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Self::new(t.pos, crate::geom::rot_log(&t.rot))
    }
}

/// Gauss frame on the tool surface: origin on the cylinder, z-axis the
/// inward normal, tangent axes post-rotated about z by `spin`.
pub fn cylinder_frame(geom: &ToolGeom, c: &SurfaceCoords) -> Result<RigidTransform> {
    if c.a1 < -1e-9 || c.a1 > geom.length + 1e-9 {
        return Err(FphandError::ChartDomain {
            coord: c.a1,
            lo: 0.0,
            hi: geom.length,
        });
    }
    let jet = cylinder_chart(geom.radius, c.a1, c.a2);
    Ok(RigidTransform::new(jet.frame * rot_z(c.spin), jet.point))
}

/// Gauss frame on a capsule (cylindrical body + distal spherical cap).
pub fn capsule_frame(radius: f64, cyl_len: f64, c: &SurfaceCoords) -> Result<RigidTransform> {
    let jet = capsule_chart(radius, cyl_len, CapChart::Axial, c.a1, c.a2)?;
    Ok(RigidTransform::new(jet.frame * rot_z(c.spin), jet.point))
}

/// Point + frame jet on the tool surface w.r.t. `(spin, a1, a2)`, in {O}.
#[derive(Debug, Clone)]
pub struct ToolSurfaceJet {
    pub transform: RigidTransform,
    pub d: [JetCols; 3],
}

pub fn tool_surface_jet(geom: &ToolGeom, c: &SurfaceCoords) -> Result<ToolSurfaceJet> {
    if c.a1 < -1e-9 || c.a1 > geom.length + 1e-9 {
        return Err(FphandError::ChartDomain {
            coord: c.a1,
            lo: 0.0,
            hi: geom.length,
        });
    }
    let jet = cylinder_chart(geom.radius, c.a1, c.a2);
    Ok(spin_jet(&jet, c.spin))
}

/// Applies contact-frame spin to a chart jet, producing derivatives w.r.t.
/// `(spin, a1, a2)`.
fn spin_jet(jet: &ChartJet, spin: f64) -> ToolSurfaceJet {
    let rz = rot_z(spin);
    let frame = jet.frame * rz;
    let x = frame.column(0).into_owned();
    let y = frame.column(1).into_owned();
    let d_spin = JetCols {
        dp: Vector3::zeros(),
        dx: y,
        dy: -x,
        dz: Vector3::zeros(),
    };
    let (s, c) = spin.sin_cos();
    let mut d = [d_spin, JetCols::zero(), JetCols::zero()];
    for k in 0..2 {
        let j = &jet.d[k];
        d[k + 1] = JetCols {
            dp: j.dp,
            dx: c * j.dx + s * j.dy,
            dy: -s * j.dx + c * j.dy,
            dz: j.dz,
        };
    }
    ToolSurfaceJet {
        transform: RigidTransform::new(frame, jet.point),
        d,
    }
}

/// Point + frame jet on a finger's distal-link surface w.r.t. the five
/// finger coordinates `(u_f1, u_f2, u_f3, a_f1, a_f2)`, in the root frame {R}.
#[derive(Debug, Clone)]
pub struct FingerSurfaceJet {
    pub transform: RigidTransform,
    pub d: [JetCols; 5],
    /// Joint axes in {R} (MCP flexion, MCP abduction, IP flexion).
    pub joint_axes: [Vector3<f64>; 3],
    /// Joint pivot points in {R}.
    pub joint_origins: [Vector3<f64>; 3],
}

pub fn finger_surface_jet(
    tmpl: &Template,
    d: &DesignParams,
    u: &FingerJoints,
    cap: CapChart,
    a1: f64,
    a2: f64,
) -> Result<FingerSurfaceJet> {
    let lp = d.proximal_len(tmpl);
    let body = d.distal_body_len();
    let jet = capsule_chart(d.finger_radius, body, cap, a1, a2)?;

    let r_mcp = rot_x(u.mcp_flexion) * rot_y(u.mcp_abduction);
    let r_distal = r_mcp * rot_x(u.ip_flexion);
    let ip_origin = r_mcp * Vector3::new(0.0, 0.0, lp);
    let point = ip_origin + r_distal * jet.point;
    let frame = r_distal * jet.frame;

    let w1 = Vector3::new(1.0, 0.0, 0.0);
    let w2 = rot_x(u.mcp_flexion) * Vector3::new(0.0, 1.0, 0.0);
    let w3 = r_mcp * Vector3::new(1.0, 0.0, 0.0);

    let joint_cols = |w: &Vector3<f64>, o: &Vector3<f64>| JetCols {
        dp: w.cross(&(point - o)),
        dx: w.cross(&frame.column(0).into_owned()),
        dy: w.cross(&frame.column(1).into_owned()),
        dz: w.cross(&frame.column(2).into_owned()),
    };
    let chart_cols = |j: &JetCols| JetCols {
        dp: r_distal * j.dp,
        dx: r_distal * j.dx,
        dy: r_distal * j.dy,
        dz: r_distal * j.dz,
    };

    Ok(FingerSurfaceJet {
        transform: RigidTransform::new(frame, point),
        d: [
            joint_cols(&w1, &Vector3::zeros()),
            joint_cols(&w2, &Vector3::zeros()),
            joint_cols(&w3, &ip_origin),
            chart_cols(&jet.d[0]),
            chart_cols(&jet.d[1]),
        ],
        joint_axes: [w1, w2, w3],
        joint_origins: [Vector3::zeros(), Vector3::zeros(), ip_origin],
    })
}

/// Pose of the moving frame {P} on the distal-link surface, relative to the
/// finger root frame {R}.
pub fn finger_fk(tmpl: &Template, d: &DesignParams, u: &FingerJoints, c: &SurfaceCoords) -> Result<RigidTransform> {
    let jet = finger_surface_jet(tmpl, d, u, CapChart::Axial, c.a1, c.a2)?;
    Ok(RigidTransform::new(jet.transform.rot * rot_z(c.spin), jet.transform.pos))
}

pub const NUM_FINGERS: usize = 4;
pub const THUMB: usize = 3;

/// Finger root frames in the palm frame {H}.
///
/// Non-thumb roots sit on the palm's distal edge at lateral offsets
/// `(-d3, 0, +d3)` and palm length `d2`, tilted by the palm angle about the
/// lateral axis. The thumb root sits at the proximal-lateral corner
/// `(+d3, 0)` and is swung across the palm by the thumb mounting angle about
/// the palm normal. Straight fingers point along local +z; MCP flexion
/// curls fingertips toward the palm's +z side.
pub fn finger_roots(d: &DesignParams) -> [RigidTransform; NUM_FINGERS] {
    // base: local z -> palm +y (pointing), local x -> palm -x (flexion axis)
    let base = Matrix3::from_columns(&[
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 1.0, 0.0),
    ]);
    let tilt = rot_x(d.palm_angle) * base;
    let thumb = rot_z(d.thumb_angle) * base;
    [
        RigidTransform::new(tilt, Vector3::new(-d.palm_half_width, d.palm_len, 0.0)),
        RigidTransform::new(tilt, Vector3::new(0.0, d.palm_len, 0.0)),
        RigidTransform::new(tilt, Vector3::new(d.palm_half_width, d.palm_len, 0.0)),
        RigidTransform::new(thumb, Vector3::new(d.palm_half_width, 0.0, 0.0)),
    ]
}

/// A link capsule: segment `[p0, p1]` with a swept radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCapsule {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub radius: f64,
}

impl LinkCapsule {
    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }
}

/// All hand link placements in the tool frame {O}.
#[derive(Debug, Clone)]
pub struct HandGeometry {
    pub palm: RigidTransform,
    /// `[finger][0 = proximal, 1 = distal]`.
    pub links: [[LinkCapsule; 2]; NUM_FINGERS],
}

/// Places all 8 link capsules (plus the palm frame) in {O}.
pub fn hand_fk(
    tmpl: &Template,
    d: &DesignParams,
    pose: &HandPose6D,
    joints: &[FingerJoints; NUM_FINGERS],
) -> HandGeometry {
    let t_oh = pose.to_transform();
    let roots = finger_roots(d);
    let lp = d.proximal_len(tmpl);
    let body = d.distal_body_len();
    let mut links = [[LinkCapsule {
        p0: Vector3::zeros(),
        p1: Vector3::zeros(),
        radius: d.finger_radius,
    }; 2]; NUM_FINGERS];
    for f in 0..NUM_FINGERS {
        let t_or = t_oh.mul(&roots[f]);
        let u = &joints[f];
        let r_mcp = rot_x(u.mcp_flexion) * rot_y(u.mcp_abduction);
        let r_distal = r_mcp * rot_x(u.ip_flexion);
        let ip = t_or.transform_point(&(r_mcp * Vector3::new(0.0, 0.0, lp)));
        let cap_center = t_or.transform_point(&(r_mcp * Vector3::new(0.0, 0.0, lp) + r_distal * Vector3::new(0.0, 0.0, body)));
        links[f] = [
            LinkCapsule {
                p0: t_or.pos,
                p1: ip,
                radius: d.finger_radius,
            },
            LinkCapsule {
                p0: ip,
                p1: cap_center,
                radius: d.finger_radius,
            },
        ];
    }
    HandGeometry { palm: t_oh, links }
}

/// Analytic finger IK: joints that place the distal cap's sphere center at
/// `target` (root-frame coordinates). Chooses the positive-IP-flexion elbow
/// and the principal abduction branch; returns `None` when out of reach.
pub fn finger_ik(tmpl: &Template, d: &DesignParams, target: &Vector3<f64>) -> Option<FingerJoints> {
    let lp = d.proximal_len(tmpl);
    let ldc = d.distal_body_len();
    let w = *target;
    let c3 = (w.norm_squared() - lp * lp - ldc * ldc) / (2.0 * lp * ldc);
    if !(-1.0..=1.0).contains(&c3) {
        return None;
    }
    let u3 = c3.acos();
    let v = Vector3::new(0.0, -ldc * u3.sin(), lp + ldc * c3);
    if v.z <= 1e-9 {
        return None;
    }
    let s2 = w.x / v.z;
    if s2.abs() > 1.0 {
        return None;
    }
    let u2 = s2.asin();
    let b = Vector3::new(0.0, v.y, v.z * u2.cos());
    let u1 = crate::geom::wrap_angle(w.z.atan2(w.y) - b.z.atan2(b.y));
    let joints = FingerJoints::new(u1, u2, u3);
    // verify (guards the branch choices)
    let r_mcp = rot_x(u1) * rot_y(u2);
    let reached = r_mcp * Vector3::new(0.0, 0.0, lp) + r_mcp * rot_x(u3) * Vector3::new(0.0, 0.0, ldc);
    if (reached - w).norm() > 1e-6 * w.norm().max(1.0) {
        return None;
    }
    Some(joints)
}

/// The three foundational-pose topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum FpName {
    Carve,
    Poke,
    Press,
}

impl FpName {
    pub const ALL: [FpName; 3] = [FpName::Carve, FpName::Poke, FpName::Press];

    pub fn as_str(&self) -> &'static str {
        match self {
            FpName::Carve => "carve",
            FpName::Poke => "poke",
            FpName::Press => "press",
        }
    }
}

impl std::fmt::Display for FpName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the tool's planar rotation axis is derived from an FP state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAxisRule {
    /// Axis through the centroid of all contact points, perpendicular to the
    /// tool's longitudinal axis and to the tip lever arm.
    CentroidPerp,
    /// Axis through the two stationary pinch contact points.
    PinchLine,
}

/// FP-specific sampling cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSelector {
    CarveMoment,
    PinchAlignment,
}

/// Per-variable box for one FP's system state (length `8n + 6`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FpBounds {
    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] - tol && v <= self.hi[i] + tol)
    }
}

/// A foundational-pose description: contact topology, moving/stationary
/// split, rotation-axis rule, state bounds, and cost selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSpec {
    pub name: FpName,
    /// Finger index per contact, in contact order.
    pub contact_fingers: Vec<usize>,
    /// Contact indices (into `contact_fingers`) that stay still during
    /// wielding; empty for carve.
    pub stationary_contacts: Vec<usize>,
    pub axis_rule: RotationAxisRule,
    pub cost: CostSelector,
    pub bounds: FpBounds,
}

impl FpSpec {
    pub fn n_contacts(&self) -> usize {
        self.contact_fingers.len()
    }

    pub fn state_dim(&self) -> usize {
        8 * self.n_contacts() + 6
    }

    pub fn residual_dim(&self) -> usize {
        6 * self.n_contacts()
    }

    pub fn is_stationary(&self, contact: usize) -> bool {
        self.stationary_contacts.contains(&contact)
    }

    pub fn moving_contacts(&self) -> Vec<usize> {
        (0..self.n_contacts()).filter(|c| !self.is_stationary(*c)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_contacts();
        let ok = match self.name {
            FpName::Carve => n == 3 && self.stationary_contacts.is_empty(),
            FpName::Poke | FpName::Press => n == 4 && self.stationary_contacts.len() == 2,
        };
        if !ok {
            return Err(FphandError::Config(format!(
                "{}: invalid contact topology (n = {}, stationary = {})",
                self.name,
                n,
                self.stationary_contacts.len()
            )));
        }
        let mut seen = [false; NUM_FINGERS];
        for &f in &self.contact_fingers {
            if f >= NUM_FINGERS || seen[f] {
                return Err(FphandError::Config(format!(
                    "{}: finger assignment must use distinct fingers 0..{}",
                    self.name, NUM_FINGERS
                )));
            }
            seen[f] = true;
        }
        for &c in &self.stationary_contacts {
            if c >= n {
                return Err(FphandError::Config(format!("{}: stationary contact {} out of range", self.name, c)));
            }
        }
        if self.bounds.lo.len() != self.state_dim() || self.bounds.hi.len() != self.state_dim() {
            return Err(FphandError::Dimension {
                expected: self.state_dim(),
                got: self.bounds.lo.len(),
            });
        }
        Ok(())
    }

    /// Fingers that take part in this FP, in contact order.
    pub fn fingers(&self) -> &[usize] {
        &self.contact_fingers
    }

    /// The finger not assigned to any contact (carve only).
    pub fn idle_fingers(&self) -> Vec<usize> {
        (0..NUM_FINGERS).filter(|f| !self.contact_fingers.contains(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn tmpl() -> Template {
        Template::default()
    }

    fn sample_design() -> DesignParams {
        DesignParams::from_array([50.0, 75.0, 30.0, 8.5, 0.0, 0.9])
    }

    #[test]
    fn cylinder_frame_examples() {
        let geom = ToolGeom {
            radius: 5.0,
            length: 120.0,
            tip_offset: 120.0,
        };
        let t = cylinder_frame(&geom, &SurfaceCoords::new(0.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!((t.pos - Vector3::new(5.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            (t.rot.column(2) - Vector3::new(-1.0, 0.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
        let t = cylinder_frame(&geom, &SurfaceCoords::new(10.0, std::f64::consts::PI, 0.0)).unwrap();
        assert_abs_diff_eq!((t.pos - Vector3::new(-5.0, 0.0, 10.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((t.rot.column(2) - Vector3::new(1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert!(cylinder_frame(&geom, &SurfaceCoords::new(-1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn cylinder_tangents_orthogonal_to_normal() {
        let geom = ToolGeom::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = SurfaceCoords::new(
                rng.random_range(1.0..geom.length - 1.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let t = cylinder_frame(&geom, &c).unwrap();
            let h = 1e-6;
            let tp = |a1: f64, a2: f64| {
                cylinder_frame(&geom, &SurfaceCoords::new(a1, a2, c.spin)).unwrap().pos
            };
            let d1 = (tp(c.a1 + h, c.a2) - tp(c.a1 - h, c.a2)) / (2.0 * h);
            let d2 = (tp(c.a1, c.a2 + h) - tp(c.a1, c.a2 - h)) / (2.0 * h);
            let z = t.rot.column(2);
            assert_abs_diff_eq!(d1.dot(&z), 0.0, epsilon = 1e-8);
            assert_abs_diff_eq!(d2.dot(&z), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn capsule_frame_examples() {
        let (r, l) = (8.0, 40.0);
        let t = capsule_frame(r, l, &SurfaceCoords::new(l / 2.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!((t.pos - Vector3::new(r, 0.0, l / 2.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((t.rot.column(2) - Vector3::new(-1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert!(capsule_frame(r, l, &SurfaceCoords::new(l + chart::cap_arc(r) + 0.1, 0.0, 0.0)).is_err());
    }

    #[test]
    fn finger_fk_straight_reaches_total_length() {
        let d = sample_design();
        let pole = chart::capsule_domain(d.finger_radius, d.distal_body_len());
        let t = finger_fk(&tmpl(), &d, &FingerJoints::default(), &SurfaceCoords::new(pole, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(
            (t.pos - Vector3::new(0.0, 0.0, tmpl().total_finger_len)).norm(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn finger_fk_right_angle_matches_planar_two_link() {
        let d = sample_design();
        let u = FingerJoints::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let pole = chart::capsule_domain(d.finger_radius, d.distal_body_len());
        let t = finger_fk(&tmpl(), &d, &u, &SurfaceCoords::new(pole, 0.0, 0.0)).unwrap();
        // distal link rotated 90 deg about local +x: +z maps to -y
        let expected = Vector3::new(0.0, -d.distal_len, d.proximal_len(&tmpl()));
        assert_abs_diff_eq!((t.pos - expected).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn finger_fk_planar_closed_form_when_no_abduction() {
        let d = sample_design();
        let t = tmpl();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let u1 = rng.random_range(-0.3..1.5);
            let u3 = rng.random_range(0.0..1.8);
            let u = FingerJoints::new(u1, 0.0, u3);
            let pole = chart::capsule_domain(d.finger_radius, d.distal_body_len());
            let p = finger_fk(&t, &d, &u, &SurfaceCoords::new(pole, 0.0, 0.0)).unwrap().pos;
            let lp = d.proximal_len(&t);
            // planar chain in the y-z plane: flexion rotates +z toward -y
            let expected = Vector3::new(
                0.0,
                -(lp * u1.sin() + d.distal_len * (u1 + u3).sin()),
                lp * u1.cos() + d.distal_len * (u1 + u3).cos(),
            );
            assert_abs_diff_eq!((p - expected).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn finger_jet_matches_finite_differences() {
        let d = sample_design();
        let t = tmpl();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let params = [
                rng.random_range(-0.3..1.5),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.1..1.7),
                rng.random_range(5.0..d.distal_body_len() + 8.0),
                rng.random_range(-3.0..3.0),
            ];
            let eval = |p: &[f64; 5]| {
                finger_surface_jet(
                    &t,
                    &d,
                    &FingerJoints::new(p[0], p[1], p[2]),
                    CapChart::Axial,
                    p[3],
                    p[4],
                )
                .unwrap()
            };
            let jet = eval(&params);
            let h = 1e-6;
            for k in 0..5 {
                let mut pp = params;
                let mut pm = params;
                pp[k] += h;
                pm[k] -= h;
                let (jp, jm) = (eval(&pp), eval(&pm));
                let fd_p = (jp.transform.pos - jm.transform.pos) / (2.0 * h);
                let rel = (fd_p - jet.d[k].dp).norm() / fd_p.norm().max(1.0);
                assert!(rel < 1e-6, "dp k={k} rel={rel}");
                for c in 0..3 {
                    let fd = (jp.transform.rot.column(c) - jm.transform.rot.column(c)) / (2.0 * h);
                    assert_abs_diff_eq!((fd - jet.d[k].d_axis(c)).norm(), 0.0, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn hand_fk_layout_and_rigid_motion() {
        let d = sample_design();
        let t = tmpl();
        let joints = [FingerJoints::default(); NUM_FINGERS];
        let geo = hand_fk(&t, &d, &HandPose6D::default(), &joints);
        // non-thumb pair mirrors across the palm mid-plane x = 0
        let a = geo.links[0][0].p0;
        let b = geo.links[2][0].p0;
        assert_abs_diff_eq!(a.x, -b.x, epsilon = 1e-12);
        assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
        assert_abs_diff_eq!(a.z, b.z, epsilon = 1e-12);
        assert_abs_diff_eq!((geo.links[0][1].p1.x + geo.links[2][1].p1.x).abs(), 0.0, epsilon = 1e-12);
        // pure translation moves every endpoint by the same offset
        let shift = Vector3::new(3.0, -2.0, 7.0);
        let moved = hand_fk(
            &t,
            &d,
            &HandPose6D::new(shift, Vector3::zeros()),
            &joints,
        );
        for f in 0..NUM_FINGERS {
            for l in 0..2 {
                assert_abs_diff_eq!(
                    (moved.links[f][l].p0 - geo.links[f][l].p0 - shift).norm(),
                    0.0,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn hand_fk_preserves_link_lengths() {
        let d = sample_design();
        let t = tmpl();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let pose = HandPose6D::new(
                Vector3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                ),
                Vector3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                ),
            );
            let mut joints = [FingerJoints::default(); NUM_FINGERS];
            for j in joints.iter_mut() {
                *j = FingerJoints::new(
                    rng.random_range(-0.3..1.5),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(0.0..1.8),
                );
            }
            let geo = hand_fk(&t, &d, &pose, &joints);
            for f in 0..NUM_FINGERS {
                assert_abs_diff_eq!(geo.links[f][0].length(), d.proximal_len(&t), epsilon = 1e-9);
                assert_abs_diff_eq!(geo.links[f][1].length(), d.distal_body_len(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn standardize_corner_cases() {
        let b = DesignBounds::default();
        let d = DesignParams::from_array(b.lo);
        assert_eq!(standardize(&d, &b).unwrap(), [-0.5; 6]);
        let mid: [f64; 6] = std::array::from_fn(|i| 0.5 * (b.lo[i] + b.hi[i]));
        let q = standardize(&DesignParams::from_array(mid), &b).unwrap();
        for v in q {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        let mut too_big = mid;
        too_big[2] = b.hi[2] + 1.0;
        assert!(standardize(&DesignParams::from_array(too_big), &b).is_err());
    }

    #[test]
    fn standardize_roundtrip_random() {
        let b = DesignBounds::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut max_rel: f64 = 0.0;
        for _ in 0..1000 {
            let a: [f64; 6] = std::array::from_fn(|i| rng.random_range(b.lo[i]..b.hi[i]));
            let d = DesignParams::from_array(a);
            let q = standardize(&d, &b).unwrap();
            let d2 = destandardize(&q, &b).unwrap();
            for i in 0..6 {
                let rel = (d2.to_array()[i] - a[i]).abs() / a[i].abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-12, "max_rel = {max_rel}");
    }
}
