//! Rigid transforms and SO(3) helpers.
//!
//! Rotations are plain 3x3 matrices; orientations created here satisfy
//! `R^T R = I` and `det R = 1` to machine precision. Exponential
//! (rotation-vector) coordinates are the hand-pose convention throughout.

use nalgebra::{Matrix3, Vector3};

/// A rigid transform: `p_world = rot * p_local + pos`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            pos: Vector3::zeros(),
        }
    }

    pub fn new(rot: Matrix3<f64>, pos: Vector3<f64>) -> Self {
        Self { rot, pos }
    }

    pub fn from_translation(pos: Vector3<f64>) -> Self {
        Self {
            rot: Matrix3::identity(),
            pos,
        }
    }

    /// Compose: `self` then `other` in `self`'s local frame (`T_ac = T_ab * T_bc`).
    pub fn mul(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rot: self.rot * other.rot,
            pos: self.rot * other.pos + self.pos,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rot.transpose();
        RigidTransform {
            rot: rt,
            pos: -(rt * self.pos),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.pos
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rot * v
    }
}

/// Skew-symmetric matrix of `w`: `skew(w) * v == w.cross(&v)`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix from exponential coordinates (Rodrigues).
pub fn rot_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        let k = skew(w);
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let k = skew(&(w / theta));
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
}

/// Rotation vector of a rotation matrix (inverse of [`rot_exp`]). `|w| <= pi`.
pub fn rot_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let tr = r.trace();
    let cos_theta = ((tr - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta < 1e-9 {
        // first-order: R ~ I + skew(w)
        return Vector3::new(
            0.5 * (r[(2, 1)] - r[(1, 2)]),
            0.5 * (r[(0, 2)] - r[(2, 0)]),
            0.5 * (r[(1, 0)] - r[(0, 1)]),
        );
    }
    if (std::f64::consts::PI - theta) < 1e-6 {
        // near pi: extract axis from R + I
        let b = r + Matrix3::identity();
        let col = if b.column(0).norm() > b.column(1).norm() {
            if b.column(0).norm() > b.column(2).norm() { 0 } else { 2 }
        } else if b.column(1).norm() > b.column(2).norm() {
            1
        } else {
            2
        };
        let axis = b.column(col).normalize();
        let axis = Vector3::new(axis[0], axis[1], axis[2]);
        // fix sign via off-diagonal skew part
        let s = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        let axis = if s.dot(&axis) < 0.0 { -axis } else { axis };
        return axis * theta;
    }
    let f = theta / (2.0 * theta.sin());
    Vector3::new(
        f * (r[(2, 1)] - r[(1, 2)]),
        f * (r[(0, 2)] - r[(2, 0)]),
        f * (r[(1, 0)] - r[(0, 1)]),
    )
}

/// Left Jacobian of SO(3): `d/dw exp(skew(w)) x = -skew(exp(skew(w)) x) * left_jacobian(w)`.
pub fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-6 {
        return Matrix3::identity() + 0.5 * k + (k * k) / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() + ((1.0 - theta.cos()) / t2) * k + ((theta - theta.sin()) / (t2 * theta)) * (k * k)
}

/// Rotation about axis `x' = rot_exp(angle * dir) (x - point) + point`.
pub fn rotation_about_line(point: &Vector3<f64>, dir: &Vector3<f64>, angle: f64) -> RigidTransform {
    let r = rot_exp(&(dir.normalize() * angle));
    RigidTransform {
        rot: r,
        pos: point - r * point,
    }
}

/// Rotation about a coordinate axis.
pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}
