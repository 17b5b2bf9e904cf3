//! Surface charts with first-order frame derivatives.
//!
//! Every chart maps `(a1, a2)` to a surface point plus a normalized Gauss
//! frame whose z-axis is the inward surface normal. Charts also return the
//! derivatives of the point and of all three frame axes with respect to the
//! chart coordinates; contact evolution and the reduced reach residual both
//! consume these jets.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::FphandError;

/// Point + frame derivatives with respect to one chart coordinate.
#[derive(Debug, Clone, Copy)]
pub struct JetCols {
    pub dp: Vector3<f64>,
    pub dx: Vector3<f64>,
    pub dy: Vector3<f64>,
    pub dz: Vector3<f64>,
}

impl JetCols {
    pub fn zero() -> Self {
        Self {
            dp: Vector3::zeros(),
            dx: Vector3::zeros(),
            dy: Vector3::zeros(),
            dz: Vector3::zeros(),
        }
    }

    pub fn d_axis(&self, k: usize) -> Vector3<f64> {
        match k {
            0 => self.dx,
            1 => self.dy,
            _ => self.dz,
        }
    }
}

/// Chart evaluation: surface point, unspun Gauss frame `[x y z]`, and the
/// jets for `(a1, a2)`. All quantities in the owning body's local frame.
#[derive(Debug, Clone, Copy)]
pub struct ChartJet {
    pub point: Vector3<f64>,
    pub frame: Matrix3<f64>,
    pub d: [JetCols; 2],
}

/// Which chart parametrizes a fingertip contact. The axial chart covers the
/// capsule body and the distal cap with the link axis as the pole; the tilted
/// chart re-anchors the cap's pole onto the local +x axis so contacts can
/// cross the apex without hitting the coordinate singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CapChart {
    #[default]
    Axial,
    TiltedX,
}

/// Lateral surface of a cylinder with its axis along local +z.
/// `a1` is the axial coordinate, `a2` the circumferential angle.
pub fn cylinder_chart(radius: f64, a1: f64, a2: f64) -> ChartJet {
    let (s, c) = a2.sin_cos();
    let point = Vector3::new(radius * c, radius * s, a1);
    let x = Vector3::new(0.0, 0.0, 1.0);
    let y = Vector3::new(-s, c, 0.0);
    let z = Vector3::new(-c, -s, 0.0); // inward normal
    ChartJet {
        point,
        frame: Matrix3::from_columns(&[x, y, z]),
        d: [
            JetCols {
                dp: Vector3::new(0.0, 0.0, 1.0),
                dx: Vector3::zeros(),
                dy: Vector3::zeros(),
                dz: Vector3::zeros(),
            },
            JetCols {
                dp: Vector3::new(-radius * s, radius * c, 0.0),
                dx: Vector3::zeros(),
                dy: Vector3::new(-c, -s, 0.0),
                dz: Vector3::new(s, -c, 0.0),
            },
        ],
    }
}

/// Spherical cap chart around an arbitrary pole.
///
/// `basis` columns `(e1, e2, e3)` are orthonormal with `e3` the polar axis;
/// `psi` is the elevation from the `e1`-`e2` equator (arc length `r * psi`
/// enters through the caller's `a1` scaling), `a2` the azimuth.
fn sphere_cap_chart(center: Vector3<f64>, basis: &Matrix3<f64>, radius: f64, psi: f64, a2: f64) -> ChartJet {
    let (sp, cp) = psi.sin_cos();
    let (s2, c2) = a2.sin_cos();
    let e1 = basis.column(0).into_owned();
    let e2 = basis.column(1).into_owned();
    let e3 = basis.column(2).into_owned();
    let radial = cp * (c2 * e1 + s2 * e2) + sp * e3; // outward unit direction
    let point = center + radius * radial;
    let x = -sp * (c2 * e1 + s2 * e2) + cp * e3; // meridian tangent (unit)
    let y = -s2 * e1 + c2 * e2; // azimuth tangent (unit)
    let z = -radial;

    // a1 is arc length: d/da1 = (1/r) d/dpsi
    let dradial_dpsi = -sp * (c2 * e1 + s2 * e2) + cp * e3; // == x
    let dx_dpsi = -cp * (c2 * e1 + s2 * e2) - sp * e3; // == z
    let d1 = JetCols {
        dp: dradial_dpsi, // r * x / r
        dx: dx_dpsi / radius,
        dy: Vector3::zeros(),
        dz: -dradial_dpsi / radius,
    };
    let dradial_da2 = cp * (-s2 * e1 + c2 * e2);
    let d2 = JetCols {
        dp: radius * dradial_da2,
        dx: -sp * (-s2 * e1 + c2 * e2),
        dy: -c2 * e1 - s2 * e2,
        dz: -dradial_da2,
    };
    ChartJet {
        point,
        frame: Matrix3::from_columns(&[x, y, z]),
        d: [d1, d2],
    }
}

/// Arc-length extent of the distal cap region in the axial chart.
pub fn cap_arc(radius: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 * radius
}

/// Capsule chart domain upper bound for `a1` in the axial chart.
pub fn capsule_domain(radius: f64, cyl_len: f64) -> f64 {
    cyl_len + cap_arc(radius)
}

/// Capsule surface (cylindrical body along +z plus distal spherical cap).
///
/// Axial chart: `a1 in [0, cyl_len]` on the body, then arc length into the
/// cap up to the pole at `cyl_len + pi*radius/2`. Tilted chart: cap only,
/// `a1` is arc length from the chart's own equator (pole on local +x).
pub fn capsule_chart(radius: f64, cyl_len: f64, chart: CapChart, a1: f64, a2: f64) -> Result<ChartJet, FphandError> {
    match chart {
        CapChart::Axial => {
            let hi = capsule_domain(radius, cyl_len);
            if !(-1e-9..=hi + 1e-9).contains(&a1) {
                return Err(FphandError::ChartDomain {
                    coord: a1,
                    lo: 0.0,
                    hi,
                });
            }
            if a1 <= cyl_len {
                Ok(cylinder_chart(radius, a1, a2))
            } else {
                let psi = (a1 - cyl_len) / radius;
                Ok(sphere_cap_chart(
                    Vector3::new(0.0, 0.0, cyl_len),
                    &Matrix3::identity(),
                    radius,
                    psi,
                    a2,
                ))
            }
        }
        CapChart::TiltedX => {
            let hi = cap_arc(radius);
            if !(-hi - 1e-9..=hi + 1e-9).contains(&a1) {
                return Err(FphandError::ChartDomain { coord: a1, lo: -hi, hi });
            }
            // pole on +x; equator basis e1 = +z, e2 = -y keeps the frame right-handed
            let basis = Matrix3::from_columns(&[
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(0.0, -1.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
            ]);
            Ok(sphere_cap_chart(
                Vector3::new(0.0, 0.0, cyl_len),
                &basis,
                radius,
                a1 / radius,
                a2,
            ))
        }
    }
}

/// Convert cap-region coordinates between the axial and tilted charts.
/// Returns `None` if the point is not on the spherical cap or maps too close
/// to the target chart's pole.
pub fn convert_cap_coords(
    radius: f64,
    cyl_len: f64,
    from: CapChart,
    a1: f64,
    a2: f64,
    to: CapChart,
) -> Option<(f64, f64)> {
    if from == to {
        return Some((a1, a2));
    }
    let jet = capsule_chart(radius, cyl_len, from, a1, a2).ok()?;
    let radial = -jet.frame.column(2); // outward direction from cap center
    if from == CapChart::Axial && a1 < cyl_len - 1e-12 {
        return None; // body region: only the axial chart covers it
    }
    match to {
        CapChart::Axial => {
            let sp = radial.z.clamp(-1.0, 1.0);
            let psi = sp.asin();
            if psi < -1e-9 {
                return None;
            }
            let c = (radial.x * radial.x + radial.y * radial.y).sqrt();
            if c < 1e-9 {
                return None; // at the axial pole
            }
            Some((cyl_len + radius * psi.max(0.0), radial.y.atan2(radial.x)))
        }
        CapChart::TiltedX => {
            let sp = radial.x.clamp(-1.0, 1.0);
            let psi = sp.asin();
            let c = (radial.y * radial.y + radial.z * radial.z).sqrt();
            if c < 1e-9 {
                return None; // at the tilted pole
            }
            // azimuth against (e1, e2) = (+z, -y)
            Some((radius * psi, (-radial.y).atan2(radial.z)))
        }
    }
}

/// Distance (arc length) from the current cap coordinate to its chart pole.
/// Returns `None` when the point is on the cylindrical body (no pole nearby).
pub fn pole_distance(radius: f64, cyl_len: f64, chart: CapChart, a1: f64) -> Option<f64> {
    match chart {
        CapChart::Axial => {
            if a1 <= cyl_len {
                None
            } else {
                Some(capsule_domain(radius, cyl_len) - a1)
            }
        }
        CapChart::TiltedX => Some(cap_arc(radius) - a1.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn check_jet<F: Fn(f64, f64) -> ChartJet>(f: F, a1: f64, a2: f64) {
        let jet = f(a1, a2);
        let r = &jet.frame;
        assert_abs_diff_eq!((r.transpose() * r - Matrix3::identity()).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        let h = 1e-6;
        for k in 0..2 {
            let (mut ap, mut am) = ((a1, a2), (a1, a2));
            if k == 0 {
                ap.0 += h;
                am.0 -= h;
            } else {
                ap.1 += h;
                am.1 -= h;
            }
            let jp = f(ap.0, ap.1);
            let jm = f(am.0, am.1);
            assert_abs_diff_eq!(((jp.point - jm.point) / (2.0 * h) - jet.d[k].dp).norm(), 0.0, epsilon = 1e-6);
            for c in 0..3 {
                let fd = (jp.frame.column(c) - jm.frame.column(c)) / (2.0 * h);
                assert_abs_diff_eq!((fd - jet.d[k].d_axis(c)).norm(), 0.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn cylinder_jets_match_finite_differences() {
        for &(a1, a2) in &[(0.0, 0.0), (10.0, 1.2), (40.0, -2.5), (3.0, 3.0)] {
            check_jet(|u, v| cylinder_chart(5.0, u, v), a1, a2);
        }
    }

    #[test]
    fn capsule_jets_match_finite_differences() {
        let (r, l) = (8.0, 40.0);
        for &(a1, a2) in &[(5.0, 0.4), (39.0, -1.0), (41.0, 2.0), (48.0, 0.9)] {
            check_jet(|u, v| capsule_chart(r, l, CapChart::Axial, u, v).unwrap(), a1, a2);
        }
        for &(a1, a2) in &[(0.0, 0.3), (4.0, -0.8), (-6.0, 1.9)] {
            check_jet(|u, v| capsule_chart(r, l, CapChart::TiltedX, u, v).unwrap(), a1, a2);
        }
    }

    #[test]
    fn capsule_seam_is_c1() {
        let (r, l) = (6.0, 30.0);
        let eps = 1e-7;
        for &a2 in &[0.0, 1.0, -2.2] {
            let below = capsule_chart(r, l, CapChart::Axial, l - eps, a2).unwrap();
            let above = capsule_chart(r, l, CapChart::Axial, l + eps, a2).unwrap();
            assert_abs_diff_eq!((below.point - above.point).norm(), 0.0, epsilon = 1e-5);
            assert_abs_diff_eq!((below.frame - above.frame).norm(), 0.0, epsilon = 1e-5);
            // C1: the chart map itself has continuous first derivatives
            // (curvature, i.e. frame derivatives, jumps at the seam by design)
            for k in 0..2 {
                assert_abs_diff_eq!((below.d[k].dp - above.d[k].dp).norm(), 0.0, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn capsule_pole_normal_points_down_the_axis() {
        let (r, l) = (8.0, 40.0);
        let jet = capsule_chart(r, l, CapChart::Axial, capsule_domain(r, l), 0.7).unwrap();
        assert_abs_diff_eq!((jet.point - Vector3::new(0.0, 0.0, l + r)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((jet.frame.column(2) - Vector3::new(0.0, 0.0, -1.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cap_chart_conversion_roundtrips() {
        let (r, l) = (8.0, 40.0);
        for &(a1, a2) in &[(43.0, 0.3), (46.0, -1.4), (49.0, 2.8)] {
            let (b1, b2) = convert_cap_coords(r, l, CapChart::Axial, a1, a2, CapChart::TiltedX).unwrap();
            let pa = capsule_chart(r, l, CapChart::Axial, a1, a2).unwrap();
            let pb = capsule_chart(r, l, CapChart::TiltedX, b1, b2).unwrap();
            assert_abs_diff_eq!((pa.point - pb.point).norm(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!((pa.frame.column(2) - pb.frame.column(2)).norm(), 0.0, epsilon = 1e-9);
            let (c1, c2) = convert_cap_coords(r, l, CapChart::TiltedX, b1, b2, CapChart::Axial).unwrap();
            assert_abs_diff_eq!(c1, a1, epsilon = 1e-9);
            assert_abs_diff_eq!(crate::geom::wrap_angle(c2 - a2), 0.0, epsilon = 1e-9);
        }
    }
}
