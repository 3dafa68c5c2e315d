use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::segment::{CircleArc, EllipseArc, LineSeg, Segment};
use super::{ParametrizedCurve, ReflectionSymmetry};
use crate::error::{invalid, Result};
use crate::geom::Vec2;

const X_AXIS: Vec2 = Vec2::new(1.0, 0.0);
const Y_AXIS: Vec2 = Vec2::new(0.0, 1.0);

pub fn make_circle(radius: f64) -> Result<ParametrizedCurve> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!("circle radius must be positive, got {radius}")));
    }
    let seg = Segment::Circle(CircleArc::new(Vec2::default(), radius, 0.0, 2.0 * PI));
    ParametrizedCurve::from_segments(
        "circle",
        vec![seg],
        vec![
            ReflectionSymmetry::new("x-axis", Vec2::default(), X_AXIS, 0.0),
            ReflectionSymmetry::new("y-axis", Vec2::default(), Y_AXIS, 0.25),
        ],
    )
}

/// Ellipse with foci (+-R, 0) on the elliptic-coordinate level set rho = rho0.
pub fn make_ellipse(focal_r: f64, rho0: f64) -> Result<ParametrizedCurve> {
    if !(focal_r > 0.0) || !focal_r.is_finite() {
        return Err(invalid(format!("focal distance must be positive, got {focal_r}")));
    }
    if !(rho0 > 0.0) || !rho0.is_finite() {
        return Err(invalid(format!("rho0 must be positive (rho0 <= 0 degenerates to a segment), got {rho0}")));
    }
    let (a, b) = (focal_r * rho0.cosh(), focal_r * rho0.sinh());
    let seg = Segment::Ellipse(EllipseArc::new(Vec2::default(), a, b, 0.0, 2.0 * PI));
    ParametrizedCurve::from_segments(
        "ellipse",
        vec![seg],
        vec![
            ReflectionSymmetry::new("major", Vec2::default(), X_AXIS, 0.0),
            ReflectionSymmetry::new("minor", Vec2::default(), Y_AXIS, 0.25),
        ],
    )
}

/// Lens bounded by two circular arcs of equal radius meeting at tips (+-chord/2, 0)
/// with half exterior angle `theta`. Outward corners for theta > pi/2.
pub fn make_lens(theta: f64, chord: f64) -> Result<ParametrizedCurve> {
    if !(theta > 0.0 && theta < PI) {
        return Err(invalid(format!("lens angle must lie in (0, pi), got {theta}")));
    }
    if (theta - PI / 2.0).abs() < 1e-14 {
        return Err(invalid("theta = pi/2 gives a circle with no corner"));
    }
    if !(chord > 0.0) || !chord.is_finite() {
        return Err(invalid(format!("lens chord must be positive, got {chord}")));
    }
    let alpha = 2.0 * PI - 2.0 * theta;
    let half = 0.5 * chord;
    let d = half / (alpha / 2.0).tan();
    let r = half / (alpha / 2.0).sin();
    let upper = CircleArc::new(Vec2::new(0.0, -d), r, PI / 2.0 - alpha / 2.0, alpha);
    let lower = CircleArc::new(Vec2::new(0.0, d), r, -PI / 2.0 - alpha / 2.0, alpha);
    ParametrizedCurve::from_segments(
        "lens",
        vec![Segment::Circle(upper), Segment::Circle(lower)],
        vec![
            ReflectionSymmetry::new("tips", Vec2::default(), X_AXIS, 0.0),
            ReflectionSymmetry::new("bisector", Vec2::default(), Y_AXIS, 0.25),
        ],
    )
}

/// Ellipse with a straight-sided cap attached without smoothing: an outward tip on
/// the minor axis and two inward attachment corners.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HklParams {
    pub focal_r: f64,
    pub rho0: f64,
    /// Half-distance between the two attachment points.
    pub attach_half_width: f64,
    /// Slope magnitude of the two straight sides; 1 gives a right-angled tip.
    pub slope: f64,
}

impl Default for HklParams {
    fn default() -> Self {
        Self { focal_r: 1.0, rho0: (3.0f64 / 7.0).atanh(), attach_half_width: 0.1, slope: 1.0 }
    }
}

pub fn make_hkl_curve(p: &HklParams) -> Result<ParametrizedCurve> {
    let (a, b) = (p.focal_r * p.rho0.cosh(), p.focal_r * p.rho0.sinh());
    if !(p.focal_r > 0.0 && p.rho0 > 0.0) {
        return Err(invalid("attachment curve needs a non-degenerate ellipse"));
    }
    let xi = p.attach_half_width;
    if !(xi > 0.0 && xi < 0.5 * a) || !(p.slope > 0.0) {
        return Err(invalid("attachment half-width must lie in (0, a/2) and slope must be positive"));
    }
    let ye = b * (1.0 - (xi / a).powi(2)).sqrt();
    let wr = (ye / b).atan2(xi / a);
    let tip = Vec2::new(0.0, ye + p.slope * xi);
    let arc = EllipseArc::new(Vec2::default(), a, b, PI - wr, 2.0 * PI + wr);
    let right = LineSeg::new(Vec2::new(xi, ye), tip);
    let left = LineSeg::new(tip, Vec2::new(-xi, ye));
    let t_tip = {
        let (le, ll) = (Segment::Ellipse(arc.clone()).length(), tip.dist(Vec2::new(xi, ye)));
        (le + ll) / (le + 2.0 * ll)
    };
    ParametrizedCurve::from_segments(
        "hkl",
        vec![Segment::Ellipse(arc), Segment::Line(right), Segment::Line(left)],
        vec![ReflectionSymmetry::new("minor", Vec2::default(), Y_AXIS, t_tip)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::CornerOrientation;

    #[test]
    fn circle_basics() {
        let c = make_circle(2.0).unwrap();
        assert!((c.total_length() - 4.0 * PI).abs() < 1e-14);
        for i in 0..16 {
            assert!((c.curvature(i as f64 / 16.0) - 0.5).abs() < 1e-15);
        }
        assert!(make_circle(0.0).is_err());
    }

    #[test]
    fn ellipse_rejects_degenerate() {
        assert!(make_ellipse(1.0, 0.0).is_err());
        assert!(make_ellipse(-1.0, 0.3).is_err());
    }

    #[test]
    fn lens_orientations() {
        let out = make_lens(0.75 * PI, 2.0).unwrap();
        assert!(out.corners().iter().all(|c| c.orientation == CornerOrientation::Outward));
        let inw = make_lens(0.25 * PI, 2.0).unwrap();
        assert!(inw.corners().iter().all(|c| c.orientation == CornerOrientation::Inward));
        assert!(make_lens(PI / 2.0, 2.0).is_err());
    }

    #[test]
    fn hkl_has_three_corners() {
        let c = make_hkl_curve(&HklParams::default()).unwrap();
        let k = c.corners();
        assert_eq!(k.len(), 3);
        let outward: Vec<_> = k.iter().filter(|c| c.orientation == CornerOrientation::Outward).collect();
        assert_eq!(outward.len(), 1);
        assert!((outward[0].theta - 0.75 * PI).abs() < 1e-12);
        let sym = &c.symmetries()[0];
        assert!(sym.fixes(outward[0].t_corner));
        assert!(sym.max_defect(&c, 257) < 1e-12);
        assert!((c.total_turning() - 2.0 * PI).abs() < 1e-9);
    }
}
