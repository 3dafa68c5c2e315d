//! Closed planar curves: smooth shapes, lenses, corner perturbations and their
//! reflection symmetries.

mod perturbation;
mod segment;
mod shapes;

pub use perturbation::{make_type_t_perturbation, perturbation_metrics, PerturbationMetrics, TypeTParams, TypeTPerturbation};
pub use segment::{CircleArc, EllipseArc, Frame, GraphArc, GraphFn, LineSeg, MirrorArc, Segment, SubArc};
pub use shapes::{make_circle, make_ellipse, make_hkl_curve, make_lens, HklParams};

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{reflect, segments_intersect, turn_angle, Vec2};
use crate::quadrature::composite_gauss;

/// Tangent jumps smaller than this (radians) count as smooth joins.
const CORNER_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CornerOrientation {
    Outward,
    Inward,
}

#[derive(Clone, Debug, Serialize)]
pub struct CornerTag {
    pub t_corner: f64,
    /// Half of the exterior angle, in (0, pi).
    pub theta: f64,
    pub orientation: CornerOrientation,
    /// Index of the segment that starts at the corner.
    pub segment: usize,
}

impl CornerTag {
    /// Half-width b = |1/2 - theta/pi| of the essential-spectrum interval of the corner.
    pub fn b(&self) -> f64 {
        (0.5 - self.theta / PI).abs()
    }
}

/// Mirror symmetry about a line, with the induced parameter involution
/// t -> 2 t_fixed - t (mod 1).
#[derive(Clone, Debug, Serialize)]
pub struct ReflectionSymmetry {
    pub label: String,
    pub point: Vec2,
    pub dir: Vec2,
    /// A parameter where the curve crosses the line.
    pub fixed_t: f64,
}

impl ReflectionSymmetry {
    pub fn new(label: &str, point: Vec2, dir: Vec2, fixed_t: f64) -> Self {
        Self { label: label.to_string(), point, dir: dir.normalized(), fixed_t: fixed_t.rem_euclid(1.0) }
    }

    pub fn involution(&self, t: f64) -> f64 {
        (2.0 * self.fixed_t - t).rem_euclid(1.0)
    }

    pub fn mirror(&self, p: Vec2) -> Vec2 {
        reflect(p, self.point, self.dir)
    }

    /// Whether the parameter t is (numerically) on the symmetry line.
    pub fn fixes(&self, t: f64) -> bool {
        let d = (self.involution(t) - t).rem_euclid(1.0);
        d.min(1.0 - d) < 1e-9
    }

    /// Largest distance between mirror(position(t)) and position(involution(t)) over `n` samples.
    pub fn max_defect(&self, curve: &ParametrizedCurve, n: usize) -> f64 {
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                self.mirror(curve.position(t)).dist(curve.position(self.involution(t)))
            })
            .fold(0.0, f64::max)
    }
}

/// Closed, counter-clockwise, arclength-parametrized planar curve.
#[derive(Clone, Debug)]
pub struct ParametrizedCurve {
    name: String,
    segments: Vec<Segment>,
    starts: Vec<f64>,
    length: f64,
    corners: Vec<CornerTag>,
    symmetries: Vec<ReflectionSymmetry>,
}

impl ParametrizedCurve {
    /// Assemble a closed curve; consecutive segments must join continuously.
    pub fn from_segments(
        name: &str,
        segments: Vec<Segment>,
        symmetries: Vec<ReflectionSymmetry>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Geometry("curve needs at least one segment".into()));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for s in &segments {
            if !(s.length() > 0.0) {
                return Err(Error::Geometry("segment of non-positive length".into()));
            }
            starts.push(acc);
            acc += s.length();
        }
        let length = acc;
        let n = segments.len();
        let mut corners = Vec::new();
        for k in 0..n {
            let prev = &segments[(k + n - 1) % n];
            let end = prev.eval(prev.length());
            let start = segments[k].eval(0.0);
            let gap = end.pos.dist(start.pos);
            if gap > 1e-9 * length {
                return Err(Error::Geometry(format!("segments {} and {k} do not join (gap {gap:e})", (k + n - 1) % n)));
            }
            let turn = turn_angle(end.tangent, start.tangent);
            if turn.abs() > CORNER_TOL {
                let theta = 0.5 * (PI + turn);
                let orientation = if theta > PI / 2.0 { CornerOrientation::Outward } else { CornerOrientation::Inward };
                corners.push(CornerTag { t_corner: starts[k] / length, theta, orientation, segment: k });
            }
        }
        let curve = Self { name: name.to_string(), segments, starts, length, corners, symmetries };
        if curve.signed_area() <= 0.0 {
            return Err(Error::Geometry("curve must be traversed counter-clockwise".into()));
        }
        Ok(curve)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total_length(&self) -> f64 {
        self.length
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Arclength at which segment `k` starts.
    pub fn segment_start(&self, k: usize) -> f64 {
        self.starts[k]
    }

    pub fn corners(&self) -> &[CornerTag] {
        &self.corners
    }

    pub fn is_smooth(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn symmetries(&self) -> &[ReflectionSymmetry] {
        &self.symmetries
    }

    pub fn symmetry(&self, label: &str) -> Option<(usize, &ReflectionSymmetry)> {
        self.symmetries.iter().enumerate().find(|(_, s)| s.label == label)
    }

    /// Whether a segment join at segment `k` is a corner.
    pub fn corner_at_segment(&self, k: usize) -> Option<&CornerTag> {
        self.corners.iter().find(|c| c.segment == k)
    }

    /// Segment index and local arclength for a global arclength.
    pub fn locate_arclength(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.length);
        let k = self.starts.partition_point(|&x| x <= s).saturating_sub(1);
        (k, (s - self.starts[k]).min(self.segments[k].length()))
    }

    pub fn eval_arclength(&self, s: f64) -> Frame {
        let (k, local) = self.locate_arclength(s);
        self.segments[k].eval(local)
    }

    pub fn eval_segment(&self, k: usize, s: f64) -> Frame {
        self.segments[k].eval(s)
    }

    /// Frame at parameter t (taken modulo 1).
    pub fn eval(&self, t: f64) -> Frame {
        self.eval_arclength(t.rem_euclid(1.0) * self.length)
    }

    pub fn position(&self, t: f64) -> Vec2 {
        self.eval(t).pos
    }

    pub fn tangent(&self, t: f64) -> Vec2 {
        self.eval(t).tangent
    }

    pub fn outward_normal(&self, t: f64) -> Vec2 {
        self.eval(t).normal()
    }

    pub fn curvature(&self, t: f64) -> f64 {
        self.eval(t).curvature
    }

    /// Integral of `f(frame)` over the curve, segment by segment.
    pub fn integrate(&self, f: impl Fn(&Frame) -> f64) -> f64 {
        self.segments
            .iter()
            .map(|seg| composite_gauss(|s| f(&seg.eval(s)), 0.0, seg.length(), 32, 20))
            .sum()
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.integrate(|f| f.pos.cross(f.tangent))
    }

    /// Total curvature plus corner turning angles; 2 pi for a simple closed curve.
    pub fn total_turning(&self) -> f64 {
        let smooth = self.integrate(|f| f.curvature);
        let corners: f64 = self.corners.iter().map(|c| 2.0 * c.theta - PI).sum();
        smooth + corners
    }

    /// Polyline sample at t = i/n.
    pub fn sample(&self, n: usize) -> Vec<(f64, Frame)> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (t, self.eval(t))
            })
            .collect()
    }

    /// No two non-adjacent edges of an `n`-point polyline sample intersect.
    pub fn is_simple(&self, n: usize) -> bool {
        let pts: Vec<Vec2> = self.sample(n).into_iter().map(|(_, f)| f.pos).collect();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_intersect(a, b, pts[j], pts[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// CSV with columns t,x,y,nx,ny,kappa.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("t,x,y,nx,ny,kappa\n");
        for (t, f) in self.sample(n) {
            let nn = f.normal();
            let _ = writeln!(out, "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", f.pos.x, f.pos.y, nn.x, nn.y, f.curvature);
        }
        out
    }

    /// One-sided tangents (incoming, outgoing) at a corner.
    pub fn corner_tangents(&self, c: &CornerTag) -> (Vec2, Vec2) {
        let n = self.segments.len();
        let prev = &self.segments[(c.segment + n - 1) % n];
        (prev.eval(prev.length()).tangent, self.segments[c.segment].eval(0.0).tangent)
    }

    /// Segment mirrored onto `k` by a symmetry, assuming the segmentation is symmetric.
    pub fn mirror_segment(&self, sym: &ReflectionSymmetry, k: usize) -> Option<usize> {
        let l = self.length;
        let target = (2.0 * sym.fixed_t * l - self.starts[k] - self.segments[k].length()).rem_euclid(l);
        (0..self.segments.len()).find(|&j| {
            let d = (self.starts[j] - target).abs();
            d.min(l - d) < 1e-9 * l && (self.segments[j].length() - self.segments[k].length()).abs() < 1e-9 * l
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lens_turning_and_corners() {
        let c = make_lens(3.0 * PI / 4.0, 2.0).unwrap();
        assert_eq!(c.corners().len(), 2);
        assert!((c.total_turning() - 2.0 * PI).abs() < 1e-10);
        for k in c.corners() {
            let (a, b) = c.corner_tangents(k);
            let exterior = PI + turn_angle(a, b);
            assert!((exterior - 1.5 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_csv_header() {
        let c = make_circle(1.0).unwrap();
        let csv = c.to_csv(4);
        assert!(csv.starts_with("t,x,y,nx,ny,kappa\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn mirror_segment_on_lens() {
        let c = make_lens(0.3 * PI, 1.0).unwrap();
        let (_, tips) = c.symmetry("tips").unwrap();
        assert_eq!(c.mirror_segment(tips, 0), Some(1));
        let (_, bis) = c.symmetry("bisector").unwrap();
        assert_eq!(c.mirror_segment(bis, 0), Some(0));
    }
}
