//! Smooth arclength-parametrized pieces from which closed curves are assembled.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::curves::ParametrizedCurve;
use crate::geom::{reflect, reflect_dir, Vec2};
use crate::quadrature::ArcTable;

/// Position, unit tangent (counter-clockwise direction) and signed curvature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub pos: Vec2,
    pub tangent: Vec2,
    pub curvature: f64,
}

impl Frame {
    pub fn normal(&self) -> Vec2 {
        self.tangent.perp_right()
    }
}

#[derive(Clone, Debug)]
pub enum Segment {
    Line(LineSeg),
    Circle(CircleArc),
    Ellipse(EllipseArc),
    Graph(GraphArc),
    Sub(SubArc),
    Mirror(MirrorArc),
}

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line(s) => s.len,
            Segment::Circle(s) => s.len,
            Segment::Ellipse(s) => s.len,
            Segment::Graph(s) => s.len,
            Segment::Sub(s) => s.len,
            Segment::Mirror(s) => s.len,
        }
    }

    /// Evaluate at arclength `s` measured from the segment start.
    pub fn eval(&self, s: f64) -> Frame {
        match self {
            Segment::Line(l) => l.eval(s),
            Segment::Circle(c) => c.eval(s),
            Segment::Ellipse(e) => e.eval(s),
            Segment::Graph(g) => g.eval(s),
            Segment::Sub(a) => a.eval(s),
            Segment::Mirror(m) => m.eval(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LineSeg {
    pub p0: Vec2,
    pub p1: Vec2,
    dir: Vec2,
    len: f64,
}

impl LineSeg {
    pub fn new(p0: Vec2, p1: Vec2) -> Self {
        let len = p0.dist(p1);
        Self { p0, p1, dir: (p1 - p0) * (1.0 / len), len }
    }

    fn eval(&self, s: f64) -> Frame {
        Frame { pos: self.p0 + self.dir * s, tangent: self.dir, curvature: 0.0 }
    }
}

/// Circular arc; `sweep` > 0 runs counter-clockwise about the center.
#[derive(Clone, Debug)]
pub struct CircleArc {
    pub center: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    pub sweep: f64,
    len: f64,
}

impl CircleArc {
    pub fn new(center: Vec2, radius: f64, start_angle: f64, sweep: f64) -> Self {
        Self { center, radius, start_angle, sweep, len: radius * sweep.abs() }
    }

    fn eval(&self, s: f64) -> Frame {
        let sg = self.sweep.signum();
        let a = self.start_angle + sg * s / self.radius;
        let (sa, ca) = a.sin_cos();
        Frame {
            pos: self.center + Vec2::new(ca, sa) * self.radius,
            tangent: Vec2::new(-sa, ca) * sg,
            curvature: sg / self.radius,
        }
    }
}

/// Arc of the ellipse (a cos w, b sin w) + center for w in [w0, w1], counter-clockwise.
///
/// Arclength is the Fourier series of the (pi-periodic, even) speed, which is exact to
/// rounding once the coefficients have decayed.
#[derive(Clone, Debug)]
pub struct EllipseArc {
    pub center: Vec2,
    pub a: f64,
    pub b: f64,
    pub w0: f64,
    pub w1: f64,
    coeffs: Arc<Vec<f64>>,
    s0: f64,
    len: f64,
}

impl EllipseArc {
    pub fn new(center: Vec2, a: f64, b: f64, w0: f64, w1: f64) -> Self {
        let coeffs = Arc::new(speed_fourier(a, b));
        let mut e = Self { center, a, b, w0, w1, coeffs, s0: 0.0, len: 0.0 };
        e.s0 = e.arclength_at(w0);
        e.len = e.arclength_at(w1) - e.s0;
        e
    }

    fn speed(&self, w: f64) -> f64 {
        let (s, c) = w.sin_cos();
        (self.a * s).hypot(self.b * c)
    }

    /// Arclength from w = 0 to w.
    pub fn arclength_at(&self, w: f64) -> f64 {
        let c = &self.coeffs;
        let mut s = c[0] * w;
        for (k, ck) in c.iter().enumerate().skip(1) {
            s += ck * (2.0 * k as f64 * w).sin() / (2.0 * k as f64);
        }
        s
    }

    /// Ellipse angle w at arclength `s` from the arc start.
    pub fn angle_at(&self, s: f64) -> f64 {
        let target = self.s0 + s;
        let mut w = self.w0 + (self.w1 - self.w0) * s / self.len;
        for _ in 0..60 {
            let dw = (self.arclength_at(w) - target) / self.speed(w);
            w -= dw;
            if dw.abs() <= 4e-16 * (1.0 + w.abs()) {
                break;
            }
        }
        w
    }

    fn eval(&self, s: f64) -> Frame {
        let w = self.angle_at(s);
        let (sw, cw) = w.sin_cos();
        let d = Vec2::new(-self.a * sw, self.b * cw);
        let sp = d.norm();
        Frame {
            pos: self.center + Vec2::new(self.a * cw, self.b * sw),
            tangent: d * (1.0 / sp),
            curvature: self.a * self.b / (sp * sp * sp),
        }
    }
}

/// Cosine coefficients c_k of the speed sqrt(a^2 sin^2 w + b^2 cos^2 w) = sum c_k cos(2 k w).
fn speed_fourier(a: f64, b: f64) -> Vec<f64> {
    let mut m = 64usize;
    loop {
        let samples: Vec<f64> = (0..m)
            .map(|j| {
                let w = PI * j as f64 / m as f64;
                (a * w.sin()).hypot(b * w.cos())
            })
            .collect();
        let kmax = m / 2 - 1;
        let mut c = vec![0.0; kmax + 1];
        c[0] = samples.iter().sum::<f64>() / m as f64;
        for (k, ck) in c.iter_mut().enumerate().skip(1) {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, v)| v * (2.0 * PI * (k * j % m) as f64 / m as f64).cos())
                .sum();
            *ck = 2.0 * s / m as f64;
        }
        let tail = c[kmax].abs().max(c[kmax - 1].abs());
        if tail < 1e-15 * c[0] || m >= 1 << 13 {
            let keep = c.iter().rposition(|v| v.abs() > 1e-17 * c[0]).unwrap_or(0);
            c.truncate(keep + 1);
            return c;
        }
        m *= 2;
    }
}

/// Function whose graph, in a local frame, forms a [`GraphArc`].
#[derive(Clone, Debug)]
pub enum GraphFn {
    /// Quintic in u = (xi - xa)/h with power-basis coefficients.
    Quintic { xa: f64, h: f64, c: [f64; 6] },
    /// Upper branch of the circle through (cx, cy) with radius r, shifted by `lift`.
    CircleBranch { cx: f64, cy: f64, r: f64, lift: f64 },
}

impl GraphFn {
    /// Quintic Hermite interpolant matching value, slope and second derivative at both ends.
    pub fn quintic_hermite(xa: f64, xb: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        let h = xb - xa;
        let (f0, d0, dd0) = (left[0], left[1] * h, left[2] * h * h);
        let (f1, d1, dd1) = (right[0], right[1] * h, right[2] * h * h);
        let df = f1 - f0;
        let c = [
            f0,
            d0,
            dd0 / 2.0,
            10.0 * df - 6.0 * d0 - 4.0 * d1 - (3.0 * dd0 - dd1) / 2.0,
            -15.0 * df + 8.0 * d0 + 7.0 * d1 + (3.0 * dd0 - 2.0 * dd1) / 2.0,
            6.0 * df - 3.0 * (d0 + d1) - (dd0 - dd1) / 2.0,
        ];
        GraphFn::Quintic { xa, h, c }
    }

    /// Value, first and second derivative.
    pub fn eval(&self, xi: f64) -> [f64; 3] {
        match *self {
            GraphFn::Quintic { xa, h, ref c } => {
                let u = (xi - xa) / h;
                let v = c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))));
                let d = c[1]
                    + u * (2.0 * c[2] + u * (3.0 * c[3] + u * (4.0 * c[4] + u * 5.0 * c[5])));
                let dd = 2.0 * c[2] + u * (6.0 * c[3] + u * (12.0 * c[4] + u * 20.0 * c[5]));
                [v, d / h, dd / (h * h)]
            }
            GraphFn::CircleBranch { cx, cy, r, lift } => {
                let dx = xi - cx;
                let q = (r * r - dx * dx).sqrt();
                [cy + q + lift, -dx / q, -r * r / (q * q * q)]
            }
        }
    }
}

/// Graph eta = f(xi) over [xi0, xi1] in the frame (origin, e_xi, e_eta), traversed
/// with increasing xi.
#[derive(Clone, Debug)]
pub struct GraphArc {
    pub origin: Vec2,
    pub e_xi: Vec2,
    pub e_eta: Vec2,
    pub xi0: f64,
    pub xi1: f64,
    pub func: GraphFn,
    table: ArcTable,
    len: f64,
}

impl GraphArc {
    pub fn new(origin: Vec2, e_xi: Vec2, e_eta: Vec2, xi0: f64, xi1: f64, func: GraphFn) -> Self {
        let f = func.clone();
        let speed = move |x: f64| {
            let d = f.eval(x)[1];
            (1.0 + d * d).sqrt()
        };
        let table = ArcTable::new(&speed, xi0, xi1, 32);
        let len = table.total();
        Self { origin, e_xi, e_eta, xi0, xi1, func, table, len }
    }

    pub fn point(&self, xi: f64) -> Vec2 {
        let v = self.func.eval(xi)[0];
        self.origin + self.e_xi * xi + self.e_eta * v
    }

    pub fn xi_at(&self, s: f64) -> f64 {
        let speed = |x: f64| {
            let d = self.func.eval(x)[1];
            (1.0 + d * d).sqrt()
        };
        self.table.invert(&speed, s)
    }

    fn eval(&self, s: f64) -> Frame {
        let xi = self.xi_at(s);
        let [v, d, dd] = self.func.eval(xi);
        let p1 = self.e_xi + self.e_eta * d;
        let sp = p1.norm();
        let p2 = self.e_eta * dd;
        Frame {
            pos: self.origin + self.e_xi * xi + self.e_eta * v,
            tangent: p1 * (1.0 / sp),
            curvature: p1.cross(p2) / (sp * sp * sp),
        }
    }
}

/// A stretch of another closed curve, addressed by that curve's arclength.
#[derive(Clone, Debug)]
pub struct SubArc {
    pub base: Arc<ParametrizedCurve>,
    pub start: f64,
    len: f64,
}

impl SubArc {
    pub fn new(base: Arc<ParametrizedCurve>, start: f64, len: f64) -> Self {
        Self { base, start, len }
    }

    fn eval(&self, s: f64) -> Frame {
        self.base.eval_arclength(self.start + s)
    }
}

/// Mirror image of a segment across a line, traversed in reverse so that
/// orientation is preserved.
#[derive(Clone, Debug)]
pub struct MirrorArc {
    pub inner: Box<Segment>,
    pub origin: Vec2,
    pub dir: Vec2,
    len: f64,
}

impl MirrorArc {
    pub fn new(inner: Segment, origin: Vec2, dir: Vec2) -> Self {
        let len = inner.length();
        Self { inner: Box::new(inner), origin, dir, len }
    }

    fn eval(&self, s: f64) -> Frame {
        let f = self.inner.eval(self.len - s);
        Frame {
            pos: reflect(f.pos, self.origin, self.dir),
            tangent: -reflect_dir(f.tangent, self.dir),
            curvature: f.curvature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_gauss;

    #[test]
    fn ellipse_arclength_matches_quadrature() {
        let (a, b) = (1.3, 0.4);
        let e = EllipseArc::new(Vec2::default(), a, b, 0.0, 2.0 * PI);
        let oracle = composite_gauss(|w| (a * w.sin()).hypot(b * w.cos()), 0.0, 2.0 * PI, 64, 30);
        assert!((e.len - oracle).abs() < 1e-13 * oracle);
        let f = e.eval(0.37 * e.len);
        assert!((e.arclength_at(e.angle_at(0.37 * e.len)) - 0.37 * e.len).abs() < 1e-13);
        assert!((f.tangent.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quintic_hermite_matches_end_data() {
        let g = GraphFn::quintic_hermite(0.2, 0.7, [1.0, -2.0, 3.0], [0.5, 0.25, -1.0]);
        let l = g.eval(0.2);
        let r = g.eval(0.7);
        for (x, y) in l.iter().zip([1.0, -2.0, 3.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in r.iter().zip([0.5, 0.25, -1.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_arc_reverses_and_reflects() {
        let c = Segment::Circle(CircleArc::new(Vec2::new(0.0, -1.0), 2f64.sqrt(), PI / 4.0, PI / 2.0));
        let m = MirrorArc::new(c.clone(), Vec2::default(), Vec2::new(1.0, 0.0));
        let f = m.eval(0.3);
        let g = c.eval(c.length() - 0.3);
        assert!((f.pos.x - g.pos.x).abs() < 1e-15 && (f.pos.y + g.pos.y).abs() < 1e-15);
        assert_eq!(f.curvature, g.curvature);
    }
}
