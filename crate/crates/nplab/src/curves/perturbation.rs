//! Corner insertion into a smooth curve: the disk of radius delta about x0 is
//! replaced by a lens-corner arc joined to the untouched remainder by C^2 quintic blends.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::segment::{GraphArc, GraphFn, MirrorArc, Segment, SubArc};
use super::{ParametrizedCurve, ReflectionSymmetry};
use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;

#[derive(Clone, Debug)]
pub struct TypeTParams {
    pub x0: Vec2,
    pub delta: f64,
    pub theta: f64,
    /// Parameters bounding the protected arc A' (measured on the base with x0 at t = 0).
    pub t2: f64,
    pub s2: f64,
    /// Radius of the disk about the tip inside which the curve is exactly a lens corner.
    pub delta_prime: Option<f64>,
    /// Largest admissible slope of the perturbed arc in the local frame.
    pub lipschitz_bound: f64,
    /// Index of a base symmetry to preserve; x0 must lie on its line.
    pub symmetry: Option<usize>,
    pub corner_radius: Option<f64>,
}

impl TypeTParams {
    pub fn new(x0: Vec2, delta: f64, theta: f64, t2: f64, s2: f64) -> Self {
        Self { x0, delta, theta, t2, s2, delta_prime: None, lipschitz_bound: 10.0, symmetry: None, corner_radius: None }
    }
}

#[derive(Clone, Debug)]
pub struct TypeTPerturbation {
    pub base: Arc<ParametrizedCurve>,
    pub curve: Arc<ParametrizedCurve>,
    pub x0: Vec2,
    pub delta: f64,
    pub theta: f64,
    pub delta_prime: f64,
    pub t1: f64,
    pub s1: f64,
    pub t2: f64,
    pub s2: f64,
    pub corner_radius: f64,
    pub tip: Vec2,
    /// Largest |slope| of the replaced arc in the local frame.
    pub max_slope: f64,
    pub symmetric: bool,
    s_x0: f64,
    outer_start: f64,
    outer_len: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerturbationMetrics {
    pub len_d: f64,
    pub dist_a_prime_d: f64,
    pub ratio: f64,
}

struct LocalFrame<'a> {
    base: &'a ParametrizedCurve,
    o: Vec2,
    ex: Vec2,
    ey: Vec2,
    s0: f64,
}

impl LocalFrame<'_> {
    /// Base arclength and graph data (value, slope, second derivative) above abscissa xi.
    fn graph(&self, xi: f64) -> (f64, [f64; 3]) {
        let mut s = self.s0 + xi;
        for _ in 0..60 {
            let f = self.base.eval_arclength(s);
            let ds = ((f.pos - self.o).dot(self.ex) - xi) / f.tangent.dot(self.ex);
            s -= ds;
            if ds.abs() < 1e-16 * self.base.total_length() {
                break;
            }
        }
        let f = self.base.eval_arclength(s);
        let tx = f.tangent.dot(self.ex);
        let d = f.tangent.dot(self.ey) / tx;
        let dd = f.curvature * (1.0 + d * d).powf(1.5) / self.ex.cross(self.ey);
        (s, [(f.pos - self.o).dot(self.ey), d, dd])
    }
}

pub fn make_type_t_perturbation(base: Arc<ParametrizedCurve>, p: &TypeTParams) -> Result<TypeTPerturbation> {
    if !base.is_smooth() {
        return Err(invalid("type-T base curve must be smooth"));
    }
    if !(p.theta > 0.0 && p.theta < PI) || (p.theta - PI / 2.0).abs() < 1e-12 {
        return Err(invalid(format!("corner angle must lie in (0, pi) and differ from pi/2, got {}", p.theta)));
    }
    if !(p.delta > 0.0) {
        return Err(invalid("disk radius must be positive"));
    }
    let l0 = base.total_length();
    let sym: Option<ReflectionSymmetry> = match p.symmetry {
        Some(i) => Some(base.symmetries().get(i).cloned().ok_or_else(|| invalid("unknown base symmetry"))?),
        None => None,
    };
    let s_x0 = locate_point(&base, p.x0, sym.as_ref())?;
    let f0 = base.eval_arclength(s_x0);
    // With a mirror line, the frame sits exactly on it so reflections are exact.
    let (o, ex, ey) = match &sym {
        Some(sy) => {
            let ey = if sy.dir.dot(f0.normal()) >= 0.0 { sy.dir } else { -sy.dir };
            (sy.point + sy.dir * (f0.pos - sy.point).dot(sy.dir), ey.perp_left(), ey)
        }
        None => (f0.pos, f0.tangent, f0.normal()),
    };
    let frame = LocalFrame { base: &base, o, ex, ey, s0: s_x0 };
    let delta = p.delta;

    // Lens corner prototype: two arcs of radius r through the tip, interior below.
    let alpha = 2.0 * PI - 2.0 * p.theta;
    let (sa, ca) = (alpha / 2.0).sin_cos();
    let r = p.corner_radius.unwrap_or(delta.max(delta / (1.0 - ca)));
    let (cx, cy) = (-r * ca, -r * sa);
    let xi2 = 0.5 * delta;
    let w = 0.25 * delta;
    if xi2 - cx >= r {
        return Err(invalid("corner radius too small for the disk"));
    }
    let g = GraphFn::CircleBranch { cx, cy, r, lift: 0.0 };
    let lift = frame.graph(xi2).1[0] - g.eval(xi2)[0];
    let g_r = GraphFn::CircleBranch { cx, cy, r, lift };

    let (s_right, f_right) = frame.graph(xi2 + w);
    let blend_r = GraphFn::quintic_hermite(xi2 - w, xi2 + w, g_r.eval(xi2 - w), f_right);
    let corner_r = Segment::Graph(GraphArc::new(o, frame.ex, frame.ey, 0.0, xi2 - w, g_r.clone()));
    let blend_r_seg = Segment::Graph(GraphArc::new(o, frame.ex, frame.ey, xi2 - w, xi2 + w, blend_r.clone()));

    let symmetric = sym.is_some();
    let (s_left, corner_l, blend_l, blend_l_fn) = if symmetric {
        let s_left = 2.0 * s_x0 - s_right;
        (
            s_left,
            Segment::Mirror(MirrorArc::new(corner_r.clone(), sym.as_ref().unwrap().point, frame.ey)),
            Segment::Mirror(MirrorArc::new(blend_r_seg.clone(), sym.as_ref().unwrap().point, frame.ey)),
            None,
        )
    } else {
        let g_l = GraphFn::CircleBranch { cx: -cx, cy, r, lift };
        let mut xi1 = -xi2;
        for _ in 0..60 {
            let gv = g_l.eval(xi1);
            let fv = frame.graph(xi1).1;
            let dx = (gv[0] - fv[0]) / (gv[1] - fv[1]);
            xi1 -= dx;
            if dx.abs() < 1e-15 * delta {
                break;
            }
        }
        if !(xi1 > -0.75 * delta && xi1 < -0.25 * delta) {
            return Err(Error::Geometry("left junction of the corner arc not found inside the disk".into()));
        }
        let (s_left, f_left) = frame.graph(xi1 - w);
        let blend = GraphFn::quintic_hermite(xi1 - w, xi1 + w, f_left, g_l.eval(xi1 + w));
        (
            s_left,
            Segment::Graph(GraphArc::new(o, frame.ex, frame.ey, xi1 + w, 0.0, g_l)),
            Segment::Graph(GraphArc::new(o, frame.ex, frame.ey, xi1 - w, xi1 + w, blend.clone())),
            Some((xi1, blend)),
        )
    };
    let outer_start = s_right;
    let outer_len = (s_left - s_right).rem_euclid(l0);
    let outer = Segment::Sub(SubArc::new(base.clone(), outer_start, outer_len));
    let lens = [outer_len, blend_l.length(), corner_l.length(), corner_r.length(), blend_r_seg.length()];
    let total: f64 = lens.iter().sum();
    let tip_t = (lens[0] + lens[1] + lens[2]) / total;
    let tip = o + frame.ey * lift;
    let syms = if symmetric { vec![ReflectionSymmetry::new(&sym.as_ref().unwrap().label, sym.as_ref().unwrap().point, sym.as_ref().unwrap().dir, tip_t)] } else { vec![] };
    let curve = ParametrizedCurve::from_segments("type-t", vec![outer, blend_l, corner_l, corner_r, blend_r_seg], syms)?;
    if curve.corners().len() != 1 || curve.corners()[0].segment != 3 {
        return Err(Error::Geometry(format!("expected exactly one corner at the tip, found {}", curve.corners().len())));
    }

    // Disk exits of the base curve and connectedness of the disk intersection.
    let dist = |s: f64| base.eval_arclength(s).pos.dist(o) - delta;
    let exit = |dir: f64| -> Result<f64> {
        let step = delta / 64.0;
        let mut a = 0.0;
        while dist(s_x0 + dir * (a + step)) < 0.0 {
            a += step;
            if a > 0.5 * l0 {
                return Err(invalid("disk contains half of the base curve"));
            }
        }
        let mut b = a + step;
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if dist(s_x0 + dir * m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    };
    let fwd = exit(1.0)?;
    let back = exit(-1.0)?;
    let n = 4096;
    for i in 0..n {
        let u = fwd + (l0 - fwd - back) * (i as f64 + 0.5) / n as f64;
        if dist(s_x0 + u) <= 0.0 {
            return Err(invalid("disk meets the base curve in more than one arc"));
        }
    }
    let t1 = fwd / l0;
    let s1 = 1.0 - back / l0;
    if !(t1 < p.t2 && p.t2 < p.s2 && p.s2 < s1) {
        return Err(invalid(format!("need t1 < t2 < s2 < s1, got t1={t1:.6}, t2={}, s2={}, s1={s1:.6}", p.t2, p.s2)));
    }

    // Slope bound and containment of the replaced arc.
    let mut max_slope = 0.0f64;
    let mut pieces: Vec<(f64, f64, GraphFn)> = vec![(0.0, xi2 - w, g_r.clone()), (xi2 - w, xi2 + w, blend_r.clone())];
    if let Some((xi1, b)) = &blend_l_fn {
        pieces.push((xi1 + w, 0.0, GraphFn::CircleBranch { cx: -cx, cy, r, lift }));
        pieces.push((xi1 - w, xi1 + w, b.clone()));
    }
    let mut min_tip_gap = f64::INFINITY;
    for (k, (a, b, f)) in pieces.iter().enumerate() {
        for i in 0..=400 {
            let xi = a + (b - a) * i as f64 / 400.0;
            let v = f.eval(xi);
            max_slope = max_slope.max(v[1].abs());
            let q = o + frame.ex * xi + frame.ey * v[0];
            if q.dist(o) >= delta {
                return Err(invalid("replaced arc leaves the disk; reduce the corner height or enlarge delta"));
            }
            if k % 2 == 1 {
                min_tip_gap = min_tip_gap.min(q.dist(tip));
            }
        }
    }
    if max_slope > p.lipschitz_bound {
        return Err(invalid(format!("slope {max_slope:.3} exceeds the Lipschitz bound {}", p.lipschitz_bound)));
    }
    let delta_prime = p.delta_prime.unwrap_or(0.5 * min_tip_gap);
    if !(delta_prime > 0.0 && delta_prime < delta && delta_prime < min_tip_gap) {
        return Err(invalid(format!("delta' = {delta_prime} must be below the blend distance {min_tip_gap:.3e} and delta")));
    }
    if !curve.is_simple(2048) {
        return Err(Error::Geometry("perturbed curve self-intersects".into()));
    }
    Ok(TypeTPerturbation {
        base: base.clone(),
        curve: Arc::new(curve),
        x0: o,
        delta,
        theta: p.theta,
        delta_prime,
        t1,
        s1,
        t2: p.t2,
        s2: p.s2,
        corner_radius: r,
        tip,
        max_slope,
        symmetric,
        s_x0,
        outer_start,
        outer_len,
    })
}

/// Base arclength of `x0`, snapped to the symmetry line when one is requested.
fn locate_point(base: &ParametrizedCurve, x0: Vec2, sym: Option<&ReflectionSymmetry>) -> Result<f64> {
    let l = base.total_length();
    let tol = 1e-9 * l;
    if let Some(sym) = sym {
        for t in [sym.fixed_t, sym.fixed_t + 0.5] {
            if base.position(t).dist(x0) < tol {
                return Ok(t.rem_euclid(1.0) * l);
            }
        }
        return Err(invalid("x0 must be a crossing of the curve with the symmetry line"));
    }
    let n = 4096;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..n {
        let s = l * i as f64 / n as f64;
        let d = base.eval_arclength(s).pos.dist(x0);
        if d < best.0 {
            best = (d, s);
        }
    }
    let mut s = best.1;
    for _ in 0..50 {
        let f = base.eval_arclength(s);
        let g = (f.pos - x0).dot(f.tangent);
        let dg = 1.0 + (f.pos - x0).dot(f.tangent.perp_left()) * f.curvature;
        let ds = g / dg;
        s -= ds;
        if ds.abs() < 1e-16 * l {
            break;
        }
    }
    if base.eval_arclength(s).pos.dist(x0) > tol {
        return Err(invalid("x0 does not lie on the base curve"));
    }
    Ok(s.rem_euclid(l))
}

impl TypeTPerturbation {
    /// Base arclength where the untouched arc (first segment of the perturbed curve) starts.
    pub fn outer_start(&self) -> f64 {
        self.outer_start
    }

    /// Base arclength at base parameter t, with x0 at t = 0.
    pub fn base_arclength(&self, t: f64) -> f64 {
        (self.s_x0 + t * self.base.total_length()).rem_euclid(self.base.total_length())
    }

    /// Arclength on the perturbed curve of a base point on the untouched arc, if it is there.
    pub fn gamma_arclength(&self, base_s: f64) -> Option<f64> {
        let local = (base_s - self.outer_start).rem_euclid(self.base.total_length());
        (local <= self.outer_len).then_some(local)
    }

    /// The base curve split into the untouched arc (bitwise the same segment as the
    /// first segment of the perturbed curve) and the replaced remainder.
    pub fn base_split_curve(&self) -> Result<ParametrizedCurve> {
        let l0 = self.base.total_length();
        let a = Segment::Sub(SubArc::new(self.base.clone(), self.outer_start, self.outer_len));
        let b = Segment::Sub(SubArc::new(self.base.clone(), self.outer_start + self.outer_len, l0 - self.outer_len));
        ParametrizedCurve::from_segments("type-t-base", vec![a, b], vec![])
    }

    /// Range [start, end] of perturbed-curve arclength covered by D (end may exceed the length).
    pub fn d_range(&self) -> (f64, f64) {
        let a1 = self.gamma_local(self.t1);
        let b1 = self.gamma_local(self.s1);
        (b1, a1 + self.curve.total_length())
    }

    /// Range of perturbed-curve arclength covered by A'.
    pub fn a_prime_range(&self) -> (f64, f64) {
        (self.gamma_local(self.t2), self.gamma_local(self.s2))
    }

    fn gamma_local(&self, t: f64) -> f64 {
        (self.base_arclength(t) - self.outer_start).rem_euclid(self.base.total_length())
    }
}

pub fn perturbation_metrics(p: &TypeTPerturbation) -> PerturbationMetrics {
    let l0 = p.base.total_length();
    let len_d = p.curve.total_length() - (p.s1 - p.t1) * l0;
    let (a0, a1) = p.a_prime_range();
    let (d0, d1) = p.d_range();
    let c = &p.curve;
    let at = |s: f64| c.eval_arclength(s).pos;
    let n = 1500;
    let ua = |i: usize| a0 + (a1 - a0) * i as f64 / n as f64;
    let ud = |j: usize| d0 + (d1 - d0) * j as f64 / n as f64;
    let pa: Vec<Vec2> = (0..=n).map(|i| at(ua(i))).collect();
    let pd: Vec<Vec2> = (0..=n).map(|j| at(ud(j))).collect();
    let mut best = (f64::INFINITY, 0, 0);
    for (i, x) in pa.iter().enumerate() {
        for (j, y) in pd.iter().enumerate() {
            let d = x.dist(*y);
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    // Alternating golden-section refinement around the best sampled pair.
    let (mut u, mut v) = (ua(best.1), ud(best.2));
    let (ha, hd) = ((a1 - a0) / n as f64, (d1 - d0) / n as f64);
    for _ in 0..40 {
        u = golden(|x| at(x).dist(at(v)), (u - ha).max(a0), (u + ha).min(a1));
        v = golden(|y| at(u).dist(at(y)), (v - hd).max(d0), (v + hd).min(d1));
    }
    let dist = at(u).dist(at(v)).min(best.0);
    PerturbationMetrics { len_d, dist_a_prime_d: dist, ratio: len_d.sqrt() / dist }
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{make_ellipse, make_lens, CornerOrientation};

    fn ellipse() -> Arc<ParametrizedCurve> {
        Arc::new(make_ellipse(1.0, (3.0f64 / 7.0).atanh()).unwrap())
    }

    fn top_params(base: &ParametrizedCurve, delta: f64, theta: f64) -> TypeTParams {
        let mut p = TypeTParams::new(base.position(0.25), delta, theta, 0.06, 0.94);
        p.symmetry = Some(1);
        p
    }

    #[test]
    fn outward_corner_on_minor_axis() {
        let base = ellipse();
        let p = make_type_t_perturbation(base.clone(), &top_params(&base, 0.1, 0.75 * PI)).unwrap();
        let c = &p.curve;
        assert_eq!(c.corners().len(), 1);
        assert_eq!(c.corners()[0].orientation, CornerOrientation::Outward);
        assert!((c.corners()[0].theta - 0.75 * PI).abs() < 1e-10);
        let sym = &c.symmetries()[0];
        assert!(sym.fixes(c.corners()[0].t_corner));
        assert!(sym.max_defect(c, 1001) < 1e-12);
        assert!((sym.involution(sym.involution(0.123)) - 0.123).abs() < 1e-12);
        assert!((c.total_turning() - 2.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn untouched_arc_is_bitwise_base() {
        let base = ellipse();
        let p = make_type_t_perturbation(base.clone(), &top_params(&base, 0.1, 0.8 * PI)).unwrap();
        for i in 0..50 {
            let t = p.t1 + (p.s1 - p.t1) * (i as f64 + 0.5) / 50.0;
            let sb = p.base_arclength(t);
            let sg = p.gamma_arclength(sb).unwrap();
            let g = p.curve.eval_segment(0, sg);
            assert_eq!(g, base.eval_arclength(p.outer_start() + sg));
            assert!(g.pos.dist(base.eval_arclength(sb).pos) < 1e-13);
        }
    }

    #[test]
    fn corner_is_congruent_to_lens_corner() {
        let base = ellipse();
        let theta = 0.8 * PI;
        let p = make_type_t_perturbation(base.clone(), &top_params(&base, 0.1, theta)).unwrap();
        let alpha = 2.0 * PI - 2.0 * theta;
        let lens = make_lens(theta, 2.0 * p.corner_radius * (alpha / 2.0).sin()).unwrap();
        let c = &p.curve;
        let k = &c.corners()[0];
        let tip = c.eval_segment(k.segment, 0.0).pos;
        assert!(tip.dist(p.tip) < 1e-14);
        // Right tip of the lens is at t = 0; compare arclength-matched points on both sides.
        let lt = lens.position(0.0);
        for &s in &[1e-6, 1e-3, 0.5 * p.delta_prime] {
            let g_out = c.eval_segment(k.segment, s).pos.dist(tip);
            let l_out = lens.eval_arclength(s).pos.dist(lt);
            assert!((g_out - l_out).abs() < 1e-12, "{g_out} vs {l_out}");
        }
    }

    #[test]
    fn inward_corner_and_asymmetric_path() {
        let base = ellipse();
        let mut prm = TypeTParams::new(base.position(0.3), 0.08, 0.3 * PI, 0.05, 0.95);
        prm.symmetry = None;
        let p = make_type_t_perturbation(base.clone(), &prm).unwrap();
        assert_eq!(p.curve.corners()[0].orientation, CornerOrientation::Inward);
        assert!((p.curve.total_turning() - 2.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn rejections() {
        let base = ellipse();
        let mut prm = top_params(&base, 0.1, 0.75 * PI);
        prm.lipschitz_bound = 0.5;
        assert!(make_type_t_perturbation(base.clone(), &prm).is_err());
        let prm = TypeTParams::new(Vec2::new(5.0, 5.0), 0.1, 0.75 * PI, 0.1, 0.9);
        assert!(make_type_t_perturbation(base.clone(), &prm).is_err());
        // disk larger than the minor axis: intersection is disconnected or t2 invalid
        let prm = top_params(&base, 1.2, 0.75 * PI);
        assert!(make_type_t_perturbation(base, &prm).is_err());
    }

    #[test]
    fn halving_delta_shrinks_ratio() {
        let base = ellipse();
        let m1 = perturbation_metrics(&make_type_t_perturbation(base.clone(), &top_params(&base, 0.1, 0.75 * PI)).unwrap());
        let m2 = perturbation_metrics(&make_type_t_perturbation(base.clone(), &top_params(&base, 0.05, 0.75 * PI)).unwrap());
        assert!(m2.len_d < m1.len_d);
        assert!(m2.dist_a_prime_d > m1.dist_a_prime_d);
        assert!(m2.ratio < m1.ratio);
    }
}
