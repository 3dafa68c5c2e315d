//! Minimal 2-vector arithmetic.

use serde::Serialize;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    /// Rotation by -90 degrees; for a counter-clockwise tangent this is the outward normal.
    pub fn perp_right(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn perp_left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn from_angle(a: f64) -> Vec2 {
        Vec2::new(a.cos(), a.sin())
    }

    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Reflection of `p` across the line through `origin` with unit direction `dir`.
pub fn reflect(p: Vec2, origin: Vec2, dir: Vec2) -> Vec2 {
    let d = p - origin;
    let along = dir * d.dot(dir);
    origin + along * 2.0 - d
}

/// Reflection of a free vector (no translation part).
pub fn reflect_dir(v: Vec2, dir: Vec2) -> Vec2 {
    dir * (2.0 * v.dot(dir)) - v
}

/// Signed angle turning `a` into `b`, in (-pi, pi].
pub fn turn_angle(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b))
}

/// Proper intersection test for closed segments [p1,p2] and [q1,q2].
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = (p2 - p1).cross(q1 - p1);
    let d2 = (p2 - p1).cross(q2 - p1);
    let d3 = (q2 - q1).cross(p1 - q1);
    let d4 = (q2 - q1).cross(p2 - q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(p1, p2, q1, d1) || on(p1, p2, q2, d2) || on(q1, q2, p1, d3) || on(q1, q2, p2, d4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_is_involution() {
        let o = Vec2::new(0.3, -1.0);
        let d = Vec2::new(1.0, 2.0).normalized();
        let p = Vec2::new(2.5, 0.7);
        let q = reflect(reflect(p, o, d), o, d);
        assert!(p.dist(q) < 1e-14);
    }

    #[test]
    fn crossing_segments() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 1.0);
        assert!(segments_intersect(a, b, Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)));
        assert!(!segments_intersect(a, b, Vec2::new(2.0, 0.0), Vec2::new(3.0, 1.0)));
    }

    #[test]
    fn turn_angle_signs() {
        let e = Vec2::new(1.0, 0.0);
        assert!((turn_angle(e, Vec2::new(0.0, 1.0)) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((turn_angle(e, Vec2::new(0.0, -1.0)) + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
