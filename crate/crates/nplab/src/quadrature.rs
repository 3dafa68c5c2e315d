//! Gauss-Legendre rules, logarithmic product-integration moments and
//! barycentric Lagrange interpolation on [-1, 1].

use std::f64::consts::PI;

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
///
/// Nodes are exactly antisymmetric: `x[k] == -x[n-1-k]` bitwise.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // z is the i-th largest node
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = wi;
        w[i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Values P_0(x) .. P_{n-1}(x).
pub fn legendre_values(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = x;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
    out
}

/// Moments `M_k(t) = \int_{-1}^{1} log|t - s| P_k(s) ds` for k < n and |t| < 1.
pub fn log_moments(t: f64, n: usize) -> Vec<f64> {
    assert!(t.abs() < 1.0);
    // Legendre functions of the second kind; the upward recurrence is stable inside (-1, 1).
    let mut q = vec![0.0; n + 2];
    q[0] = 0.5 * ((1.0 + t) / (1.0 - t)).ln();
    q[1] = t * q[0] - 1.0;
    for k in 1..=n {
        let kf = k as f64;
        q[k + 1] = ((2.0 * kf + 1.0) * t * q[k] - kf * q[k - 1]) / (kf + 1.0);
    }
    let mut m = vec![0.0; n];
    m[0] = (1.0 + t) * (1.0 + t).ln() + (1.0 - t) * (1.0 - t).ln() - 2.0;
    for k in 1..n {
        m[k] = 2.0 / (2.0 * k as f64 + 1.0) * (q[k + 1] - q[k - 1]);
    }
    m
}

/// Row i, column j: `\int_{-1}^{1} log|x_i - s| l_j(s) ds` with l_j the Lagrange
/// basis on the Gauss-Legendre nodes x.
pub fn own_panel_log_weights(x: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    let p = x.len();
    let pk: Vec<Vec<f64>> = x.iter().map(|&xj| legendre_values(p, xj)).collect();
    (0..p)
        .map(|i| {
            let m = log_moments(x[i], p);
            (0..p)
                .map(|j| {
                    let s: f64 = (0..p)
                        .map(|k| (2.0 * k as f64 + 1.0) / 2.0 * m[k] * pk[j][k])
                        .sum();
                    s * w[j]
                })
                .collect()
        })
        .collect()
}

/// Barycentric weights for interpolation on `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            let prod: f64 = (0..nodes.len())
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product();
            1.0 / prod
        })
        .collect()
}

/// Lagrange basis values `l_j(x)` written into `out`.
pub fn lagrange_basis(nodes: &[f64], bw: &[f64], x: f64, out: &mut [f64]) {
    if let Some(hit) = nodes.iter().position(|&n| n == x) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[hit] = 1.0;
        return;
    }
    let mut sum = 0.0;
    for j in 0..nodes.len() {
        let t = bw[j] / (x - nodes[j]);
        out[j] = t;
        sum += t;
    }
    out.iter_mut().for_each(|v| *v /= sum);
}

/// Composite Gauss-Legendre integral of `f` over [a, b] with `pieces` equal sub-intervals.
pub fn composite_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = a + h * k as f64;
        let s: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * f(lo + 0.5 * h * (xi + 1.0)))
            .sum();
        total += 0.5 * h * s;
    }
    total
}

/// Cumulative arclength table for a speed function on [u0, u1], invertible by Newton.
#[derive(Clone, Debug)]
pub struct ArcTable {
    edges: Vec<f64>,
    cum: Vec<f64>,
    gx: Vec<f64>,
    gw: Vec<f64>,
}

impl ArcTable {
    pub fn new(speed: &impl Fn(f64) -> f64, u0: f64, u1: f64, pieces: usize) -> Self {
        let (gx, gw) = gauss_legendre(24);
        let edges: Vec<f64> = (0..=pieces)
            .map(|k| u0 + (u1 - u0) * k as f64 / pieces as f64)
            .collect();
        let mut cum = vec![0.0];
        for k in 0..pieces {
            let v = Self::piece(speed, &gx, &gw, edges[k], edges[k + 1]);
            cum.push(cum[k] + v);
        }
        Self { edges, cum, gx, gw }
    }

    fn piece(speed: &impl Fn(f64) -> f64, gx: &[f64], gw: &[f64], lo: f64, hi: f64) -> f64 {
        let h = hi - lo;
        0.5 * h
            * gx.iter()
                .zip(gw)
                .map(|(&x, &w)| w * speed(lo + 0.5 * h * (x + 1.0)))
                .sum::<f64>()
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn arclength(&self, speed: &impl Fn(f64) -> f64, u: f64) -> f64 {
        let n = self.edges.len() - 1;
        let k = match self.edges.partition_point(|&e| e <= u) {
            0 => 0,
            i => (i - 1).min(n - 1),
        };
        self.cum[k] + Self::piece(speed, &self.gx, &self.gw, self.edges[k], u)
    }

    /// Parameter u with arclength(u) = s.
    pub fn invert(&self, speed: &impl Fn(f64) -> f64, s: f64) -> f64 {
        let n = self.edges.len() - 1;
        let k = match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(n - 1),
        };
        let (lo, hi) = (self.edges[k], self.edges[k + 1]);
        let frac = (s - self.cum[k]) / (self.cum[k + 1] - self.cum[k]);
        let mut u = lo + (hi - lo) * frac.clamp(0.0, 1.0);
        for _ in 0..60 {
            let f = self.cum[k] + Self::piece(speed, &self.gx, &self.gw, lo, u) - s;
            let du = f / speed(u);
            u -= du;
            if du.abs() <= 1e-16 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        for deg in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "deg {deg}: {q} vs {exact}");
        }
        for k in 0..16 {
            assert_eq!(x[k], -x[15 - k]);
        }
    }

    #[test]
    fn log_moment_zero_matches_closed_form_integral() {
        // brute-force oracle: split at t and integrate each side with a graded composite rule
        let t = 0.37;
        let m = log_moments(t, 4);
        let brute = |k: usize| {
            let f = |s: f64| (t - s).abs().ln() * legendre_values(k + 1, s)[k];
            let mut total = 0.0;
            let mut a = -1.0;
            let mut b = t;
            for _ in 0..48 {
                let mid = b - (b - a) * 0.5;
                total += composite_gauss(f, a, mid, 1, 20);
                a = mid;
            }
            let left_end = a;
            a = t;
            b = 1.0;
            for _ in 0..48 {
                let mid = a + (b - a) * 0.5;
                total += composite_gauss(f, mid, b, 1, 20);
                b = mid;
            }
            // the two slivers touching t: ∫_0^e log u du = e(ln e − 1)
            let sliver = |e: f64| e * (e.ln() - 1.0);
            total + legendre_values(k + 1, t)[k] * (sliver(t - left_end) + sliver(b - t))
        };
        for k in 0..4 {
            assert!((m[k] - brute(k)).abs() < 1e-12, "k={k} {} {}", m[k], brute(k));
        }
    }

    #[test]
    fn own_panel_weights_integrate_log_times_polynomial() {
        let (x, w) = gauss_legendre(8);
        let wl = own_panel_log_weights(&x, &w);
        // f(s) = s^3: sum_j W_ij f(x_j) = \int log|x_i - s| s^3 ds
        for i in 0..8 {
            let q: f64 = (0..8).map(|j| wl[i][j] * x[j].powi(3)).sum();
            let m = log_moments(x[i], 4);
            // s^3 = (2 P_3 + 3 P_1)/5
            let exact = (2.0 * m[3] + 3.0 * m[1]) / 5.0;
            assert!((q - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrange_basis_reproduces_polynomials() {
        let (x, _) = gauss_legendre(6);
        let bw = barycentric_weights(&x);
        let mut l = vec![0.0; 6];
        for &t in &[-0.9, 0.123, x[2], 0.999] {
            lagrange_basis(&x, &bw, t, &mut l);
            let v: f64 = (0..6).map(|j| l[j] * (x[j].powi(5) - x[j])).sum();
            assert!((v - (t.powi(5) - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn arc_table_inverts() {
        let speed = |u: f64| (1.0 + 4.0 * u * u).sqrt();
        let t = ArcTable::new(&speed, 0.0, 1.0, 16);
        let exact = 0.5 * 5f64.sqrt() + 0.25 * (2.0 + 5f64.sqrt()).ln();
        assert!((t.total() - exact).abs() < 1e-14);
        let u = t.invert(&speed, 0.8);
        assert!((t.arclength(&speed, u) - 0.8).abs() < 1e-14);
    }
}
