//! Dense Nyström discretizations of the double-layer adjoint K*, the double-layer
//! operator K and the logarithmic single-layer operator S, plus the energy Gram matrix.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;
use crate::mesh::Mesh;
use crate::quadrature::{barycentric_weights, gauss_legendre, lagrange_basis, own_panel_log_weights};

const INV_2PI: f64 = 1.0 / (2.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    K,
    KStar,
    S,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssemblyMeta {
    pub method: String,
    pub beta: f64,
    /// Panels closer than this many panel lengths get adaptive quadrature.
    pub near_factor: f64,
}

#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: Mat<f64>,
    pub kind: OperatorKind,
    pub mesh_id: u64,
    pub meta: AssemblyMeta,
}

impl DenseOperator {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Row-major little-endian f64 with a (rows, cols) u64 header.
    pub fn write_binary(&self, mut w: impl std::io::Write) -> Result<()> {
        let (r, c) = (self.matrix.nrows(), self.matrix.ncols());
        w.write_all(&(r as u64).to_le_bytes())?;
        w.write_all(&(c as u64).to_le_bytes())?;
        for i in 0..r {
            for j in 0..c {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(mut r: impl std::io::Read) -> Result<Mat<f64>> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut b8)?;
                m[(i, j)] = f64::from_le_bytes(b8);
            }
        }
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols()).map(|j| format!("{:.17e}", self.matrix[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    fn check_finite(self) -> Result<Self> {
        let n = self.matrix.nrows();
        for j in 0..n {
            for i in 0..n {
                if !self.matrix[(i, j)].is_finite() {
                    return Err(Error::Assembly(format!("non-finite {:?} entry at ({i},{j})", self.kind)));
                }
            }
        }
        Ok(self)
    }
}

fn check_distinct(mesh: &Mesh) -> Result<()> {
    let n = mesh.len();
    let nodes = mesh.nodes();
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j && nodes[i].pos.dist(nodes[j].pos) == 0.0 {
            return Err(Error::Assembly(format!("nodes {i} and {j} coincide")));
        }
    }
    Ok(())
}

/// Reset the upper halves of the vector registers. Wide faer kernels can leave them
/// dirty, after which legacy-SSE code such as libm's `ln` runs many times slower.
pub(crate) fn clear_upper_simd() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the instruction exists on every AVX-capable CPU and touches no memory.
        unsafe { std::arch::x86_64::_mm256_zeroupper() }
    }
}

fn double_layer(mesh: &Mesh, adjoint: bool) -> Result<DenseOperator> {
    check_distinct(mesh)?;
    clear_upper_simd();
    let nodes = mesh.nodes();
    let n = nodes.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = nodes[i].pos;
        for j in 0..n {
            let nj = &nodes[j];
            if i == j {
                m[(i, j)] = nj.curvature * nj.weight / (4.0 * PI);
                continue;
            }
            let d = xi - nj.pos;
            let r2 = d.norm_sq();
            if r2 == 0.0 {
                return Err(Error::Assembly(format!("nodes {i} and {j} coincide")));
            }
            m[(i, j)] = if adjoint {
                INV_2PI * d.dot(nodes[i].normal) / r2 * nj.weight
            } else {
                -INV_2PI * d.dot(nj.normal) / r2 * nj.weight
            };
        }
    }
    let kind = if adjoint { OperatorKind::KStar } else { OperatorKind::K };
    DenseOperator {
        matrix: m,
        kind,
        mesh_id: mesh.id(),
        meta: AssemblyMeta {
            method: "nystrom-curvature-diagonal".into(),
            beta: 1.0,
            near_factor: 0.0,
        },
    }
    .check_finite()
}

/// Discrete K*: (1/2π)(x_i−x_j)·n_i/|x_i−x_j|² w_j with diagonal κ_i w_i/(4π).
pub fn assemble_k_star(mesh: &Mesh) -> Result<DenseOperator> {
    double_layer(mesh, true)
}

/// Discrete K: −(1/2π)(x_i−x_j)·n_j/|x_i−x_j|² w_j with the same diagonal.
pub fn assemble_k(mesh: &Mesh) -> Result<DenseOperator> {
    double_layer(mesh, false)
}

/// Discrete S with kernel −(1/2π) log(β|x−y|).
pub fn assemble_s(mesh: &Mesh, beta: f64) -> Result<DenseOperator> {
    if !(beta > 0.0) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    check_distinct(mesh)?;
    clear_upper_simd();
    let (matrix, method, near) = if mesh.is_uniform() {
        (s_kress(mesh, beta), "kress-periodic-log", 0.0)
    } else {
        (s_panels(mesh, beta, NEAR_FACTOR), "panel-product-integration", NEAR_FACTOR)
    };
    DenseOperator {
        matrix,
        kind: OperatorKind::S,
        mesh_id: mesh.id(),
        meta: AssemblyMeta { method: method.into(), beta, near_factor: near },
    }
    .check_finite()
}

const NEAR_FACTOR: f64 = 1.0;

fn s_kress(mesh: &Mesh, beta: f64) -> Mat<f64> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    let l = mesh.curve().total_length();
    let half = n / 2;
    // weights of ∫_0^1 log(2|sin π(t_i − t)|) f(t) dt at lag m
    let r: Vec<f64> = (0..n)
        .map(|m| {
            let mut acc = 0.0;
            for k in 1..half {
                acc += (2.0 * PI * (k * m) as f64 / n as f64).cos() / k as f64;
            }
            acc += (PI * m as f64).cos() / (2.0 * half as f64);
            -acc / n as f64
        })
        .collect();
    let w = l / n as f64;
    let mut s = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let rem = if i == j {
                (l / (2.0 * PI)).ln()
            } else {
                let dt = nodes[i].t - nodes[j].t;
                nodes[i].pos.dist(nodes[j].pos).ln() - (2.0 * (PI * dt).sin().abs()).ln()
            };
            let lag = (i + n - j) % n;
            s[(i, j)] = -INV_2PI * (l * r[lag] + w * rem) - INV_2PI * beta.ln() * w;
        }
    }
    s
}

/// Sub-intervals of [-1,1] on which a point at `target` is well separated from the panel.
fn near_pieces(mesh: &Mesh, pi: usize, target: Vec2, lo: f64, hi: f64, depth: usize, out: &mut Vec<(f64, f64)>) {
    let panel_len = 2.0 * mesh.panels()[pi].half_len;
    let piece_len = panel_len * (hi - lo) / 2.0;
    let mid = 0.5 * (lo + hi);
    let d = [lo, mid, hi].iter().map(|&u| mesh.panel_point(pi, u).dist(target)).fold(f64::INFINITY, f64::min);
    if d >= 0.75 * piece_len || depth >= 60 {
        out.push((lo, hi));
        return;
    }
    near_pieces(mesh, pi, target, lo, mid, depth + 1, out);
    near_pieces(mesh, pi, target, mid, hi, depth + 1, out);
}

fn s_panels(mesh: &Mesh, beta: f64, near_factor: f64) -> Mat<f64> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    let lb = beta.ln();
    let mut s = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[(i, j)] = -INV_2PI * (nodes[i].pos.dist(nodes[j].pos).ln() + lb) * nodes[j].weight;
            }
        }
    }
    let (gx, gw) = mesh.gauss_rule();
    let p = gx.len();
    let wlog = own_panel_log_weights(gx, gw);
    let bw = barycentric_weights(gx);
    let (fx, fw) = gauss_legendre(16);
    let mut basis = vec![0.0; p];
    let mut pieces = Vec::new();
    for (pi, panel) in mesh.panels().iter().enumerate() {
        let h = panel.half_len;
        let a = panel.first_node;
        // own panel: exact log moments times a smooth remainder
        for ii in 0..p {
            let i = a + ii;
            for jj in 0..p {
                let j = a + jj;
                let rem = if ii == jj {
                    0.0
                } else {
                    (nodes[i].pos.dist(nodes[j].pos) / (h * (gx[ii] - gx[jj]).abs())).ln()
                };
                s[(i, j)] = -INV_2PI * h * (wlog[ii][jj] + gw[jj] * ((beta * h).ln() + rem));
            }
        }
        // targets close to this panel (other than its own nodes)
        let plen = 2.0 * h;
        for i in 0..n {
            if i >= a && i < a + p {
                continue;
            }
            let xi = nodes[i].pos;
            let dmin = (a..a + p).map(|j| nodes[j].pos.dist(xi)).fold(f64::INFINITY, f64::min);
            if dmin > near_factor * plen {
                continue;
            }
            pieces.clear();
            near_pieces(mesh, pi, xi, -1.0, 1.0, 0, &mut pieces);
            let mut row = vec![0.0; p];
            for &(lo, hi) in &pieces {
                let hh = 0.5 * (hi - lo);
                for (&x, &w) in fx.iter().zip(&fw) {
                    let u = lo + hh * (x + 1.0);
                    let r = mesh.panel_point(pi, u).dist(xi);
                    let f = -INV_2PI * (beta * r).ln() * w * hh * h;
                    lagrange_basis(gx, &bw, u, &mut basis);
                    for q in 0..p {
                        row[q] += f * basis[q];
                    }
                }
            }
            for q in 0..p {
                s[(i, a + q)] = row[q];
            }
        }
    }
    s
}

/// Energy Gram matrix G = sym(W S) and its Cholesky factor on the mean-zero subspace.
#[derive(Clone, Debug)]
pub struct SGram {
    pub gram: Mat<f64>,
    pub weights: Vec<f64>,
    /// Householder vector v with H = I − 2vvᵀ/(vᵀv) mapping w to a multiple of e_p.
    pub householder: Vec<f64>,
    pub pivot: usize,
    /// Lower Cholesky factor of (H G H) with row and column p removed.
    pub chol_mean_zero: Mat<f64>,
    /// Whether G itself is positive definite on the whole space.
    pub full_space_definite: bool,
    pub warnings: Vec<String>,
    pub mesh_id: u64,
}

pub fn symmetrized_weighted(s: &DenseOperator, w: &[f64]) -> Mat<f64> {
    let n = s.n();
    Mat::from_fn(n, n, |i, j| 0.5 * (w[i] * s.matrix[(i, j)] + w[j] * s.matrix[(j, i)]))
}

/// Householder vector reflecting `c` onto the axis of its largest entry, and that axis.
/// Pivoting on the largest entry keeps tiny graded-mesh weights from mixing into every column.
pub fn householder_vector(c: &[f64]) -> (Vec<f64>, usize) {
    let p = (0..c.len()).max_by(|&a, &b| c[a].abs().partial_cmp(&c[b].abs()).unwrap()).unwrap_or(0);
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = c.to_vec();
    let sign = if c[p] >= 0.0 { 1.0 } else { -1.0 };
    v[p] += sign * norm;
    (v, p)
}

/// Square matrix with row and column `p` removed.
pub fn drop_index(a: &Mat<f64>, p: usize) -> Mat<f64> {
    let m = a.nrows() - 1;
    let k = |i: usize| if i < p { i } else { i + 1 };
    Mat::from_fn(m, m, |i, j| a[(k(i), k(j))])
}

/// H A H for symmetric A, in O(n²).
pub fn householder_conjugate(a: &Mat<f64>, v: &[f64]) -> Mat<f64> {
    let n = a.nrows();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        return a.clone();
    }
    let beta = 2.0 / vv;
    let av: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum()).collect();
    let vav: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
    // HAH = A − β(v avᵀ + av vᵀ) + β² (vᵀAv) v vᵀ
    Mat::from_fn(n, n, |i, j| a[(i, j)] - beta * (v[i] * av[j] + av[i] * v[j]) + beta * beta * vav * v[i] * v[j])
}

/// Apply H to a vector in place.
pub fn householder_apply(v: &[f64], x: &mut [f64]) {
    let vv: f64 = v.iter().map(|a| a * a).sum();
    if vv == 0.0 {
        return;
    }
    let c = 2.0 * v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / vv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= c * vi;
    }
}

pub fn build_s_gram(s: &DenseOperator, mesh: &Mesh) -> Result<SGram> {
    if s.kind != OperatorKind::S || s.mesh_id != mesh.id() {
        return Err(invalid("build_s_gram needs the S operator of this mesh"));
    }
    let w = mesh.weights();
    let gram = symmetrized_weighted(s, &w);
    let (v, pivot) = householder_vector(&w);
    let reduced = drop_index(&householder_conjugate(&gram, &v), pivot);
    let chol = reduced
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositive("S is not positive on the mean-zero subspace".into()))?;
    let l = chol.L().to_owned();
    let full_space_definite = gram.llt(Side::Lower).is_ok();
    let mut warnings = Vec::new();
    if !full_space_definite {
        warnings.push("Gram matrix indefinite on the full space (logarithmic capacity ≥ 1/β); using mean-zero deflation".into());
    }
    Ok(SGram { gram, weights: w, householder: v, pivot, chol_mean_zero: l, full_space_definite, warnings, mesh_id: mesh.id() })
}

impl SGram {
    /// ⟨f, g⟩ in the energy inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let n = f.len();
        let mut acc = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += f[i] * self.gram[(i, j)];
            }
            acc += col * g[j];
        }
        acc
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }
}

fn frob(m: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc.sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PlemeljResidual {
    /// ‖KS − SK*‖_F / ‖S‖_F on raw matrices.
    pub plain: f64,
    /// Same after the similarity W^{1/2} · W^{−1/2}, i.e. in the weighted L² operator sense.
    pub weighted: f64,
}

fn same_mesh(ops: &[&DenseOperator]) -> Result<()> {
    let id = ops[0].mesh_id;
    if ops.iter().any(|o| o.mesh_id != id || o.n() != ops[0].n()) {
        return Err(invalid("operators live on different meshes"));
    }
    Ok(())
}

/// Discrete residual of KS = SK*.
pub fn plemelj_residual(k: &DenseOperator, ks: &DenseOperator, s: &DenseOperator, mesh: &Mesh) -> Result<PlemeljResidual> {
    same_mesh(&[k, ks, s])?;
    if k.kind != OperatorKind::K || ks.kind != OperatorKind::KStar || s.kind != OperatorKind::S {
        return Err(invalid("plemelj_residual expects (K, K*, S)"));
    }
    let r = &k.matrix * &s.matrix - &s.matrix * &ks.matrix;
    let plain = frob(&r) / frob(&s.matrix);
    let sq: Vec<f64> = mesh.weights().iter().map(|w| w.sqrt()).collect();
    let n = r.nrows();
    let rw = Mat::from_fn(n, n, |i, j| sq[i] * r[(i, j)] / sq[j]);
    let sw = Mat::from_fn(n, n, |i, j| sq[i] * s.matrix[(i, j)] / sq[j]);
    Ok(PlemeljResidual { plain, weighted: frob(&rw) / frob(&sw) })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussResidual {
    /// max_i |Σ_j K_ij − 1/2|: the double layer of a constant density.
    pub k_rows: f64,
    /// max_j |Σ_i w_i K*_ij / w_j − 1/2|, the same identity seen from K*.
    pub k_star_weighted_columns: f64,
    /// max_i |Σ_j K*_ij − 1/2|; zero only for circles.
    pub k_star_rows: f64,
    /// sqrt(Σ_j w_j e_j² / Σ w) with e_j the weighted column defect; the L² size of
    /// K[1] − 1/2, which stays meaningful on graded meshes where single corner nodes dominate the max.
    pub weighted_rms: f64,
}

pub fn gauss_identity_residual(ks: &DenseOperator, mesh: &Mesh) -> Result<GaussResidual> {
    if ks.kind != OperatorKind::KStar || ks.mesh_id != mesh.id() {
        return Err(invalid("gauss_identity_residual expects K* on this mesh"));
    }
    let w = mesh.weights();
    let n = w.len();
    let mut col = 0.0f64;
    let mut row = 0.0f64;
    let mut ms = 0.0;
    for j in 0..n {
        let c: f64 = (0..n).map(|i| w[i] * ks.matrix[(i, j)]).sum::<f64>() / w[j];
        col = col.max((c - 0.5).abs());
        ms += w[j] * (c - 0.5).powi(2);
    }
    for i in 0..n {
        let r: f64 = (0..n).map(|j| ks.matrix[(i, j)]).sum();
        row = row.max((r - 0.5).abs());
    }
    // K = W⁻¹ K*ᵀ W, so K row sums are the weighted K* column sums
    let total: f64 = w.iter().sum();
    Ok(GaussResidual { k_rows: col, k_star_weighted_columns: col, k_star_rows: row, weighted_rms: (ms / total).sqrt() })
}

/// max over off-diagonal entries of 2π |K*_ij| |x_i − x_j| / w_j; at most 1 by the triangle inequality.
pub fn kernel_bound_ratio(ks: &DenseOperator, mesh: &Mesh) -> f64 {
    let nodes = mesh.nodes();
    let n = nodes.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = nodes[i].pos.dist(nodes[j].pos);
                worst = worst.max(2.0 * PI * ks.matrix[(i, j)].abs() * r / nodes[j].weight);
            }
        }
    }
    worst
}

/// Asymmetry ‖GK* − (GK*)ᵀ‖_F / ‖GK*‖_F.
pub fn energy_symmetry_defect(ks: &DenseOperator, g: &SGram) -> f64 {
    let gk = &g.gram * &ks.matrix;
    let n = gk.nrows();
    let d = Mat::from_fn(n, n, |i, j| gk[(i, j)] - gk[(j, i)]);
    frob(&d) / frob(&gk)
}

/// Largest singular value of W^{1/2} S W^{−1/2}: the weighted L² operator norm of S.
pub fn s_weighted_norm(s: &DenseOperator, mesh: &Mesh) -> Result<f64> {
    let sq: Vec<f64> = mesh.weights().iter().map(|w| w.sqrt()).collect();
    let n = s.n();
    let sw = Mat::from_fn(n, n, |i, j| sq[i] * s.matrix[(i, j)] / sq[j]);
    let svd = sw.singular_values().map_err(|e| Error::LinAlg(format!("{e:?}")))?;
    Ok(svd[0])
}

/// Save a matrix in the binary layout of [`DenseOperator::write_binary`].
pub fn save_binary(op: &DenseOperator, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    op.write_binary(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{make_circle, make_ellipse, make_lens};
    use crate::mesh::{build_graded_mesh, build_uniform_mesh, GradingSpec};
    use std::sync::Arc;

    fn circle_mesh(r: f64, n: usize) -> Mesh {
        build_uniform_mesh(Arc::new(make_circle(r).unwrap()), n).unwrap()
    }

    #[test]
    fn circle_kstar_constant_kernel() {
        let m = circle_mesh(1.0, 32);
        let k = assemble_k_star(&m).unwrap();
        let w = m.weights();
        for i in 0..32 {
            for j in 0..32 {
                assert!((k.get(i, j) - w[j] / (4.0 * PI)).abs() < 1e-14);
            }
        }
        let kk = assemble_k(&m).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert!((k.get(i, j) - kk.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn circle_s_fourier_modes() {
        let n = 64;
        let m = circle_mesh(1.0, n);
        let s = assemble_s(&m, 1.0).unwrap();
        for mode in 1..6 {
            let f: Vec<f64> = m.nodes().iter().map(|nd| (2.0 * PI * mode as f64 * nd.t).cos()).collect();
            for i in 0..n {
                let sf: f64 = (0..n).map(|j| s.get(i, j) * f[j]).sum();
                assert!((sf - f[i] / (2.0 * mode as f64)).abs() < 1e-12, "mode {mode}");
            }
        }
        // constants are annihilated when the radius is 1
        for i in 0..n {
            let s1: f64 = (0..n).map(|j| s.get(i, j)).sum();
            assert!(s1.abs() < 1e-13);
        }
    }

    #[test]
    fn circle_s_constant_matches_radius_log() {
        let m = circle_mesh(0.5, 64);
        let s = assemble_s(&m, 1.0).unwrap();
        let s1: f64 = (0..64).map(|j| s.get(3, j)).sum();
        assert!((s1 - (-0.5 * 0.5f64.ln())).abs() < 1e-13);
        let g = build_s_gram(&s, &m).unwrap();
        assert!(g.full_space_definite);
        let g1 = build_s_gram(&assemble_s(&circle_mesh(1.0, 64), 1.0).unwrap(), &circle_mesh(1.0, 64)).unwrap();
        assert!(!g1.warnings.is_empty() || g1.full_space_definite);
    }

    #[test]
    fn transpose_relation() {
        let m = build_uniform_mesh(Arc::new(make_ellipse(1.0, 0.6).unwrap()), 64).unwrap();
        let ks = assemble_k_star(&m).unwrap();
        let k = assemble_k(&m).unwrap();
        let w = m.weights();
        for i in 0..64 {
            for j in 0..64 {
                let t = ks.get(j, i) * w[j] / w[i];
                assert!((k.get(i, j) - t).abs() < 1e-13 * (1.0 + t.abs()));
            }
        }
    }

    #[test]
    fn ellipse_plemelj_and_gauss() {
        let m = build_uniform_mesh(Arc::new(make_ellipse(1.0, (3.0f64 / 7.0).atanh()).unwrap()), 128).unwrap();
        let ks = assemble_k_star(&m).unwrap();
        let k = assemble_k(&m).unwrap();
        let s = assemble_s(&m, 1.0).unwrap();
        let r = plemelj_residual(&k, &ks, &s, &m).unwrap();
        assert!(r.plain < 1e-8 && r.weighted < 1e-8, "{r:?}");
        let g = gauss_identity_residual(&ks, &m).unwrap();
        assert!(g.k_rows < 1e-10, "{g:?}");
        assert!(kernel_bound_ratio(&ks, &m) <= 1.0 + 1e-12);
    }

    #[test]
    fn lens_s_assembles_and_is_positive() {
        let lens = Arc::new(make_lens(0.75 * PI, 2.0).unwrap());
        let m = build_graded_mesh(lens, &GradingSpec { depth: 8, base_panels: 8, ..Default::default() }).unwrap();
        let s = assemble_s(&m, 1.0).unwrap();
        let g = build_s_gram(&s, &m).unwrap();
        assert_eq!(g.chol_mean_zero.nrows(), m.len() - 1);
        // the bilinear form is symmetric on smooth densities
        let w = m.weights();
        let n = m.len();
        let f: Vec<f64> = m.nodes().iter().map(|nd| nd.pos.x + 0.3).collect();
        let h: Vec<f64> = m.nodes().iter().map(|nd| nd.pos.y * nd.pos.y - nd.pos.x).collect();
        let form = |a: &[f64], b: &[f64]| -> f64 {
            (0..n).map(|i| w[i] * b[i] * (0..n).map(|j| s.get(i, j) * a[j]).sum::<f64>()).sum()
        };
        let (fg, gf) = (form(&f, &h), form(&h, &f));
        assert!((fg - gf).abs() < 1e-9 * fg.abs().max(gf.abs()), "{fg} {gf}");
    }

    #[test]
    fn binary_roundtrip() {
        let m = circle_mesh(1.0, 8);
        let k = assemble_k_star(&m).unwrap();
        let mut buf = Vec::new();
        k.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 64 * 8);
        let back = DenseOperator::read_binary(&buf[..]).unwrap();
        assert_eq!(back[(2, 3)], k.get(2, 3));
    }

    #[test]
    fn householder_maps_weights_to_axis() {
        let w = vec![0.3, 0.1, 0.2, 0.4];
        let (v, p) = householder_vector(&w);
        assert_eq!(p, 3);
        let mut x = w.clone();
        householder_apply(&v, &mut x);
        assert!(x[..3].iter().all(|a| a.abs() < 1e-15));
    }
}
