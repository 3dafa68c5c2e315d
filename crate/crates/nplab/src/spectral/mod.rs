//! Spectra of K* in the single-layer energy inner product.

mod essential;
mod quasimode;
mod symmetry;

pub use essential::*;
pub use quasimode::*;
pub use symmetry::*;

use std::fmt::Write as _;
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::operators::{drop_index, householder_apply, householder_conjugate, householder_vector, DenseOperator, OperatorKind, SGram};

static SEQUENTIAL: Once = Once::new();

/// Fix faer to its sequential code paths so results are bit-reproducible.
pub fn deterministic_linalg() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Split by this mesh symmetry (index into the curve's symmetries).
    pub parity: Option<usize>,
    pub vectors: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { parity: None, vectors: true }
    }
}

/// The eigenvalue 1/2 and its equilibrium density, the normalised kernel vector of K* − 1/2.
#[derive(Clone, Debug, Serialize)]
pub struct HalfPair {
    /// Exactly 1/2 by the Gauss identity.
    pub lambda: f64,
    /// Discrete W-Rayleigh quotient of K* at the equilibrium density.
    pub rayleigh: f64,
    #[serde(skip)]
    pub density: Vec<f64>,
    /// ‖K*σ − σ/2‖_W / ‖σ‖_W.
    pub residual: f64,
    /// The constant potential value of the equilibrium density.
    pub potential: f64,
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    /// Ascending; the 1/2 eigenpair is held in `half`.
    pub eigenvalues: Vec<f64>,
    pub parity: Vec<Parity>,
    /// Nodal eigenvectors as columns, normalized in the energy norm.
    pub vectors: Option<Mat<f64>>,
    pub s_norms: Vec<f64>,
    pub half: HalfPair,
    pub half_parity: Parity,
    pub mesh_id: u64,
    pub symmetry: Option<usize>,
    pub warnings: Vec<String>,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All eigenvalues including 1/2, ascending.
    pub fn all_eigenvalues(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.push(self.half.lambda);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Eigenvalues of one parity (excluding the 1/2 pair).
    pub fn of_parity(&self, p: Parity) -> Vec<f64> {
        self.eigenvalues.iter().zip(&self.parity).filter(|(_, q)| **q == p).map(|(l, _)| *l).collect()
    }

    pub fn vector(&self, k: usize) -> Option<Vec<f64>> {
        self.vectors.as_ref().map(|v| (0..v.nrows()).map(|i| v[(i, k)]).collect())
    }

    /// Index of the eigenvalue of parity `p` closest to `target`.
    pub fn nearest(&self, target: f64, p: Option<Parity>) -> Option<usize> {
        (0..self.eigenvalues.len())
            .filter(|&k| p.is_none_or(|p| self.parity[k] == p))
            .min_by(|&a, &b| {
                (self.eigenvalues[a] - target).abs().partial_cmp(&(self.eigenvalues[b] - target).abs()).unwrap()
            })
    }

    /// CSV with columns index,eigenvalue,parity,s_norm,stability (empty when unknown).
    pub fn to_csv(&self, stability: Option<&[Option<f64>]>) -> String {
        let mut out = String::from("index,eigenvalue,parity,s_norm,stability\n");
        for k in 0..self.eigenvalues.len() {
            let st = stability.and_then(|s| s.get(k).copied().flatten()).map(|x| format!("{x:.6e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{k},{:.15e},{},{:.12e},{st}",
                self.eigenvalues[k],
                self.parity[k].as_str(),
                self.s_norms[k]
            );
        }
        let _ = writeln!(out, "{},{:.15e},{},,", self.eigenvalues.len(), self.half.lambda, self.half_parity.as_str());
        out
    }
}

/// The λ = 1/2 pair: the normalised kernel vector σ of K* − 1/2 (Σ w σ = 1) and
/// the constant potential Sσ it generates.
pub fn half_pair(ks: &DenseOperator, s: &DenseOperator, mesh: &Mesh) -> Result<HalfPair> {
    let n = mesh.len();
    let w = mesh.weights();
    // Bordered second-kind system for the 1/2 eigenvector of K*; the first-kind
    // S formulation amplifies quadrature noise near sharp corners.
    let a = Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => ks.matrix[(i, j)] - if i == j { 0.5 } else { 0.0 },
        (true, false) => 1.0,
        (false, true) => w[j],
        (false, false) => 0.0,
    });
    let mut rhs = Mat::<f64>::zeros(n + 1, 1);
    rhs[(n, 0)] = 1.0;
    let sol = a.partial_piv_lu().solve(&rhs);
    let sigma: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::LinAlg("equilibrium density solve failed".into()));
    }
    let total: f64 = w.iter().sum();
    let potential = (0..n)
        .map(|i| w[i] * (0..n).map(|j| s.matrix[(i, j)] * sigma[j]).sum::<f64>())
        .sum::<f64>()
        / total;
    let ksig: Vec<f64> = (0..n).map(|i| (0..n).map(|j| ks.matrix[(i, j)] * sigma[j]).sum()).collect();
    let num: f64 = (0..n).map(|i| w[i] * sigma[i] * ksig[i]).sum();
    let den: f64 = (0..n).map(|i| w[i] * sigma[i] * sigma[i]).sum();
    let res: f64 = (0..n).map(|i| w[i] * (ksig[i] - 0.5 * sigma[i]).powi(2)).sum();
    Ok(HalfPair { lambda: 0.5, rayleigh: num / den, density: sigma, residual: (res / den).sqrt(), potential })
}

struct BlockSolution {
    values: Vec<f64>,
    vectors: Option<Vec<Vec<f64>>>,
    norms: Vec<f64>,
}

fn solve_block(a_full: &Mat<f64>, g_full: &Mat<f64>, basis: &SparseBasis, w: &[f64], vectors: bool) -> Result<BlockSolution> {
    let mut ab = basis.compress(a_full);
    let mut gb = basis.compress(g_full);
    let c = basis.project(w);
    let cn: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let wn: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let house = if cn > 1e-12 * wn {
        let (v, p) = householder_vector(&c);
        ab = drop_index(&householder_conjugate(&ab, &v), p);
        gb = drop_index(&householder_conjugate(&gb, &v), p);
        Some((v, p))
    } else {
        None
    };
    let m = ab.nrows();
    if m == 0 {
        return Ok(BlockSolution { values: vec![], vectors: vectors.then(Vec::new), norms: vec![] });
    }
    let llt = gb
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositive("energy Gram block is not positive definite on the mean-zero subspace".into()))?;
    let l = llt.L();
    let mut x = ab.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut mm = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(mm.as_mut());
    let msym = Mat::from_fn(m, m, |i, j| 0.5 * (mm[(i, j)] + mm[(j, i)]));
    if !vectors {
        let values = msym.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::LinAlg(format!("{e:?}")))?;
        let norms = vec![1.0; values.len()];
        return Ok(BlockSolution { values, vectors: None, norms });
    }
    let eig = msym.self_adjoint_eigen(Side::Lower).map_err(|e| Error::LinAlg(format!("{e:?}")))?;
    let values: Vec<f64> = (0..m).map(|k| eig.S().column_vector()[k]).collect();
    let mut y = eig.U().to_owned();
    l.transpose().solve_upper_triangular_in_place(y.as_mut());
    let gy = &gb * &y;
    let norms: Vec<f64> = (0..m).map(|k| (0..m).map(|i| y[(i, k)] * gy[(i, k)]).sum::<f64>().max(0.0).sqrt()).collect();
    let vecs = (0..m)
        .map(|k| {
            let mut z: Vec<f64> = (0..m).map(|i| y[(i, k)]).collect();
            if let Some((v, p)) = &house {
                z.insert(*p, 0.0);
                householder_apply(v, &mut z);
            }
            basis.expand(&z)
        })
        .collect();
    Ok(BlockSolution { values, vectors: Some(vecs), norms })
}

/// Eigen-decomposition of K* in the energy inner product, with the constants
/// deflated and the 1/2 pair recovered from the equilibrium density.
pub fn solve_s_symmetric(ks: &DenseOperator, s: &DenseOperator, g: &SGram, mesh: &Mesh, opts: SolveOptions) -> Result<SpectralResult> {
    deterministic_linalg();
    if ks.kind != OperatorKind::KStar || s.kind != OperatorKind::S {
        return Err(invalid("solve_s_symmetric expects K* and S"));
    }
    if ks.mesh_id != mesh.id() || s.mesh_id != mesh.id() || g.mesh_id != mesh.id() {
        return Err(invalid("operators were assembled on a different mesh"));
    }
    let n = mesh.len();
    let gk = &g.gram * &ks.matrix;
    let a = Mat::from_fn(n, n, |i, j| 0.5 * (gk[(i, j)] + gk[(j, i)]));
    let mut warnings = g.warnings.clone();
    let defect = {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            for i in 0..n {
                num += (gk[(i, j)] - gk[(j, i)]).powi(2);
                den += gk[(i, j)].powi(2);
            }
        }
        (num / den).sqrt()
    };
    if defect > 1e-3 {
        warnings.push(format!("energy symmetry defect {defect:.2e} above 1e-3; using the symmetric part"));
    }
    let w = mesh.weights();
    let blocks: Vec<(SparseBasis, Parity)> = match opts.parity {
        Some(k) => {
            let pp = parity_projectors(mesh, k)?;
            vec![(pp.even, Parity::Even), (pp.odd, Parity::Odd)]
        }
        None => vec![(SparseBasis::identity(n), Parity::None)],
    };
    let mut pairs: Vec<(f64, Parity, f64, Option<Vec<f64>>)> = Vec::new();
    for (basis, p) in &blocks {
        let sol = solve_block(&a, &g.gram, basis, &w, opts.vectors)?;
        let mut vecs = sol.vectors.map(|v| v.into_iter().map(Some).collect::<Vec<_>>());
        for k in 0..sol.values.len() {
            let v = vecs.as_mut().and_then(|v| v[k].take());
            pairs.push((sol.values[k], *p, sol.norms[k], v));
        }
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let half = half_pair(ks, s, mesh)?;
    let half_parity = match opts.parity {
        Some(k) => parity_projectors(mesh, k)?.classify(&half.density, 1e-8),
        None => Parity::None,
    };
    let vectors = if opts.vectors {
        let cols: Vec<Vec<f64>> = pairs.iter_mut().map(|p| p.3.take().unwrap()).collect();
        Some(Mat::from_fn(n, cols.len(), |i, k| cols[k][i]))
    } else {
        None
    };
    Ok(SpectralResult {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        parity: pairs.iter().map(|p| p.1).collect(),
        s_norms: pairs.iter().map(|p| p.2).collect(),
        vectors,
        half,
        half_parity,
        mesh_id: mesh.id(),
        symmetry: opts.parity,
        warnings,
    })
}

/// max |⟨v_i, v_j⟩_G − δ_ij| over the computed eigenvectors.
pub fn orthonormality_defect(res: &SpectralResult, g: &SGram) -> Option<f64> {
    let v = res.vectors.as_ref()?;
    let gv = &g.gram * v;
    let gram = v.transpose() * &gv;
    let m = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::curves::{make_circle, make_ellipse};
    use crate::mesh::build_uniform_mesh;
    use crate::operators::{assemble_k_star, assemble_s, build_s_gram};

    fn solve(mesh: &Mesh, parity: Option<usize>) -> (SpectralResult, DenseOperator, SGram) {
        let ks = assemble_k_star(mesh).unwrap();
        let s = assemble_s(mesh, 1.0).unwrap();
        let g = build_s_gram(&s, mesh).unwrap();
        let r = solve_s_symmetric(&ks, &s, &g, mesh, SolveOptions { parity, vectors: true }).unwrap();
        (r, ks, g)
    }

    fn ellipse_mesh(n: usize) -> (Mesh, f64) {
        let rho = (3.0f64 / 7.0).atanh();
        (build_uniform_mesh(Arc::new(make_ellipse(1.0, rho).unwrap()), n).unwrap(), rho)
    }

    #[test]
    fn circle_spectrum_is_half_and_zeros() {
        let mesh = build_uniform_mesh(Arc::new(make_circle(1.3).unwrap()), 48).unwrap();
        let (r, _, _) = solve(&mesh, Some(0));
        assert_eq!(r.len(), 48);
        assert!((r.half.rayleigh - 0.5).abs() < 1e-12);
        assert!(r.eigenvalues.iter().all(|l| l.abs() < 1e-12));
        assert_eq!(r.half_parity, Parity::Even);
    }

    #[test]
    fn ellipse_matches_closed_form_with_parity() {
        let (mesh, rho) = ellipse_mesh(192);
        for (sym, major) in [(0usize, true), (1, false)] {
            let (r, _, _) = solve(&mesh, Some(sym));
            for n in 1..=4 {
                let a = 0.5 * (-2.0 * n as f64 * rho).exp();
                let kp = r.nearest(a, None).unwrap();
                let km = r.nearest(-a, None).unwrap();
                assert!((r.eigenvalues[kp] - a).abs() < 1e-10);
                assert!((r.eigenvalues[km] + a).abs() < 1e-10);
                // +α_n is even across the major axis; across the minor axis it is odd for odd n
                let plus = if major || n % 2 == 0 { Parity::Even } else { Parity::Odd };
                assert_eq!(r.parity[kp], plus, "sym {sym} n {n}");
                assert_eq!(r.parity[km], plus.opposite());
            }
        }
    }

    #[test]
    fn eigenvectors_are_energy_orthonormal() {
        let (mesh, _) = ellipse_mesh(64);
        let (r, _, g) = solve(&mesh, None);
        assert!(orthonormality_defect(&r, &g).unwrap() < 1e-10);
    }

    #[test]
    fn half_pair_on_ellipse_has_small_residual() {
        let (mesh, _) = ellipse_mesh(128);
        let (r, _, _) = solve(&mesh, None);
        assert_eq!(r.half.lambda, 0.5);
        assert!(r.half.residual < 1e-12);
        let w = mesh.weights();
        let mass: f64 = r.half.density.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(r.half.density.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn cyclic_blocks_are_invariant() {
        let (mesh, _) = ellipse_mesh(64);
        let ks = assemble_k_star(&mesh).unwrap();
        for r in [1usize, 2] {
            let cp = cyclic_projectors(&mesh, r).unwrap();
            assert_eq!(cp.projectors.len(), r / 2 + 1);
            assert!(cp.off_block_norm(&ks.matrix) < 1e-12);
            let n = mesh.len();
            let sum = cp.projectors.iter().fold(Mat::<f64>::zeros(n, n), |acc, p| acc + p);
            let id_defect = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (sum[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max);
            assert!(id_defect < 1e-12);
        }
        // the half-turn commutes with both mirrors
        let pp = parity_projectors(&mesh, 0).unwrap();
        let cp = cyclic_projectors(&mesh, 2).unwrap();
        let (pe, p1) = (pp.p_even(), &cp.projectors[1]);
        let c = &pe * p1 - p1 * &pe;
        assert!(c.norm_max() < 1e-12);
    }

    #[test]
    fn exact_eigenvector_is_a_perfect_quasimode() {
        let (mesh, rho) = ellipse_mesh(256);
        let (r, ks, g) = solve(&mesh, Some(0));
        let a = 0.5 * (-2.0 * rho).exp();
        let k = r.nearest(a, None).unwrap();
        let v = r.vector(k).unwrap();
        let res = quasimode_residual(&ks, &g, r.eigenvalues[k], &v).unwrap();
        assert!(res.epsilon < 1e-10, "{}", res.epsilon);
        let pp = parity_projectors(&mesh, 0).unwrap();
        let blk = quasimode_residual_in_block(&ks, &g, &pp, r.parity[k], r.eigenvalues[k], &v).unwrap();
        assert!(blk < 1e-10);
        // a shifted value: block and full residuals agree for a pure-parity vector
        let full = quasimode_residual(&ks, &g, 0.1, &v).unwrap().epsilon;
        let blk = quasimode_residual_in_block(&ks, &g, &pp, r.parity[k], 0.1, &v).unwrap();
        assert!((full - blk).abs() < 1e-10 * full);
        assert!((full - (r.eigenvalues[k] - 0.1).abs()).abs() < 1e-10);
    }

    #[test]
    fn quasimode_must_be_mean_zero() {
        let (mesh, _) = ellipse_mesh(32);
        let (_, ks, g) = solve(&mesh, None);
        assert!(quasimode_residual(&ks, &g, 0.1, &vec![1.0; 32]).is_err());
    }

    #[test]
    fn prediction_half_widths() {
        assert!((half_width(0.75 * PI) - 0.25).abs() < 1e-15);
        assert!((half_width(0.25 * PI) - 0.25).abs() < 1e-15);
        assert!((half_width(0.8 * PI) - 0.3).abs() < 1e-15);
        assert!(half_width(0.5 * PI) < 1e-15);
    }

    #[test]
    fn smooth_ellipse_has_no_embedded_eigenvalues() {
        let (m1, _) = ellipse_mesh(64);
        let (m2, _) = ellipse_mesh(96);
        let (r1, _, _) = solve(&m1, Some(1));
        let (r2, _, _) = solve(&m2, Some(1));
        let curve = m2.curve().clone();
        let pred = predict_essential_spectrum(&curve, Some(&curve.symmetries()[1]));
        assert!(pred.is_empty());
        let rep = detect_embedded(&[&r1, &r2], &pred, Some(1e-6), 0.01).unwrap();
        assert_eq!(rep.embedded().count(), 0);
        assert!(rep.candidates.iter().filter(|c| c.lambda.abs() > 1e-6).all(|c| c.verdict == Verdict::Isolated));
        assert!(detect_embedded(&[&r2], &pred, None, 0.01).is_err());
    }

    #[test]
    fn coverage_of_a_dense_grid() {
        let vals: Vec<f64> = (0..=100).map(|i| i as f64 * 0.0025).collect();
        assert_eq!(coverage_fraction(&vals, Interval::new(0.0, 0.25), 0.01), 1.0);
        let half: Vec<f64> = vals.iter().copied().filter(|v| *v < 0.125).collect();
        let f = coverage_fraction(&half, Interval::new(0.0, 0.25), 0.01);
        assert!(f > 0.45 && f < 0.6);
    }
}
