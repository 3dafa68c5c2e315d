//! Cutoff quasimodes: a base-curve eigenvector restricted to the arc shared with the
//! perturbed curve, rescaled on a sub-arc J so that it stays mean-zero.

use serde::Serialize;

use super::{Parity, ParityProjectors};
use crate::curves::TypeTPerturbation;
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::operators::{DenseOperator, OperatorKind, SGram};

#[derive(Clone, Debug, Serialize)]
pub struct Quasimode {
    #[serde(skip)]
    pub psi: Vec<f64>,
    /// Scale factor on J.
    pub a: f64,
    /// Arclength ranges on the perturbed curve.
    pub a_prime: (f64, f64),
    pub j: (f64, f64),
    pub nodes_a_prime: usize,
    pub nodes_j: usize,
}

/// Number of leading nodes the two meshes share bit for bit (the untouched arc).
pub fn shared_prefix(base_mesh: &Mesh, gamma_mesh: &Mesh) -> usize {
    base_mesh
        .nodes()
        .iter()
        .zip(gamma_mesh.nodes())
        .take_while(|(a, b)| a.segment == 0 && b.segment == 0 && a.pos == b.pos && a.weight == b.weight)
        .count()
}

/// ψ = χφ with χ = 1 on A′∖J, a on J, 0 elsewhere, and Σ w ψ = 0.
///
/// `phi` lives on `base_mesh`, a panel mesh of `pert.base_split_curve()`; `gamma_mesh`
/// is a panel mesh of the perturbed curve with the same panels on segment 0.
pub fn build_cutoff_quasimode(phi: &[f64], base_mesh: &Mesh, gamma_mesh: &Mesh, pert: &TypeTPerturbation) -> Result<Quasimode> {
    if phi.len() != base_mesh.len() {
        return Err(invalid("eigenvector length does not match the base mesh"));
    }
    let n0 = shared_prefix(base_mesh, gamma_mesh);
    let seg0 = base_mesh.nodes().iter().take_while(|n| n.segment == 0).count();
    if n0 == 0 || n0 != seg0 {
        return Err(Error::Mesh("base and perturbed meshes do not share the untouched arc node for node".into()));
    }
    let l0 = pert.base.total_length();
    let (a0, a1) = pert.a_prime_range();
    let in_a = |s: f64| s >= a0 && s <= a1;
    let a_idx: Vec<usize> = (0..n0).filter(|&i| in_a(gamma_mesh.nodes()[i].s)).collect();
    if a_idx.is_empty() {
        return Err(invalid("A' contains no mesh nodes"));
    }
    let j_len = l0 - (a1 - a0);
    let peak = *a_idx.iter().max_by(|&&i, &&j| phi[i].abs().partial_cmp(&phi[j].abs()).unwrap()).unwrap();
    let smax = phi[peak].abs();
    let sp = gamma_mesh.nodes()[peak].s;
    let mut j0 = (sp - 0.5 * j_len).max(a0);
    let j1 = (j0 + j_len).min(a1);
    j0 = j1 - j_len;
    if j0 < a0 {
        return Err(invalid("J is longer than A'"));
    }
    let in_j = |s: f64| s >= j0 && s <= j1;
    let w = gamma_mesh.weights();
    let mut sum_rest = 0.0;
    let mut sum_j = 0.0;
    let mut nodes_j = 0;
    for &i in &a_idx {
        let s = gamma_mesh.nodes()[i].s;
        if in_j(s) {
            if phi[i].abs() <= 0.5 * smax || phi[i].signum() != phi[peak].signum() {
                return Err(invalid("phi changes sign or drops below half its peak on J"));
            }
            sum_j += w[i] * phi[i];
            nodes_j += 1;
        } else {
            sum_rest += w[i] * phi[i];
        }
    }
    if nodes_j == 0 {
        return Err(invalid("J contains no mesh nodes"));
    }
    let a = -sum_rest / sum_j;
    if a.abs() >= 2.0 {
        return Err(invalid(format!("cutoff scale a = {a:.3} violates |a| < 2; move or shorten J")));
    }
    let mut psi = vec![0.0; gamma_mesh.len()];
    for &i in &a_idx {
        let s = gamma_mesh.nodes()[i].s;
        psi[i] = if in_j(s) { a * phi[i] } else { phi[i] };
    }
    Ok(Quasimode { psi, a, a_prime: (a0, a1), j: (j0, j1), nodes_a_prime: a_idx.len(), nodes_j })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuasimodeResidual {
    pub epsilon: f64,
    pub resolvent_lower_bound: f64,
    pub psi_s_norm: f64,
}

fn check_mean_zero(psi: &[f64], w: &[f64]) -> Result<()> {
    let m: f64 = psi.iter().zip(w).map(|(p, w)| p * w).sum();
    let scale: f64 = psi.iter().zip(w).map(|(p, w)| (p * w).abs()).sum();
    if m.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(invalid("quasimode is not mean-zero"));
    }
    Ok(())
}

/// ε = ‖(K* − λ)ψ‖_S / ‖ψ‖_S.
pub fn quasimode_residual(ks: &DenseOperator, g: &SGram, lambda: f64, psi: &[f64]) -> Result<QuasimodeResidual> {
    if ks.kind != OperatorKind::KStar || ks.mesh_id != g.mesh_id {
        return Err(invalid("quasimode_residual expects K* and the Gram matrix of the same mesh"));
    }
    check_mean_zero(psi, &g.weights)?;
    let n = psi.len();
    let r: Vec<f64> = (0..n).map(|i| (0..n).map(|j| ks.matrix[(i, j)] * psi[j]).sum::<f64>() - lambda * psi[i]).collect();
    let norm = g.norm(psi);
    if norm == 0.0 {
        return Err(invalid("quasimode has zero energy norm"));
    }
    let epsilon = g.norm(&r) / norm;
    Ok(QuasimodeResidual { epsilon, resolvent_lower_bound: 1.0 / epsilon, psi_s_norm: norm })
}

/// Same residual computed inside one parity block.
pub fn quasimode_residual_in_block(
    ks: &DenseOperator,
    g: &SGram,
    pp: &ParityProjectors,
    parity: Parity,
    lambda: f64,
    psi: &[f64],
) -> Result<f64> {
    let basis = match parity {
        Parity::Even => &pp.even,
        Parity::Odd => &pp.odd,
        Parity::None => return Err(invalid("block residual needs a parity")),
    };
    check_mean_zero(psi, &g.weights)?;
    let kb = basis.compress(&ks.matrix);
    let gb = basis.compress(&g.gram);
    let c = basis.project(psi);
    let m = c.len();
    let r: Vec<f64> = (0..m).map(|i| (0..m).map(|j| kb[(i, j)] * c[j]).sum::<f64>() - lambda * c[i]).collect();
    let q = |v: &[f64]| -> f64 { (0..m).map(|i| v[i] * (0..m).map(|j| gb[(i, j)] * v[j]).sum::<f64>()).sum::<f64>().max(0.0).sqrt() };
    Ok(q(&r) / q(&c))
}
