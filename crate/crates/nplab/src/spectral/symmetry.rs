//! Symmetry-adapted bases: reflection parity and real-combined cyclic Fourier modes.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::geom::Vec2;
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl Parity {
    pub fn opposite(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::None => Parity::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::None => "none",
        }
    }
}

/// Orthonormal basis whose columns have few nonzeros.
#[derive(Clone, Debug)]
pub struct SparseBasis {
    pub n: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
}

impl SparseBasis {
    pub fn identity(n: usize) -> Self {
        Self { n, cols: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    /// Bᵀ A B.
    pub fn compress(&self, a: &Mat<f64>) -> Mat<f64> {
        let m = self.cols.len();
        // first A B column by column, then Bᵀ (A B)
        let mut ab = Mat::<f64>::zeros(self.n, m);
        for (c, col) in self.cols.iter().enumerate() {
            for &(j, x) in col {
                for i in 0..self.n {
                    ab[(i, c)] += a[(i, j)] * x;
                }
            }
        }
        Mat::from_fn(m, m, |r, c| self.cols[r].iter().map(|&(i, x)| x * ab[(i, c)]).sum())
    }

    /// Bᵀ v.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|col| col.iter().map(|&(i, x)| x * v[i]).sum()).collect()
    }

    /// B c.
    pub fn expand(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (col, &ck) in self.cols.iter().zip(c) {
            for &(i, x) in col {
                out[i] += x * ck;
            }
        }
        out
    }

    /// Dense orthogonal projector B Bᵀ.
    pub fn projector(&self) -> Mat<f64> {
        let mut p = Mat::<f64>::zeros(self.n, self.n);
        for col in &self.cols {
            for &(i, x) in col {
                for &(j, y) in col {
                    p[(i, j)] += x * y;
                }
            }
        }
        p
    }
}

/// Even/odd splitting under a node pairing R: P_e = (I+R)/2, P_o = (I−R)/2.
#[derive(Clone, Debug)]
pub struct ParityProjectors {
    pub pairing: Vec<usize>,
    pub symmetry: usize,
    pub even: SparseBasis,
    pub odd: SparseBasis,
}

pub fn parity_projectors(mesh: &Mesh, symmetry: usize) -> Result<ParityProjectors> {
    let pairing = mesh
        .mirror_pairing(symmetry)
        .ok_or_else(|| Error::Spectral("mesh node set is not mirror-invariant for this symmetry".into()))?
        .to_vec();
    let n = pairing.len();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for i in 0..n {
        let j = pairing[i];
        if j == i {
            even.push(vec![(i, 1.0)]);
        } else if i < j {
            even.push(vec![(i, s), (j, s)]);
            odd.push(vec![(i, s), (j, -s)]);
        }
    }
    Ok(ParityProjectors { pairing, symmetry, even: SparseBasis { n, cols: even }, odd: SparseBasis { n, cols: odd } })
}

impl ParityProjectors {
    pub fn p_even(&self) -> Mat<f64> {
        self.even.projector()
    }

    pub fn p_odd(&self) -> Mat<f64> {
        self.odd.projector()
    }

    /// ‖P_e A P_o‖_F / ‖A‖_F.
    pub fn cross_block_norm(&self, a: &Mat<f64>) -> f64 {
        let n = a.nrows();
        let mut ao = Mat::<f64>::zeros(n, self.odd.dim());
        for (c, col) in self.odd.cols.iter().enumerate() {
            for &(j, x) in col {
                for i in 0..n {
                    ao[(i, c)] += a[(i, j)] * x;
                }
            }
        }
        let mut num = 0.0;
        for col in &self.even.cols {
            for c in 0..self.odd.dim() {
                let v: f64 = col.iter().map(|&(i, x)| x * ao[(i, c)]).sum();
                num += v * v;
            }
        }
        let mut den = 0.0;
        for j in 0..n {
            for i in 0..n {
                den += a[(i, j)] * a[(i, j)];
            }
        }
        (num / den).sqrt()
    }

    /// Parity of a nodal vector, if it is (anti)symmetric to `tol` relative.
    pub fn classify(&self, v: &[f64], tol: f64) -> Parity {
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let even = v.iter().enumerate().all(|(i, x)| (x - v[self.pairing[i]]).abs() <= tol * scale);
        let odd = v.iter().enumerate().all(|(i, x)| (x + v[self.pairing[i]]).abs() <= tol * scale);
        match (even, odd) {
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            _ => Parity::None,
        }
    }
}

/// Rotation-invariant decomposition for an r-fold symmetric node set. Modes k and
/// r−k are merged into one real projector, so there are ⌊r/2⌋+1 of them.
#[derive(Clone, Debug)]
pub struct CyclicProjectors {
    pub order: usize,
    pub rotation: Vec<usize>,
    /// Fourier index k of each real projector.
    pub modes: Vec<usize>,
    pub projectors: Vec<Mat<f64>>,
}

pub fn cyclic_projectors(mesh: &Mesh, r: usize) -> Result<CyclicProjectors> {
    if r == 0 {
        return Err(invalid("rotation order must be positive"));
    }
    let n = mesh.len();
    let w = mesh.weights();
    let total: f64 = w.iter().sum();
    let center = mesh.nodes().iter().zip(&w).fold(Vec2::default(), |acc, (nd, wi)| acc + nd.pos * (*wi / total));
    let tol = 1e-10 * mesh.curve().total_length();
    let angle = 2.0 * PI / r as f64;
    let mut rotation = vec![0usize; n];
    for i in 0..n {
        let target = center + (mesh.nodes()[i].pos - center).rotate(angle);
        let j = (0..n)
            .min_by(|&a, &b| {
                mesh.nodes()[a].pos.dist(target).partial_cmp(&mesh.nodes()[b].pos.dist(target)).unwrap()
            })
            .unwrap();
        if mesh.nodes()[j].pos.dist(target) > tol || (w[j] - w[i]).abs() > 1e-10 * w[i] {
            return Err(Error::Spectral(format!("node set is not invariant under rotation of order {r}")));
        }
        rotation[i] = j;
    }
    // powers of the rotation permutation
    let mut powers = vec![(0..n).collect::<Vec<_>>()];
    for m in 1..r {
        let prev = &powers[m - 1];
        powers.push((0..n).map(|i| rotation[prev[i]]).collect());
    }
    let modes: Vec<usize> = (0..=r / 2).collect();
    let projectors = modes
        .iter()
        .map(|&k| {
            let c = if k == 0 || 2 * k == r { 1.0 } else { 2.0 };
            let mut p = Mat::<f64>::zeros(n, n);
            for (m, perm) in powers.iter().enumerate() {
                let coef = c * (2.0 * PI * (k * m) as f64 / r as f64).cos() / r as f64;
                // (R^m f)(x_i) = f(x_{perm(i)})
                for i in 0..n {
                    p[(i, perm[i])] += coef;
                }
            }
            p
        })
        .collect();
    Ok(CyclicProjectors { order: r, rotation, modes, projectors })
}

impl CyclicProjectors {
    /// max_{k≠l} ‖P_k A P_l‖_F / ‖A‖_F.
    pub fn off_block_norm(&self, a: &Mat<f64>) -> f64 {
        let mut den = 0.0;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                den += a[(i, j)] * a[(i, j)];
            }
        }
        let mut worst = 0.0f64;
        for (k, pk) in self.projectors.iter().enumerate() {
            let left = pk * a;
            for (l, pl) in self.projectors.iter().enumerate() {
                if k != l {
                    let b = &left * pl;
                    let mut num = 0.0;
                    for j in 0..b.ncols() {
                        for i in 0..b.nrows() {
                            num += b[(i, j)] * b[(i, j)];
                        }
                    }
                    worst = worst.max((num / den).sqrt());
                }
            }
        }
        worst
    }
}
