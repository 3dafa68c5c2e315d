//! Essential-spectrum prediction from corner angles and the embedded-eigenvalue detector.

use std::f64::consts::PI;

use serde::Serialize;

use super::{Parity, SpectralResult};
use crate::curves::{CornerOrientation, ParametrizedCurve, ReflectionSymmetry};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Strictly inside with at least `margin` to spare.
    pub fn contains_with_margin(&self, x: f64, margin: f64) -> bool {
        x > self.lo + margin && x < self.hi - margin
    }

    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }
}

/// Union of closed intervals, merged where they overlap.
pub fn merge_intervals(mut v: Vec<Interval>) -> Vec<Interval> {
    v.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let mut out: Vec<Interval> = Vec::new();
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

pub fn distance_to_union(set: &[Interval], x: f64) -> f64 {
    set.iter().map(|iv| iv.distance(x)).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct CornerContribution {
    pub t_corner: f64,
    pub theta: f64,
    pub orientation: CornerOrientation,
    pub b: f64,
    pub on_axis: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EssentialSpectrumPrediction {
    pub corners: Vec<CornerContribution>,
    pub full: Vec<Interval>,
    pub even: Vec<Interval>,
    pub odd: Vec<Interval>,
    pub symmetry: Option<String>,
}

impl EssentialSpectrumPrediction {
    pub fn for_parity(&self, p: Parity) -> &[Interval] {
        match p {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
            Parity::None => &self.full,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    /// Total width of the full prediction, or 1 (the width of the spectrum bound) when empty.
    pub fn scale(&self) -> f64 {
        let w: f64 = self.full.iter().map(Interval::width).sum();
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }
}

pub fn half_width(theta: f64) -> f64 {
    (0.5 - theta / PI).abs()
}

/// Per-corner b = |1/2 − θ/π|; corners on the mirror line split by parity, the rest
/// contribute [−b, b] to both parities.
pub fn predict_essential_spectrum(curve: &ParametrizedCurve, sym: Option<&ReflectionSymmetry>) -> EssentialSpectrumPrediction {
    let mut corners = Vec::new();
    let (mut full, mut even, mut odd) = (vec![], vec![], vec![]);
    for c in curve.corners() {
        let b = half_width(c.theta);
        let on_axis = sym.is_some_and(|s| s.fixes(c.t_corner));
        full.push(Interval::new(-b, b));
        if on_axis {
            let (pos, neg) = (Interval::new(0.0, b), Interval::new(-b, 0.0));
            match c.orientation {
                CornerOrientation::Outward => {
                    even.push(pos);
                    odd.push(neg);
                }
                CornerOrientation::Inward => {
                    even.push(neg);
                    odd.push(pos);
                }
            }
        } else {
            even.push(Interval::new(-b, b));
            odd.push(Interval::new(-b, b));
        }
        corners.push(CornerContribution { t_corner: c.t_corner, theta: c.theta, orientation: c.orientation, b, on_axis });
    }
    EssentialSpectrumPrediction {
        corners,
        full: merge_intervals(full),
        even: merge_intervals(even),
        odd: merge_intervals(odd),
        symmetry: sym.map(|s| s.label.clone()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Stable, outside its own-parity continuum, inside the other parity's.
    Embedded,
    /// Stable and outside every predicted interval: an ordinary discrete eigenvalue.
    Isolated,
    /// Outside its own continuum but drifting under refinement.
    Unstable,
}

#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub lambda: f64,
    pub parity: Parity,
    /// |λ(finest) − λ(previous)| for the nearest same-parity eigenvalue.
    pub stability: f64,
    /// Values tracked back through the ladder, coarsest first.
    pub history: Vec<f64>,
    pub host: Option<Interval>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddedEigenvalueReport {
    pub candidates: Vec<Candidate>,
    /// Eigenvalues inside their own-parity prediction, counted as continuum approximants.
    pub approximants: usize,
    pub tol_stability: f64,
    pub tol_margin: f64,
}

impl EmbeddedEigenvalueReport {
    pub fn embedded(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.verdict == Verdict::Embedded)
    }

    pub fn stable(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.verdict != Verdict::Unstable)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,parity,stability,host_lo,host_hi,verdict\n");
        for c in &self.candidates {
            let (lo, hi) = c.host.map(|h| (format!("{:.6}", h.lo), format!("{:.6}", h.hi))).unwrap_or_default();
            let v = match c.verdict {
                Verdict::Embedded => "embedded",
                Verdict::Isolated => "isolated",
                Verdict::Unstable => "unstable",
            };
            out.push_str(&format!("{:.12e},{},{:.3e},{lo},{hi},{v}\n", c.lambda, c.parity.as_str(), c.stability));
        }
        out
    }
}

/// Classify eigenvalues of the finest level; `levels` are ordered coarse to fine.
pub fn detect_embedded(
    levels: &[&SpectralResult],
    pred: &EssentialSpectrumPrediction,
    tol_stability: Option<f64>,
    tol_margin: f64,
) -> Result<EmbeddedEigenvalueReport> {
    if levels.len() < 2 {
        return Err(invalid("embedded detection needs at least two refinement levels"));
    }
    let finest = levels[levels.len() - 1];
    if finest.parity.iter().any(|p| *p == Parity::None) && !pred.is_empty() && finest.symmetry.is_none() {
        return Err(Error::Spectral("parity labels missing; solve with a mirror symmetry".into()));
    }
    let tol = tol_stability.unwrap_or(1e-3 * pred.scale());
    let mut candidates = Vec::new();
    let mut approximants = 0;
    for (k, &lam) in finest.eigenvalues.iter().enumerate() {
        let p = finest.parity[k];
        let own = pred.for_parity(p);
        if distance_to_union(own, lam) <= tol_margin {
            approximants += 1;
            continue;
        }
        // follow the eigenvalue back through coarser levels
        let mut history = vec![lam];
        let mut cur = lam;
        for lvl in levels[..levels.len() - 1].iter().rev() {
            match lvl.nearest(cur, Some(p)) {
                Some(j) => {
                    cur = lvl.eigenvalues[j];
                    history.push(cur);
                }
                None => break,
            }
        }
        history.reverse();
        let stability = if history.len() >= 2 { (history[history.len() - 1] - history[history.len() - 2]).abs() } else { f64::INFINITY };
        let host = pred.for_parity(p.opposite()).iter().copied().find(|iv| iv.contains_with_margin(lam, tol_margin));
        let verdict = if stability >= tol {
            Verdict::Unstable
        } else if host.is_some() && p != Parity::None {
            Verdict::Embedded
        } else {
            Verdict::Isolated
        };
        candidates.push(Candidate { lambda: lam, parity: p, stability, history, host, verdict });
    }
    Ok(EmbeddedEigenvalueReport { candidates, approximants, tol_stability: tol, tol_margin })
}

/// Fraction of grid points of `target` (resolution `h`) within `h` of some eigenvalue.
pub fn coverage_fraction(values: &[f64], target: Interval, h: f64) -> f64 {
    let n = (target.width() / h).round().max(1.0) as usize;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let hits = (0..=n)
        .filter(|&i| {
            let x = target.lo + target.width() * i as f64 / n as f64;
            let k = sorted.partition_point(|&v| v < x);
            let near = |j: usize| sorted.get(j).is_some_and(|v| (v - x).abs() < h);
            near(k) || (k > 0 && near(k - 1))
        })
        .count();
    hits as f64 / (n + 1) as f64
}
