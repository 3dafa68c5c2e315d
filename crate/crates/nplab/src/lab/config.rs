//! Declarative scenario documents (TOML). Unknown keys are rejected.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curves::{make_circle, make_ellipse, make_hkl_curve, make_lens, make_type_t_perturbation, HklParams, ParametrizedCurve, TypeTParams, TypeTPerturbation};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::mesh::GradingSpec;
use crate::spectral::Parity;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub curve: CurveSpec,
    #[serde(default)]
    pub symmetry: Option<SymmetrySpec>,
    pub mesh: MeshLadder,
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub quasimode: Option<QuasimodeSpec>,
    #[serde(default)]
    pub theorem_a: Option<TheoremASpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        radius: f64,
    },
    Ellipse {
        #[serde(default = "one")]
        focal_r: f64,
        #[serde(default)]
        rho0: Option<f64>,
        #[serde(default)]
        tanh_rho0: Option<f64>,
    },
    Lens {
        theta_over_pi: f64,
        #[serde(default = "two")]
        chord: f64,
    },
    Hkl {
        #[serde(default = "one")]
        focal_r: f64,
        #[serde(default)]
        rho0: Option<f64>,
        #[serde(default)]
        tanh_rho0: Option<f64>,
        #[serde(default = "hkl_width")]
        attach_half_width: f64,
        #[serde(default = "one")]
        slope: f64,
    },
    TypeT(TypeTSpec),
}

/// The ellipse parameter ϱ0, given directly or through tanh ϱ0 (3/7 gives α_n = (2/5)^n / 2).
pub fn rho_value(rho0: Option<f64>, tanh_rho0: Option<f64>) -> Result<f64> {
    match (rho0, tanh_rho0) {
        (Some(r), None) => Ok(r),
        (None, Some(t)) if t > 0.0 && t < 1.0 => Ok(t.atanh()),
        (None, Some(t)) => Err(Error::Config(format!("tanh_rho0 must lie in (0,1), got {t}"))),
        _ => Err(Error::Config("give exactly one of rho0 and tanh_rho0".into())),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Major,
    Minor,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Outward,
    Inward,
}

/// Corner inserted into an ellipse where it crosses one of its axes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeTSpec {
    #[serde(default = "one")]
    pub focal_r: f64,
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default)]
    pub tanh_rho0: Option<f64>,
    pub axis: Axis,
    pub orientation: Orientation,
    /// Essential-spectrum half-width b; θ = π(1/2 ± b).
    pub b: f64,
    pub delta: f64,
    pub t2: f64,
    pub s2: f64,
    #[serde(default = "yes")]
    pub symmetric: bool,
}

impl TypeTSpec {
    pub fn theta(&self) -> f64 {
        match self.orientation {
            Orientation::Outward => PI * (0.5 + self.b),
            Orientation::Inward => PI * (0.5 - self.b),
        }
    }

    pub fn base(&self) -> Result<Arc<ParametrizedCurve>> {
        Ok(Arc::new(make_ellipse(self.focal_r, rho_value(self.rho0, self.tanh_rho0)?)?))
    }

    /// Perturbation with disk radius `delta` (the configured one when None).
    pub fn build(&self, delta: Option<f64>) -> Result<TypeTPerturbation> {
        if !(self.b > 0.0 && self.b < 0.5) {
            return Err(Error::Config(format!("b must lie in (0, 1/2), got {}", self.b)));
        }
        let rho = rho_value(self.rho0, self.tanh_rho0)?;
        let (x0, sym) = match self.axis {
            Axis::Major => (Vec2::new(self.focal_r * rho.cosh(), 0.0), 0),
            Axis::Minor => (Vec2::new(0.0, self.focal_r * rho.sinh()), 1),
        };
        let mut p = TypeTParams::new(x0, delta.unwrap_or(self.delta), self.theta(), self.t2, self.s2);
        p.symmetry = self.symmetric.then_some(sym);
        make_type_t_perturbation(self.base()?, &p)
    }
}

impl CurveSpec {
    pub fn build(&self) -> Result<Arc<ParametrizedCurve>> {
        let c = match self {
            CurveSpec::Circle { radius } => make_circle(*radius)?,
            CurveSpec::Ellipse { focal_r, rho0, tanh_rho0 } => make_ellipse(*focal_r, rho_value(*rho0, *tanh_rho0)?)?,
            CurveSpec::Lens { theta_over_pi, chord } => make_lens(theta_over_pi * PI, *chord)?,
            CurveSpec::Hkl { focal_r, rho0, tanh_rho0, attach_half_width, slope } => make_hkl_curve(&HklParams {
                focal_r: *focal_r,
                rho0: rho_value(*rho0, *tanh_rho0)?,
                attach_half_width: *attach_half_width,
                slope: *slope,
            })?,
            CurveSpec::TypeT(t) => return Ok(t.build(None)?.curve),
        };
        Ok(Arc::new(c))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CurveSpec::Circle { .. } => "circle",
            CurveSpec::Ellipse { .. } => "ellipse",
            CurveSpec::Lens { .. } => "lens",
            CurveSpec::Hkl { .. } => "hkl",
            CurveSpec::TypeT(_) => "type-t",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrySpec {
    /// Label of the curve's reflection symmetry used for parity splitting.
    pub mirror: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshLadder {
    /// Periodic trapezoid meshes with these node counts.
    Uniform { ladder: Vec<usize> },
    /// Graded panel meshes with these grading depths.
    Graded {
        ladder: Vec<usize>,
        #[serde(default = "half")]
        sigma: f64,
        #[serde(default = "sixteen")]
        order: usize,
        #[serde(default = "sixteen")]
        base_panels: usize,
        #[serde(default)]
        base_panel_length: Option<f64>,
    },
}

impl MeshLadder {
    pub fn len(&self) -> usize {
        match self {
            MeshLadder::Uniform { ladder } | MeshLadder::Graded { ladder, .. } => ladder.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grading(&self, depth: usize) -> Option<GradingSpec> {
        match self {
            MeshLadder::Uniform { .. } => None,
            MeshLadder::Graded { sigma, order, base_panels, base_panel_length, .. } => Some(GradingSpec {
                sigma: *sigma,
                depth,
                order: *order,
                base_panels: *base_panels,
                base_panel_length: *base_panel_length,
            }),
        }
    }

    /// Logarithm of the resolution ratio between consecutive levels, for order estimates.
    pub fn log_step(&self, k: usize) -> f64 {
        match self {
            MeshLadder::Uniform { ladder } => (ladder[k + 1] as f64 / ladder[k] as f64).ln(),
            MeshLadder::Graded { ladder, sigma, .. } => (ladder[k + 1] as f64 - ladder[k] as f64) * (1.0 / sigma).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Spectrum,
    Parity,
    EssentialPrediction,
    Embedded,
    Plemelj,
    Quasimode,
    Convergence,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Refinement stability |λ(k) − λ(k+1)| for a candidate eigenvalue.
    pub stability: f64,
    /// Clearance from prediction intervals for an embedded verdict.
    pub margin: f64,
    /// Spectral inclusion slack above 1/2.
    pub inclusion: f64,
    /// Parity cross-block bound.
    pub cross_block: f64,
    /// Gauss identity: max defect on uniform meshes, weighted RMS defect on graded meshes.
    pub gauss: f64,
    /// Slack on the pointwise kernel bound ratio.
    pub kernel_bound: f64,
    /// S-orthonormality of eigenvectors.
    pub orthonormality: f64,
    /// ±λ pairing of the ellipse spectrum.
    pub pm_symmetry: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stability: 1e-3,
            margin: 0.01,
            inclusion: 1e-8,
            cross_block: 1e-10,
            gauss: 1e-8,
            kernel_bound: 1e-12,
            orthonormality: 1e-8,
            pm_symmetry: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeSpec {
    pub lambda: f64,
    /// Disk radii of the ladder, typically halving.
    pub deltas: Vec<f64>,
    /// Allowed relative increase between consecutive residuals.
    #[serde(default = "five_percent")]
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremASpec {
    /// Number of base eigenvalues of each sign to carry into the essential spectrum.
    pub j_max: usize,
    /// Decreasing disk radii tried until every target is confirmed embedded.
    pub deltas: Vec<f64>,
    /// Uniform mesh size for the base-curve spectrum.
    #[serde(default = "base_n")]
    pub base_n: usize,
    /// Cap on the location tolerance for a confirmed target.
    #[serde(default = "two_percent")]
    pub location: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub observable: String,
    /// Exact value, when known; adds an error column.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
}

/// A pass/fail statement checked against the run results.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// The finest level has an eigenvalue within `tol` of `value` (of `parity`, if given).
    Eigenvalue {
        value: f64,
        tol: f64,
        #[serde(default)]
        parity: Option<Parity>,
    },
    /// Every finest-level eigenvalue other than the 1/2 pair has |λ| < `max_abs`.
    SpectrumBounded { max_abs: f64 },
    /// Exactly `count` embedded verdicts of `parity` in [lo, hi].
    Embedded {
        parity: Option<Parity>,
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// Exactly `count` refinement-stable candidates of `parity` in [lo, hi].
    Stable {
        parity: Option<Parity>,
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// The finest-level extreme of `parity` toward `bound` lies within `rel`·|bound| of it.
    Extreme { parity: Parity, bound: f64, rel: f64 },
    /// Coverage of [lo, hi] by eigenvalues of `parity` at resolution `h` never decreases
    /// and either grows or is already complete.
    CoverageIncreasing { parity: Parity, lo: f64, hi: f64, h: f64 },
    /// Plemelj residual below `max` at ladder position `level` (last when omitted).
    PlemeljBelow {
        max: f64,
        #[serde(default)]
        level: Option<usize>,
        #[serde(default)]
        weighted: bool,
    },
    /// Plemelj residual strictly decreasing along the ladder.
    PlemeljMonotone {
        #[serde(default)]
        weighted: bool,
    },
    /// Quasimode residual decreasing (within slack) and below `max` at the last step.
    QuasimodeBelow { max: f64 },
    /// Every Theorem-A target confirmed embedded, and the listed values not.
    TheoremA {
        #[serde(default)]
        dissolved: Vec<f64>,
    },
    /// Convergence table: ratio of successive errors (or differences) above `min_ratio`.
    ConvergenceRatio { min_ratio: f64 },
    /// Convergence table: every value within `tol` of the reference.
    ConvergenceConstant { tol: f64 },
    /// Ellipse: computed ±α_n within `tol` for n = 1..5, with the parity table of the chosen axis.
    ClosedForm { tol: f64 },
    /// Wall-clock budget for the whole run.
    Runtime { max_seconds: f64 },
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn sixteen() -> usize {
    16
}
fn hkl_width() -> f64 {
    HklParams::default().attach_half_width
}
fn five_percent() -> f64 {
    0.05
}
fn two_percent() -> f64 {
    0.02
}
fn base_n() -> usize {
    256
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        if self.mesh.is_empty() {
            return bad("empty mesh ladder".into());
        }
        let graded = matches!(self.mesh, MeshLadder::Graded { .. });
        let corners = matches!(self.curve, CurveSpec::Lens { .. } | CurveSpec::Hkl { .. } | CurveSpec::TypeT(_));
        if corners && !graded {
            return bad("curves with corners need a graded mesh ladder".into());
        }
        let needs_sym = [Analysis::Parity, Analysis::Embedded];
        if self.analyses.iter().any(|a| needs_sym.contains(a)) && self.symmetry.is_none() {
            return bad("parity and embedded analyses need a symmetry".into());
        }
        if self.analyses.contains(&Analysis::Embedded) && self.mesh.len() < 2 {
            return bad("embedded detection needs at least two refinement levels".into());
        }
        if self.analyses.contains(&Analysis::Convergence) {
            if self.convergence.is_none() {
                return bad("convergence analysis needs a [convergence] table".into());
            }
            if self.mesh.len() < 3 {
                return bad("convergence needs a ladder of at least three levels".into());
            }
        }
        if self.analyses.contains(&Analysis::Quasimode) {
            match (&self.curve, &self.quasimode) {
                (CurveSpec::TypeT(_), Some(q)) if q.deltas.len() >= 2 => {}
                _ => return bad("quasimode analysis needs a type-t curve and a [quasimode] table with >= 2 deltas".into()),
            }
        }
        if self.theorem_a.is_some() && !matches!(self.curve, CurveSpec::TypeT(TypeTSpec { symmetric: true, .. })) {
            return bad("[theorem_a] needs a symmetric type-t curve".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIRCLE: &str = include_str!("../../scenarios/circle.toml");

    #[test]
    fn bundled_circle_parses() {
        let s = Scenario::from_toml(CIRCLE).unwrap();
        assert_eq!(s.name, "circle");
        assert_eq!(s.mesh.len(), 3);
        assert_eq!(s.tolerances.cross_block, 1e-10);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = CIRCLE.replace("radius = 1.0", "radius = 1.0\nwobble = 2");
        assert!(matches!(Scenario::from_toml(&text), Err(Error::Config(_))));
        let text = format!("colour = \"red\"\n{CIRCLE}");
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = CIRCLE.replace("version = 1", "version = 2");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("schema version"), "{err}");
    }

    #[test]
    fn corners_need_graded_ladder() {
        let text = CIRCLE.replace("kind = \"circle\"\nradius = 1.0", "kind = \"lens\"\ntheta_over_pi = 0.75").replace("x-axis", "tips");
        assert!(Scenario::from_toml(&text).unwrap_err().to_string().contains("graded"));
    }

    #[test]
    fn convergence_needs_three_levels() {
        let text = CIRCLE.replace("[16, 32, 64]", "[16, 32]");
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn rho_from_either_field() {
        assert_eq!(rho_value(Some(0.4), None).unwrap(), 0.4);
        assert!((rho_value(None, Some(0.5)).unwrap() - 0.5f64.atanh()).abs() < 1e-15);
        assert!(rho_value(Some(0.4), Some(0.5)).is_err());
        assert!(rho_value(None, None).is_err());
    }
}
