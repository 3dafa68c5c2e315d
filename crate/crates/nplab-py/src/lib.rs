//! Python bindings: curves, meshes, spectra and the scenario runner.

use std::sync::Arc;

use nplab::curves::{make_circle, make_ellipse, make_lens, ParametrizedCurve};
use nplab::lab;
use nplab::mesh::{build_panel_mesh, build_uniform_mesh, GradingSpec};
use nplab::operators::{assemble_k, assemble_k_star, assemble_s, build_s_gram, gauss_identity_residual, plemelj_residual};
use nplab::spectral::{self, Interval, SolveOptions};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: nplab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Curve", frozen)]
struct PyCurve(Arc<ParametrizedCurve>);

#[pymethods]
impl PyCurve {
    #[staticmethod]
    fn circle(radius: f64) -> PyResult<Self> {
        make_circle(radius).map(|c| Self(Arc::new(c))).map_err(err)
    }

    /// Ellipse with focal half-distance `focal_r` and elliptic radius `rho0`.
    #[staticmethod]
    fn ellipse(focal_r: f64, rho0: f64) -> PyResult<Self> {
        make_ellipse(focal_r, rho0).map(|c| Self(Arc::new(c))).map_err(err)
    }

    /// Symmetric lens with half exterior angle `theta` at both corners.
    #[staticmethod]
    fn lens(theta: f64, chord: f64) -> PyResult<Self> {
        make_lens(theta, chord).map(|c| Self(Arc::new(c))).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.total_length()
    }

    /// (t, theta, half_width) for each corner.
    #[getter]
    fn corners(&self) -> Vec<(f64, f64, f64)> {
        self.0.corners().iter().map(|c| (c.t_corner, c.theta, c.b())).collect()
    }

    #[getter]
    fn symmetries(&self) -> Vec<String> {
        self.0.symmetries().iter().map(|s| s.label.clone()).collect()
    }

    fn position(&self, t: f64) -> (f64, f64) {
        let p = self.0.position(t);
        (p.x, p.y)
    }

    fn __repr__(&self) -> String {
        format!("Curve({}, corners={})", self.0.name(), self.0.corners().len())
    }
}

#[pyclass(name = "Mesh", frozen)]
struct PyMesh(nplab::mesh::Mesh);

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn uniform(curve: &PyCurve, n: usize) -> PyResult<Self> {
        build_uniform_mesh(curve.0.clone(), n).map(Self).map_err(err)
    }

    /// Panel mesh graded geometrically toward every corner; `mirror` names a
    /// symmetry of the curve to build the mesh invariant under.
    #[staticmethod]
    #[pyo3(signature = (curve, depth=20, base_panels=16, sigma=0.5, order=16, mirror=None))]
    fn graded(curve: &PyCurve, depth: usize, base_panels: usize, sigma: f64, order: usize, mirror: Option<&str>) -> PyResult<Self> {
        let sym = mirror.map(|l| symmetry_index(&curve.0, l)).transpose()?;
        let spec = GradingSpec { sigma, depth, order, base_panels, base_panel_length: None };
        build_panel_mesh(curve.0.clone(), &spec, sym).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.0.nodes().iter().map(|n| (n.pos.x, n.pos.y)).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights()
    }

    #[getter]
    fn symmetry(&self) -> Option<String> {
        self.0.mirror_symmetry().map(|k| self.0.curve().symmetries()[k].label.clone())
    }
}

fn symmetry_index(curve: &ParametrizedCurve, label: &str) -> PyResult<usize> {
    curve.symmetry(label).map(|(k, _)| k).ok_or_else(|| PyKeyError::new_err(format!("curve has no symmetry {label:?}")))
}

fn intervals(v: &[Interval]) -> Vec<(f64, f64)> {
    v.iter().map(|i| (i.lo, i.hi)).collect()
}

/// Spectrum of K* in the single-layer energy inner product. With `parity`, the
/// mesh's mirror symmetry splits eigenvalues into even and odd.
#[pyfunction]
#[pyo3(signature = (mesh, parity=false))]
fn spectrum<'py>(py: Python<'py>, mesh: &PyMesh, parity: bool) -> PyResult<Bound<'py, PyDict>> {
    let m = &mesh.0;
    let sym = if parity {
        Some(m.mirror_symmetry().ok_or_else(|| PyValueError::new_err("mesh was built without a mirror symmetry"))?)
    } else {
        None
    };
    let r = py
        .detach(|| -> nplab::Result<_> {
            let ks = assemble_k_star(m)?;
            let s = assemble_s(m, 1.0)?;
            let g = build_s_gram(&s, m)?;
            spectral::solve_s_symmetric(&ks, &s, &g, m, SolveOptions { parity: sym, vectors: false })
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("eigenvalues", r.eigenvalues.clone())?;
    d.set_item("parity", r.parity.iter().map(|p| p.as_str()).collect::<Vec<_>>())?;
    d.set_item("half", r.half.lambda)?;
    d.set_item("half_rayleigh", r.half.rayleigh)?;
    d.set_item("half_residual", r.half.residual)?;
    d.set_item("half_parity", r.half_parity.as_str())?;
    d.set_item("warnings", r.warnings.clone())?;
    Ok(d)
}

/// Predicted essential spectrum: full, even and odd interval lists.
#[pyfunction]
#[pyo3(signature = (curve, symmetry=None))]
fn essential_spectrum<'py>(py: Python<'py>, curve: &PyCurve, symmetry: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let sym = symmetry.map(|l| symmetry_index(&curve.0, l)).transpose()?;
    let p = spectral::predict_essential_spectrum(&curve.0, sym.map(|k| &curve.0.symmetries()[k]));
    let d = PyDict::new(py);
    d.set_item("full", intervals(&p.full))?;
    d.set_item("even", intervals(&p.even))?;
    d.set_item("odd", intervals(&p.odd))?;
    Ok(d)
}

#[pyfunction]
fn half_width(theta: f64) -> f64 {
    spectral::half_width(theta)
}

/// Discretisation diagnostics: Gauss identity defects and the Plemelj commutator residual.
#[pyfunction]
fn residuals<'py>(py: Python<'py>, mesh: &PyMesh) -> PyResult<Bound<'py, PyDict>> {
    let m = &mesh.0;
    let (g, p) = py
        .detach(|| -> nplab::Result<_> {
            let ks = assemble_k_star(m)?;
            let k = assemble_k(m)?;
            let s = assemble_s(m, 1.0)?;
            Ok((gauss_identity_residual(&ks, m)?, plemelj_residual(&k, &ks, &s, m)?))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("gauss_rms", g.weighted_rms)?;
    d.set_item("gauss_k_rows", g.k_rows)?;
    d.set_item("plemelj", p.plain)?;
    d.set_item("plemelj_weighted", p.weighted)?;
    Ok(d)
}

#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    lab::bundled_names()
}

/// Run a bundled scenario (or a TOML path) without writing artifacts; returns the report as JSON.
#[pyfunction]
fn run_scenario(py: Python<'_>, name_or_path: &str) -> PyResult<String> {
    let sc = lab::load_scenario(name_or_path).map_err(err)?;
    let report = py.detach(|| lab::execute(&sc)).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "nplab")]
fn nplab_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCurve>()?;
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(essential_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(half_width, m)?)?;
    m.add_function(wrap_pyfunction!(residuals, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
