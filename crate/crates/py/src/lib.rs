//! Python bindings: expressions, guided systems, the IVP solver and the
//! boundary-value pipeline. Structured results come back as plain dicts.

use std::fmt::Display;

use gds_core::bvp;
use gds_core::exprlang;
use gds_core::gds::{self as core_gds, GeneratorMap, OrbitOptions};
use gds_core::pconf::{self, HData, IvpProblem};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_maps(maps: &[String]) -> PyResult<Vec<GeneratorMap>> {
    maps.iter()
        .map(|s| exprlang::parse(s).map(GeneratorMap::expr).map_err(value_err))
        .collect()
}

/// A parsed expression in one variable.
#[pyclass(frozen, skip_from_py_object, module = "gdsys")]
#[derive(Clone)]
pub struct Expression {
    inner: exprlang::Expression,
}

#[pymethods]
impl Expression {
    #[new]
    #[pyo3(signature = (source, var = "t"))]
    fn new(source: &str, var: &str) -> PyResult<Self> {
        let inner = exprlang::parse_with_var(source, var).map_err(value_err)?;
        Ok(Expression { inner })
    }

    fn __call__(&self, x: f64) -> PyResult<f64> {
        self.inner.eval(x).map_err(value_err)
    }

    fn eval(&self, x: f64) -> PyResult<f64> {
        self.__call__(x)
    }

    fn derivative(&self) -> Expression {
        Expression { inner: self.inner.differentiate() }
    }

    /// self ∘ inner
    fn compose(&self, inner: &Expression) -> Expression {
        Expression { inner: self.inner.compose(&inner.inner) }
    }

    #[getter]
    fn var(&self) -> &str {
        self.inner.var()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expression({:?})", self.inner.to_string())
    }
}

/// A guided dynamical system built from a JSON job config.
#[pyclass(frozen, module = "gdsys")]
pub struct GuidedSystem {
    inner: core_gds::GuidedSystem,
    max_cells: usize,
}

#[pymethods]
impl GuidedSystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = gds_core::cli::parse_config(text).map_err(value_err)?;
        let space = cfg.space.ok_or_else(|| value_err("config has no space"))?;
        let inner = core_gds::GuidedSystem::new(space, cfg.maps, cfg.guiding, cfg.tolerances).map_err(value_err)?;
        Ok(GuidedSystem { inner, max_cells: cfg.budgets.max_cells })
    }

    #[getter]
    fn generators(&self) -> usize {
        self.inner.generators.len()
    }

    /// Indices of the generators allowed at x.
    fn allowed(&self, x: f64) -> Vec<usize> {
        self.inner.allowed_generators(x)
    }

    fn step(&self, i: usize, x: f64) -> PyResult<f64> {
        if i >= self.inner.generators.len() {
            return Err(value_err(format!("no generator {i}")));
        }
        Ok(self.inner.step(i, x))
    }

    #[pyo3(signature = (eps = 0.01, depth = 100_000))]
    fn probe<'py>(&self, py: Python<'py>, eps: f64, depth: usize) -> PyResult<Bound<'py, PyAny>> {
        let opts = OrbitOptions { max_cells: self.max_cells };
        let v = py.detach(|| core_gds::probe_minimality(&self.inner, eps, depth, &opts));
        to_py(py, &v)
    }
}

/// A validated P-configuration on [a₀, a_N].
#[pyclass(frozen, module = "gdsys")]
pub struct PConfiguration {
    inner: pconf::PConfiguration,
}

#[pymethods]
impl PConfiguration {
    #[new]
    #[pyo3(signature = (maps, anchors, tol = 1e-9))]
    fn new(maps: Vec<String>, anchors: Vec<f64>, tol: f64) -> PyResult<Self> {
        let inner = pconf::validate_pconfiguration(parse_maps(&maps)?, anchors, tol).map_err(value_err)?;
        Ok(PConfiguration { inner })
    }

    #[getter]
    fn interval(&self) -> (f64, f64) {
        self.inner.interval()
    }

    /// Solves f − Σ f∘δᵢ = h with f′(c) = μ; returns (nodes, values, diagnostics).
    #[pyo3(signature = (h, c, mu, grid = 512))]
    fn solve_ivp<'py>(
        &self,
        py: Python<'py>,
        h: &str,
        c: f64,
        mu: f64,
        grid: usize,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Bound<'py, PyAny>)> {
        let h = exprlang::parse(h).map_err(value_err)?;
        let problem = IvpProblem::new(self.inner.clone(), HData::Expr(h), c, mu);
        let (f, diag) = py.detach(|| pconf::solve_ivp(&problem, grid)).map_err(runtime_err)?;
        Ok((f.nodes(), f.values, to_py(py, &diag)?))
    }
}

/// Dirichlet data on the curved triangle bounded by the axes and Γ.
#[pyclass(frozen, module = "gdsys")]
pub struct BoundaryProblem {
    inner: bvp::BoundaryProblem,
}

#[pymethods]
impl BoundaryProblem {
    #[new]
    #[pyo3(signature = (alpha1, alpha2, g1, g2, g_gamma, m = 1.0, n = 1.0))]
    fn new(alpha1: &str, alpha2: &str, g1: &str, g2: &str, g_gamma: &str, m: f64, n: f64) -> PyResult<Self> {
        let inner = bvp::BoundaryProblem::parse(alpha1, alpha2, m, n, g1, g2, g_gamma).map_err(value_err)?;
        Ok(BoundaryProblem { inner })
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.inner.contains(x, y)
    }

    #[pyo3(signature = (eps = 0.01, depth = 100_000))]
    fn analyze<'py>(&self, py: Python<'py>, eps: f64, depth: usize) -> PyResult<Bound<'py, PyAny>> {
        let sys = bvp::build_boundary_system(&self.inner).map_err(value_err)?;
        let r = py.detach(|| bvp::analyze_solvability(&sys, eps, depth));
        to_py(py, &r)
    }

    #[pyo3(signature = (grid = 512, gauge = 0.0, lattice = bvp::DEFAULT_LATTICE))]
    fn solve(&self, py: Python<'_>, grid: usize, gauge: f64, lattice: usize) -> PyResult<BvpSolution> {
        let sys = bvp::build_boundary_system(&self.inner).map_err(value_err)?;
        let sol = py
            .detach(|| {
                let mut sol = bvp::solve_bvp_with_gauge(&sys, grid, gauge)?;
                if lattice != sol.verification.lattice {
                    sol.reverify(lattice);
                }
                Ok::<_, bvp::BvpError>(sol)
            })
            .map_err(runtime_err)?;
        Ok(BvpSolution { inner: sol })
    }
}

#[pyclass(frozen, module = "gdsys")]
pub struct BvpSolution {
    inner: bvp::BvpSolution,
}

#[pymethods]
impl BvpSolution {
    /// u(x, y), or None outside the closed domain.
    fn u(&self, x: f64, y: f64) -> Option<f64> {
        self.inner.u(x, y)
    }

    #[getter]
    fn verification<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.verification)
    }

    fn lattice_csv(&self, k: usize) -> String {
        self.inner.lattice_csv(k)
    }
}

/// Runs the command-line tool in-process; returns (exit code, stdout, stderr).
#[pyfunction]
fn run(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("gds".to_owned()).chain(args);
    let code = gds_core::cli::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

#[pymodule]
pub fn gdsys(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Expression>()?;
    m.add_class::<GuidedSystem>()?;
    m.add_class::<PConfiguration>()?;
    m.add_class::<BoundaryProblem>()?;
    m.add_class::<BvpSolution>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
